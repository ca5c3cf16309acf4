//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::Pruning;
use crate::error::{Error, Result};
use crate::laws::{Atom, CountLaw, Displacement, ReproductionLaw};
use crate::martingales::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Params,
    Simulate,
    MaxLaw,
    Clt,
    Decoration,
    SpineCheck,
    SlowMaxLaw,
    MeanExploratory,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Params => "params",
            Suite::Simulate => "simulate",
            Suite::MaxLaw => "max_law",
            Suite::Clt => "clt",
            Suite::Decoration => "decoration",
            Suite::SpineCheck => "spine_check",
            Suite::SlowMaxLaw => "slow_max_law",
            Suite::MeanExploratory => "mean_exploratory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    /// `children` i.i.d. Gaussian displacements.
    Gaussian {
        #[serde(default = "two")]
        children: u32,
        #[serde(default)]
        mean: f64,
        variance: f64,
    },
    Laplace {
        #[serde(default = "two")]
        children: u32,
        scale: f64,
    },
    /// Poisson many children with Gaussian displacements.
    PoissonGaussian {
        mean_children: f64,
        #[serde(default)]
        mean: f64,
        variance: f64,
    },
    Atoms {
        atoms: Vec<AtomConfig>,
    },
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub probability: f64,
    pub displacements: Vec<f64>,
}

impl LawConfig {
    pub fn build(&self) -> Result<ReproductionLaw> {
        match self {
            LawConfig::Gaussian { children, mean, variance } => ReproductionLaw::deterministic(
                *children,
                Displacement::Gaussian {
                    mean: *mean,
                    variance: *variance,
                },
            ),
            LawConfig::Laplace { children, scale } => {
                ReproductionLaw::deterministic(*children, Displacement::Laplace { scale: *scale })
            }
            LawConfig::PoissonGaussian {
                mean_children,
                mean,
                variance,
            } => ReproductionLaw::poisson(
                *mean_children,
                Displacement::Gaussian {
                    mean: *mean,
                    variance: *variance,
                },
            ),
            LawConfig::Atoms { atoms } => ReproductionLaw::finite_atomic(
                atoms
                    .iter()
                    .map(|a| Atom {
                        probability: a.probability,
                        displacements: a.displacements.clone(),
                    })
                    .collect(),
            ),
        }
    }

    /// Count law of the built reproduction law, for reporting.
    pub fn count(&self) -> Option<CountLaw> {
        match self {
            LawConfig::Gaussian { children, .. } | LawConfig::Laplace { children, .. } => {
                Some(CountLaw::Deterministic(*children))
            }
            LawConfig::PoissonGaussian { mean_children, .. } => Some(CountLaw::Poisson(*mean_children)),
            LawConfig::Atoms { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Laws {
    pub first: LawConfig,
    pub second: LawConfig,
}

/// How large-horizon suites obtain `M_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PruningConfig {
    None,
    /// Drop particles more than `width` below the generation maximum;
    /// `width` defaults to 10/θ.
    Window { width: Option<f64> },
    TopK { k: usize },
    /// Exact simulation to `handoff`, then an exact draw from the backward
    /// maximum tables.
    Completion {
        #[serde(default = "default_handoff")]
        handoff: u64,
        #[serde(default = "default_grid_step")]
        grid_step: f64,
    },
}

fn default_handoff() -> u64 {
    10
}

fn default_grid_step() -> f64 {
    0.02
}

impl Default for PruningConfig {
    fn default() -> Self {
        PruningConfig::Window { width: None }
    }
}

impl PruningConfig {
    pub fn engine_pruning(&self, theta: f64) -> Option<Pruning> {
        match *self {
            PruningConfig::None => Some(Pruning::None),
            PruningConfig::Window { width } => Some(width.map_or_else(|| Pruning::default_window(theta), Pruning::Window)),
            PruningConfig::TopK { k } => Some(Pruning::TopK(k)),
            PruningConfig::Completion { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionConfig {
    Constant { value: f64 },
    Ramp { lo: f64, hi: f64, height: f64 },
    CosineBump { center: f64, half_width: f64 },
}

impl Default for TestFunctionConfig {
    fn default() -> Self {
        TestFunctionConfig::Ramp {
            lo: -1.0,
            hi: 1.0,
            height: 1.0,
        }
    }
}

impl TestFunctionConfig {
    pub fn build(&self) -> TestFunction {
        match *self {
            TestFunctionConfig::Constant { value } => TestFunction::Constant(value),
            TestFunctionConfig::Ramp { lo, hi, height } => TestFunction::ClampedRamp { lo, hi, height },
            TestFunctionConfig::CosineBump { center, half_width } => TestFunction::CosineBump { center, half_width },
        }
    }
}

/// Pass/fail thresholds. Defaults are the acceptance tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub max_law_ks: f64,
    pub tail_slope_rel: f64,
    pub lambda_rel: f64,
    pub iqr_rel: f64,
    pub fit_ks: f64,
    pub overshoot_ks: f64,
    pub second_point_ks: f64,
    pub rate_band_factor: f64,
    pub standard_errors: f64,
    pub clt_sup_fraction: f64,
    pub spine_ks: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_law_ks: 0.04,
            tail_slope_rel: 0.1,
            lambda_rel: 0.2,
            iqr_rel: 0.25,
            fit_ks: 0.05,
            overshoot_ks: 0.05,
            second_point_ks: 0.05,
            rate_band_factor: 20.0,
            standard_errors: 4.0,
            clt_sup_fraction: 0.1,
            spine_ks: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub suite: Option<Suite>,
    pub laws: Laws,
    pub t: f64,
    pub horizons: Vec<u64>,
    pub replicates: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub pruning: PruningConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Tilt for the martingale and spine suites; defaults to 0.5 and θ₁*.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub test_function: TestFunctionConfig,
    /// Trial cap for the decoration sampler.
    #[serde(default = "default_trial_budget")]
    pub trial_budget: u64,
    /// Pool size and generations for martingale-limit samples.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_pool_generations")]
    pub pool_generations: usize,
    #[serde(default = "default_bootstrap_reps")]
    pub bootstrap_reps: usize,
    /// Downgrade partial-result errors to warnings.
    #[serde(default)]
    pub allow_partial: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trial_budget() -> u64 {
    10_000_000
}

fn default_pool_size() -> usize {
    20_000
}

fn default_pool_generations() -> usize {
    100
}

fn default_bootstrap_reps() -> usize {
    1000
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses a config, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid("", e.to_string()))?;
        let value = match value {
            serde_json::Value::Object(mut m) if m.contains_key("manifest_version") => {
                m.remove("config").ok_or_else(|| invalid("config", "manifest has no config"))?
            }
            v => v,
        };
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(invalid("horizons", "at least one horizon is required"));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("horizons", "horizons must be strictly increasing"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "at least one replicate is required"));
        }
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(invalid("t", format!("split fraction must lie in (0, 1), got {}", self.t)));
        }
        self.laws
            .first
            .build()
            .map_err(|e| invalid("laws.first", e.to_string()))?;
        self.laws
            .second
            .build()
            .map_err(|e| invalid("laws.second", e.to_string()))?;
        if let Some(th) = self.theta {
            if !(th > 0.0 && th.is_finite()) {
                return Err(invalid("theta", format!("tilt must be positive, got {th}")));
            }
        }
        self.test_function
            .build()
            .validate()
            .map_err(|e| invalid("test_function", e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "suite": "params",
        "laws": {"first": {"kind": "gaussian", "variance": 1.0},
                 "second": {"kind": "gaussian", "variance": 4.0}},
        "t": 0.5, "horizons": [10, 20], "replicates": 4, "master_seed": 7
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(c.suite, Some(Suite::Params));
        assert_eq!(c.pruning, PruningConfig::Window { width: None });
        assert_eq!(c.thresholds, Thresholds::default());
    }

    #[test]
    fn empty_horizons_name_the_field() {
        let text = BASE.replace("[10, 20]", "[]");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "horizons"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_paths() {
        let text = BASE.replace("\"variance\": 4.0", "\"variance\": \"big\"");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("laws.second"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unordered_horizons_and_zero_replicates() {
        assert!(ExperimentConfig::from_json(&BASE.replace("[10, 20]", "[20, 10]")).is_err());
        assert!(ExperimentConfig::from_json(&BASE.replace("\"replicates\": 4", "\"replicates\": 0")).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        let manifest = serde_json::json!({"manifest_version": 1, "config": c});
        let back = ExperimentConfig::from_json(&manifest.to_string()).unwrap();
        assert_eq!(back, c);
    }
}
