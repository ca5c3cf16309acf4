//! Extremal processes, decorations and shifted-Gumbel mixtures.

use rayon::prelude::*;

use crate::engine::{fold_prefix, Model, DEFAULT_MEMORY_BUDGET};
use crate::error::{Error, Result};
use crate::laws::ReproductionLaw;
use crate::maxcdf::{sample_max_given, MaxCdfTables};
use crate::numeric::golden_section_min;
use crate::rng::{child_label, replicate_seed, root_label, Purpose, Stream};
use crate::stats::{bootstrap_ci, ks_distance_to, EmpiricalCdf, FitResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointOrigin {
    ExtremalProcess { m_n: f64, cutoff: f64 },
    /// Positions relative to the maximum of a run conditioned to exceed `threshold`.
    Decoration { n: u64, threshold: f64, depth_window: f64 },
}

impl PointOrigin {
    /// Lowest position at which the sample is complete.
    pub fn window_edge(&self) -> f64 {
        match *self {
            PointOrigin::ExtremalProcess { cutoff, .. } => cutoff,
            PointOrigin::Decoration { depth_window, .. } => -depth_window,
        }
    }
}

/// One realisation of a finite point process, sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    pub points: Vec<f64>,
    pub origin: PointOrigin,
    pub weight: f64,
    /// Size of the population the points were extracted from.
    pub population: usize,
}

/// `φ(x) = 0` below `a`, linear up to `c` on `[a, b]`, `c` above `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampFunction {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RampFunction {
    /// Height used for the indicator limit; larger values underflow `e^{−c}`.
    pub const MAX_HEIGHT: f64 = 700.0;

    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Parameter(format!("ramp needs finite a < b, got [{a}, {b}]")));
        }
        if !(c > 0.0 && c <= Self::MAX_HEIGHT) {
            return Err(Error::Parameter(format!("ramp height must lie in (0, 700], got {c}")));
        }
        Ok(Self { a, b, c })
    }

    /// Steepest ramp between `a` and `b`: `e^{−Σφ}` approximates `1{no point ≥ b}`.
    pub fn indicator_limit(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, Self::MAX_HEIGHT)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.a {
            0.0
        } else if x >= self.b {
            self.c
        } else {
            self.c * (x - self.a) / (self.b - self.a)
        }
    }
}

/// Weighted mean of `e^{−Σ φ(x_i)}` and its standard error.
pub fn empirical_laplace(samples: &[PointSample], phi: &RampFunction) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("Laplace functional needs samples".into()));
    }
    for s in samples {
        let edge = s.origin.window_edge();
        if phi.a < edge {
            return Err(Error::Coverage {
                phi_cutoff: phi.a,
                window_edge: edge,
            });
        }
    }
    let values: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let sum: f64 = s.points.iter().map(|&x| phi.eval(x)).sum();
            ((-sum).exp(), s.weight)
        })
        .collect();
    let wsum: f64 = values.iter().map(|v| v.1).sum();
    let mean = values.iter().map(|v| v.0 * v.1).sum::<f64>() / wsum;
    let k = values.len() as f64;
    let stderr = if values.len() > 1 {
        // Effective-sample-size form; reduces to s/√k for equal weights.
        let var = values.iter().map(|v| v.1 * (v.0 - mean).powi(2)).sum::<f64>() / wsum * k / (k - 1.0);
        let w2: f64 = values.iter().map(|v| v.1 * v.1).sum();
        (var * w2 / (wsum * wsum)).sqrt()
    } else {
        f64::NAN
    };
    Ok((mean, stderr))
}

/// Tuning of the decoration sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorationConfig {
    pub n: u64,
    pub theta: f64,
    pub target_accepts: usize,
    /// Maximum number of trials before giving up.
    pub max_trials: u64,
    /// Points deeper than this below the maximum are dropped.
    pub depth_window: f64,
    /// A particle is dropped when its subtree reaches the barrier with
    /// probability below this; the dropped probability is accounted for.
    pub prune_epsilon: f64,
    pub grid_step: f64,
}

impl DecorationConfig {
    pub fn new(n: u64, theta: f64, target_accepts: usize, max_trials: u64) -> Self {
        Self {
            n,
            theta,
            target_accepts,
            max_trials,
            depth_window: 15.0 / theta,
            prune_epsilon: 1e-10,
            grid_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecorationRun {
    pub samples: Vec<PointSample>,
    /// `M_n − κ′(θ)n` of each accepted trial.
    pub overshoots: Vec<f64>,
    /// Seed of the trial behind each sample.
    pub trial_seeds: Vec<u64>,
    pub trials: u64,
    pub threshold: f64,
    pub depth_window: f64,
    pub acceptance_rate: f64,
    /// 95% Wilson interval for the acceptance probability.
    pub rate_ci: (f64, f64),
    /// `P(M_n ≥ threshold)` read off the maximum tables, when available.
    pub table_rate: Option<f64>,
    /// Mean over trials of the probability mass dropped by barrier pruning:
    /// bounds the total variation between the pruned and exact samplers.
    pub pruned_mass: f64,
}

impl DecorationRun {
    /// Second point of every sample; `−∞` when it lies below the window.
    pub fn second_points(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.points.get(1).copied().unwrap_or(f64::NEG_INFINITY))
            .collect()
    }
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Samples the point process seen from the maximum of a plain `law2` tree of
/// depth `n`, conditioned on `M_n ≥ κ′(θ)n`, by rejection.
pub fn sample_decoration(
    law2: &ReproductionLaw,
    theta: f64,
    n: u64,
    target_accepts: usize,
    seed: u64,
    budget: u64,
) -> Result<DecorationRun> {
    sample_decoration_with(law2, &DecorationConfig::new(n, theta, target_accepts, budget), seed)
}

struct Barrier<'a> {
    tables: Option<&'a MaxCdfTables>,
    level: f64,
    epsilon: f64,
}

impl Barrier<'_> {
    /// Probability that a particle at `x` in generation `g` has a
    /// generation-`n` descendant at or above the level.
    fn reach(&self, g: u64, x: f64) -> Option<f64> {
        self.tables?.table(g).map(|t| t.survival_at(self.level - x))
    }
}

/// Plain tree of depth `n` in generation order, dropping particles that
/// cannot reach the barrier. Returns final positions and the dropped mass.
fn barrier_tree(law: &ReproductionLaw, n: u64, seed: u64, barrier: &Barrier) -> Result<(Vec<f64>, f64)> {
    let mut pop = vec![(0.0f64, root_label(seed))];
    let mut next = Vec::new();
    let mut off = Vec::new();
    let mut dropped = 0.0;
    for g in 1..=n {
        next.clear();
        for &(x, label) in &pop {
            let mut s = Stream::for_purpose(label, Purpose::Offspring);
            law.sample_offspring_into(&mut s, &mut off);
            for (rank, &l) in off.iter().enumerate() {
                let y = x + l;
                if g < n {
                    if let Some(q) = barrier.reach(g, y) {
                        if q < barrier.epsilon {
                            dropped += q;
                            continue;
                        }
                    }
                }
                next.push((y, child_label(label, rank)));
            }
        }
        if next.len() > DEFAULT_MEMORY_BUDGET {
            return Err(Error::Budget {
                budget: DEFAULT_MEMORY_BUDGET,
                generation: g as usize,
                population: next.len(),
            });
        }
        std::mem::swap(&mut pop, &mut next);
        if pop.is_empty() {
            break;
        }
    }
    Ok((pop.into_iter().map(|p| p.0).collect(), dropped))
}

/// Trials are processed in batches of this many, in parallel within a batch.
const DECORATION_BATCH: u64 = 256;

pub fn sample_decoration_with(law2: &ReproductionLaw, cfg: &DecorationConfig, seed: u64) -> Result<DecorationRun> {
    let tilt = law2.kappa_derivatives(cfg.theta)?;
    let gap = law2.critical_gap(cfg.theta);
    if !(gap > 0.0) {
        return Err(Error::Parameter(format!(
            "conditioning on M_n ≥ κ′(θ)n needs θκ′(θ) > κ(θ); gap is {gap}"
        )));
    }
    if cfg.n == 0 || cfg.target_accepts == 0 {
        return Err(Error::Parameter("decoration needs n ≥ 1 and at least one accept".into()));
    }
    if !(cfg.depth_window > 0.0) {
        return Err(Error::Parameter("depth window must be positive".into()));
    }
    let threshold = tilt.kappa_prime * cfg.n as f64;
    let model = Model::Homogeneous(law2.clone());
    let tables = match MaxCdfTables::build(&model, cfg.n, cfg.grid_step, |_| true) {
        Ok(t) => Some(t),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let accept_barrier = Barrier {
        tables: tables.as_ref(),
        level: threshold,
        epsilon: cfg.prune_epsilon,
    };
    let point_barrier = Barrier {
        tables: tables.as_ref(),
        level: threshold - cfg.depth_window,
        epsilon: cfg.prune_epsilon,
    };
    let table_rate = tables
        .as_ref()
        .and_then(|t| t.table(0))
        .map(|t| t.survival_at(threshold));

    let mut run = DecorationRun {
        samples: Vec::new(),
        overshoots: Vec::new(),
        trial_seeds: Vec::new(),
        trials: 0,
        threshold,
        depth_window: cfg.depth_window,
        acceptance_rate: 0.0,
        rate_ci: (0.0, 1.0),
        table_rate,
        pruned_mass: 0.0,
    };
    let mut dropped_total = 0.0;
    let mut start = 0u64;
    while run.samples.len() < cfg.target_accepts && start < cfg.max_trials {
        let end = (start + DECORATION_BATCH).min(cfg.max_trials);
        let batch: Vec<(f64, Option<(PointSample, f64)>)> = (start..end)
            .into_par_iter()
            .map(|i| -> Result<_> {
                let trial_seed = replicate_seed(seed, i);
                let (leaves, dropped) = barrier_tree(law2, cfg.n, trial_seed, &accept_barrier)?;
                let max = leaves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(max >= threshold) {
                    return Ok((dropped, None));
                }
                // Same labels, looser barrier: a superset of the first tree.
                let (leaves, _) = barrier_tree(law2, cfg.n, trial_seed, &point_barrier)?;
                let m = leaves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut points: Vec<f64> = leaves
                    .iter()
                    .map(|&v| v - m)
                    .filter(|&x| x >= -cfg.depth_window)
                    .collect();
                points.sort_by(|a, b| b.total_cmp(a));
                let sample = PointSample {
                    points,
                    origin: PointOrigin::Decoration {
                        n: cfg.n,
                        threshold,
                        depth_window: cfg.depth_window,
                    },
                    weight: 1.0,
                    population: leaves.len(),
                };
                Ok((dropped, Some((sample, m - threshold))))
            })
            .collect::<Result<_>>()?;
        for (k, (dropped, outcome)) in batch.into_iter().enumerate() {
            run.trials += 1;
            dropped_total += dropped;
            if let Some((sample, overshoot)) = outcome {
                run.samples.push(sample);
                run.overshoots.push(overshoot);
                run.trial_seeds.push(replicate_seed(seed, start + k as u64));
                if run.samples.len() == cfg.target_accepts {
                    break;
                }
            }
        }
        start = end;
    }
    let accepted = run.samples.len();
    run.acceptance_rate = accepted as f64 / run.trials.max(1) as f64;
    run.rate_ci = wilson_interval(accepted as u64, run.trials, 1.96);
    run.pruned_mass = dropped_total / run.trials.max(1) as f64;
    if accepted < cfg.target_accepts {
        return Err(Error::PartialResult {
            trials: run.trials,
            accepted,
            rate: run.acceptance_rate,
        });
    }
    Ok(run)
}

/// `(1/m) Σ_j exp(−λ w_j e^{−θy})`.
pub fn gumbel_mixture_cdf(w_samples: &[f64], lambda: f64, theta: f64, y: f64) -> f64 {
    if w_samples.is_empty() {
        return f64::NAN;
    }
    let s = lambda * (-theta * y).exp();
    w_samples.iter().map(|&w| (-s * w).exp()).sum::<f64>() / w_samples.len() as f64
}

/// The mixture with its Laplace transform `H(s) = mean e^{−s w}` tabulated
/// on a grid in `log s`, for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct GumbelMixture {
    w: Vec<f64>,
    theta: f64,
    log_s_lo: f64,
    log_s_step: f64,
    h: Vec<f64>,
}

impl GumbelMixture {
    const LOG_S_LO: f64 = -40.0;
    const LOG_S_HI: f64 = 25.0;
    const LOG_S_STEP: f64 = 0.01;

    pub fn new(w_samples: &[f64], theta: f64) -> Result<Self> {
        if w_samples.is_empty() {
            return Err(Error::Empty("mixture needs at least one w sample".into()));
        }
        if w_samples.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("w samples must be finite and non-negative".into()));
        }
        if !(theta > 0.0) {
            return Err(Error::Parameter(format!("θ must be positive, got {theta}")));
        }
        let count = ((Self::LOG_S_HI - Self::LOG_S_LO) / Self::LOG_S_STEP).round() as usize + 1;
        let w = w_samples.to_vec();
        let h = (0..count)
            .into_par_iter()
            .map(|i| {
                let s = (Self::LOG_S_LO + i as f64 * Self::LOG_S_STEP).exp();
                w.iter().map(|&x| (-s * x).exp()).sum::<f64>() / w.len() as f64
            })
            .collect();
        Ok(Self {
            w,
            theta,
            log_s_lo: Self::LOG_S_LO,
            log_s_step: Self::LOG_S_STEP,
            h,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn w_samples(&self) -> &[f64] {
        &self.w
    }

    /// `mean e^{−s w}` at `s = e^u`, interpolated; constant beyond the grid,
    /// where it is within `e^{−40}·max w` of 1 or as close to 0 as at `e^{25}`.
    #[inline]
    pub fn laplace_log(&self, u: f64) -> f64 {
        let x = (u - self.log_s_lo) / self.log_s_step;
        if !(x > 0.0) {
            return self.h[0];
        }
        let i = x as usize;
        if i + 1 >= self.h.len() {
            return self.h[self.h.len() - 1];
        }
        let f = x - i as f64;
        self.h[i] * (1.0 - f) + self.h[i + 1] * f
    }

    /// `mean e^{−s w}`.
    pub fn laplace(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        self.laplace_log(s.ln())
    }

    pub fn cdf(&self, lambda: f64, y: f64) -> f64 {
        self.laplace_log(lambda.ln() - self.theta * y)
    }

    /// Sup distance between the empirical CDF and the mixture with shift
    /// `λ = e^{log_lambda}`.
    pub fn ks_log(&self, data: &EmpiricalCdf, log_lambda: f64) -> f64 {
        ks_distance_to(data, |y| self.laplace_log(log_lambda - self.theta * y))
    }

    pub fn ks(&self, data: &EmpiricalCdf, lambda: f64) -> f64 {
        self.ks_log(data, lambda.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub bootstrap_reps: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bootstrap_reps: 1000,
            level: 0.9,
            seed: 0x4649_5421,
        }
    }
}

/// Scan half-width in `log λ` around the median-matching guess, and spacing.
const SCAN_HALF_WIDTH: f64 = 8.0;
const SCAN_STEP: f64 = 0.1;

/// `λ` at which the mixture's median matches the data median.
fn median_guess(mix: &GumbelMixture, data: &EmpiricalCdf) -> f64 {
    // H is non-increasing in s; bisect H(s) = 1/2 in log s.
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mix.laplace(mid.exp()) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_med = (0.5 * (lo + hi)).exp();
    s_med * (mix.theta * data.quantile(0.5)).exp()
}

/// Grid pre-scan in `log λ` followed by golden section; returns `(λ̂, ks)`.
fn fit_lambda(mix: &GumbelMixture, data: &EmpiricalCdf, check_shape: bool) -> Result<(f64, f64)> {
    let center = median_guess(mix, data).ln();
    let steps = (SCAN_HALF_WIDTH / SCAN_STEP).round() as i64;
    let grid: Vec<(f64, f64)> = (-steps..=steps)
        .map(|k| {
            let u = center + k as f64 * SCAN_STEP;
            (u, mix.ks_log(data, u))
        })
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("non-empty scan");
    if check_shape {
        const TOL: f64 = 1e-9;
        let falls = grid[..=best].windows(2).all(|p| p[1].1 <= p[0].1 + TOL);
        let rises = grid[best..].windows(2).all(|p| p[1].1 >= p[0].1 - TOL);
        if !(falls && rises) {
            return Err(Error::FitAmbiguity("KS profile in log λ has several local minima".into()));
        }
        if best == 0 || best == grid.len() - 1 {
            return Err(Error::FitAmbiguity("KS profile is minimised at the edge of the scan".into()));
        }
    }
    let lo = grid[best.saturating_sub(1)].0;
    let hi = grid[(best + 1).min(grid.len() - 1)].0;
    let (u, ks) = golden_section_min(|u| mix.ks_log(data, u), lo, hi, 1e-7, 200);
    // Golden section may land on a plateau edge; keep the scan winner if better.
    if grid[best].1 < ks {
        Ok((grid[best].0.exp(), grid[best].1))
    } else {
        Ok((u.exp(), ks))
    }
}

/// Fits `λ` in `F(y) = E exp(−λ W e^{−θy})` to the empirical law of
/// `M_n − m_n` in sup norm. The bootstrap resamples the maxima with the
/// `w` sample held fixed; its interval is widened to contain `λ̂`.
pub fn fit_shift_constant(
    max_cdf: &EmpiricalCdf,
    w_samples: &[f64],
    theta: f64,
    n: u64,
    opts: FitOptions,
) -> Result<FitResult> {
    let mix = GumbelMixture::new(w_samples, theta)?;
    fit_with_mixture(max_cdf, &mix, n, opts)
}

pub fn fit_with_mixture(max_cdf: &EmpiricalCdf, mix: &GumbelMixture, n: u64, opts: FitOptions) -> Result<FitResult> {
    let (lambda_hat, ks_at_fit) = fit_lambda(mix, max_cdf, true)?;
    let (lo, hi) = bootstrap_ci(
        |resample| {
            EmpiricalCdf::new(resample.to_vec())
                .and_then(|c| fit_lambda(mix, &c, false))
                .map_or(f64::NAN, |r| r.0)
        },
        max_cdf.sorted_values(),
        opts.bootstrap_reps,
        opts.level,
        opts.seed,
    )?;
    Ok(FitResult {
        lambda_hat,
        ks_at_fit,
        bootstrap_ci: (lo.min(lambda_hat), hi.max(lambda_hat)),
        theta: mix.theta,
        n,
        w_sample_count: mix.w.len(),
    })
}

/// How [`max_law_samples`] produces `M_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxLawMethod {
    /// Unpruned depth-first enumeration of the whole tree.
    Exact,
    /// Exact simulation to generation `handoff`, then an exact draw of the
    /// maximum given those positions from the backward tables.
    Completion { handoff: u64, grid_step: f64 },
}

/// `reps` independent draws of `M_n − m_n`, replicate `i` seeded by
/// `replicate_seed(seed, i)`.
pub fn max_law_samples(model: &Model, n: u64, m_n: f64, reps: u64, seed: u64, method: MaxLawMethod) -> Result<Vec<f64>> {
    match method {
        MaxLawMethod::Exact => (0..reps)
            .into_par_iter()
            .map(|i| crate::engine::unpruned_max(model, n, replicate_seed(seed, i)).map(|m| m - m_n))
            .collect(),
        MaxLawMethod::Completion { handoff, grid_step } => {
            if handoff == 0 || handoff >= n {
                return Err(Error::Parameter(format!("handoff {handoff} must lie in [1, {n})")));
            }
            let tables = MaxCdfTables::build(model, n, grid_step, |g| g == handoff)?;
            let table = tables.table(handoff).expect("kept");
            (0..reps)
                .into_par_iter()
                .map(|i| {
                    let rs = replicate_seed(seed, i);
                    let mut front = Vec::new();
                    fold_prefix(model, n, handoff, rs, |x| front.push(x))?;
                    let mut s = Stream::replicate(rs, 0, Purpose::Completion);
                    Ok(sample_max_given(table, &front, s.open01()) - m_n)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::Atom;
    use approx::assert_relative_eq;

    fn two_outcome() -> ReproductionLaw {
        ReproductionLaw::finite_atomic(vec![
            Atom { probability: 0.5, displacements: vec![0.0, 0.0] },
            Atom { probability: 0.5, displacements: vec![1.0, 0.0] },
        ])
        .unwrap()
    }

    #[test]
    fn one_step_decoration_is_the_upper_outcome() {
        // κ′(3) = e³/(3+e³) ≈ 0.87 sits between the two outcome maxima.
        let law = two_outcome();
        let run = sample_decoration(&law, 3.0, 1, 200, 5, 10_000).unwrap();
        assert!(run.threshold > 0.0 && run.threshold < 1.0);
        for s in &run.samples {
            assert_eq!(s.points, vec![0.0, -1.0]);
        }
        let (lo, hi) = run.rate_ci;
        assert!(lo < 0.5 && 0.5 < hi);
        let phi = RampFunction::new(-1.5, -0.5, 1.0).unwrap();
        let (est, _) = empirical_laplace(&run.samples, &phi).unwrap();
        assert_relative_eq!(est, (-1.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(est, 0.22313, epsilon = 1e-5);
    }

    #[test]
    fn decoration_rejects_non_rare_conditioning() {
        let law = ReproductionLaw::binary_gaussian(0.0, 1.0).unwrap();
        assert!(matches!(sample_decoration(&law, 0.5, 5, 10, 1, 100), Err(Error::Parameter(_))));
    }

    #[test]
    fn decoration_budget_gives_partial_result() {
        let law = ReproductionLaw::binary_gaussian(0.0, 1.44).unwrap();
        match sample_decoration(&law, 1.06598, 12, 1_000_000, 1, 300) {
            Err(Error::PartialResult { trials, accepted, .. }) => {
                assert_eq!(trials, 300);
                assert!(accepted > 0);
            }
            other => panic!("expected partial result, got {other:?}"),
        }
    }

    #[test]
    fn pruned_acceptance_matches_table_probability() {
        let law = ReproductionLaw::binary_gaussian(0.0, 1.44).unwrap();
        let run = sample_decoration(&law, 1.06598, 10, 400, 3, 1_000_000).unwrap();
        let exact = run.table_rate.unwrap();
        let se = (exact * (1.0 - exact) / run.trials as f64).sqrt();
        assert!((run.acceptance_rate - exact).abs() < 4.0 * se, "{} vs {exact}", run.acceptance_rate);
        assert!(run.pruned_mass < 1e-6);
        for s in &run.samples {
            assert_eq!(s.points[0], 0.0);
            assert!(s.points.windows(2).all(|p| p[0] >= p[1]));
        }
        assert!(run.overshoots.iter().all(|&o| o >= 0.0));
    }

    #[test]
    fn pruning_does_not_change_accepted_trees() {
        // Against the unpruned tree with the same seeds.
        let law = ReproductionLaw::binary_gaussian(0.0, 1.44).unwrap();
        let run = sample_decoration(&law, 1.06598, 8, 50, 4, 1_000_000).unwrap();
        let model = Model::Homogeneous(law);
        for (s, &seed) in run.samples.iter().zip(&run.trial_seeds) {
            let leaves = crate::engine::leaf_positions(&model, 8, seed).unwrap();
            let m = leaves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut pts: Vec<f64> = leaves.iter().map(|v| v - m).filter(|&x| x >= -run.depth_window).collect();
            pts.sort_by(|a, b| b.total_cmp(a));
            assert_eq!(s.points, pts);
        }
    }

    #[test]
    fn laplace_trivial_cases() {
        let s = PointSample {
            points: vec![0.0, -0.4, -2.0],
            origin: PointOrigin::Decoration { n: 3, threshold: 1.0, depth_window: 5.0 },
            weight: 1.0,
            population: 8,
        };
        let phi = RampFunction::new(0.5, 1.0, 3.0).unwrap();
        assert_eq!(empirical_laplace(&[s.clone()], &phi).unwrap().0, 1.0);
        let ind = RampFunction::indicator_limit(-0.5, -0.45).unwrap();
        let (est, _) = empirical_laplace(&[s.clone()], &ind).unwrap();
        assert!(est < 1e-300);
        let deep = RampFunction::new(-6.0, 0.0, 1.0).unwrap();
        assert!(matches!(empirical_laplace(&[s], &deep), Err(Error::Coverage { .. })));
    }

    #[test]
    fn mixture_cdf_cases() {
        assert_eq!(gumbel_mixture_cdf(&[0.0, 0.0], 2.0, 1.0, -5.0), 1.0);
        assert_relative_eq!(gumbel_mixture_cdf(&[1.0], 1.0, 1.0, 0.0), (-1f64).exp(), epsilon = 1e-15);
        let w = [0.3, 1.0, 2.5];
        let mut prev = 0.0;
        for k in -40..=40 {
            let y = k as f64 * 0.25;
            let f = gumbel_mixture_cdf(&w, 0.8, 1.3, y);
            assert!(f >= prev);
            assert!(gumbel_mixture_cdf(&w, 1.6, 1.3, y) <= f);
            prev = f;
        }
        let mix = GumbelMixture::new(&w, 1.3).unwrap();
        for k in -40..=40 {
            let y = k as f64 * 0.25;
            assert!((mix.cdf(0.8, y) - gumbel_mixture_cdf(&w, 0.8, 1.3, y)).abs() < 1e-4);
        }
    }

    fn gumbel_draws(lambda: f64, theta: f64, count: u64, seed: u64) -> Vec<f64> {
        (0..count)
            .map(|i| {
                let u = Stream::replicate(seed, i, Purpose::Replicate).open01();
                (lambda.ln() - (-u.ln()).ln()) / theta
            })
            .collect()
    }

    #[test]
    fn fit_recovers_known_shift() {
        let data = EmpiricalCdf::new(gumbel_draws(0.7, 1.0, 10_000, 9)).unwrap();
        let opts = FitOptions { bootstrap_reps: 200, ..FitOptions::default() };
        let fit = fit_shift_constant(&data, &[1.0; 50], 1.0, 0, opts).unwrap();
        assert!((0.63..=0.77).contains(&fit.lambda_hat), "{fit:?}");
        assert!(fit.bootstrap_ci.0 <= fit.lambda_hat && fit.lambda_hat <= fit.bootstrap_ci.1);
        assert!(fit_shift_constant(&data, &[], 1.0, 0, opts).is_err());
    }

    #[test]
    fn fit_obeys_location_shift_algebra() {
        // With w ≡ 1 the mixture is a Gumbel with location μ = ln λ / θ, so
        // the fit must agree with a direct location fit, and shifting the
        // data by δ multiplies λ̂ by e^{θδ}.
        let theta = 1.7;
        let raw = gumbel_draws(2.0, theta, 5000, 10);
        let data = EmpiricalCdf::new(raw.clone()).unwrap();
        let opts = FitOptions { bootstrap_reps: 10, ..FitOptions::default() };
        let fit = fit_shift_constant(&data, &[1.0], theta, 0, opts).unwrap();
        let gumbel = |mu: f64| ks_distance_to(&data, |y| (-(-theta * (y - mu)).exp()).exp());
        let (mu_hat, _) = golden_section_min(gumbel, -5.0, 5.0, 1e-10, 500);
        assert_relative_eq!(fit.lambda_hat, (theta * mu_hat).exp(), max_relative = 1e-3);
        let delta = 0.35;
        let shifted = EmpiricalCdf::new(raw.iter().map(|y| y + delta).collect()).unwrap();
        let fit2 = fit_shift_constant(&shifted, &[1.0], theta, 0, opts).unwrap();
        assert_relative_eq!(fit2.lambda_hat, fit.lambda_hat * (theta * delta).exp(), max_relative = 1e-3);
    }

    #[test]
    fn completion_and_exact_max_laws_agree() {
        let law = ReproductionLaw::binary_gaussian(0.0, 1.0).unwrap();
        let model = Model::Homogeneous(law);
        let a = max_law_samples(&model, 10, 0.0, 3000, 1, MaxLawMethod::Exact).unwrap();
        let b = max_law_samples(&model, 10, 0.0, 3000, 2, MaxLawMethod::Completion { handoff: 4, grid_step: 0.01 }).unwrap();
        let d = crate::stats::ks_distance(&EmpiricalCdf::new(a).unwrap(), &EmpiricalCdf::new(b).unwrap());
        assert!(d < crate::stats::ks_critical_value(0.001, 3000, 3000), "{d}");
    }
}
