//! Critical tilts, regime classification and centering sequences.

use crate::error::{Error, Result};
use crate::laws::ReproductionLaw;
use crate::numeric::{golden_section_min, safeguarded_newton};

const MAX_NEWTON: usize = 200;
const RESIDUAL_TOL: f64 = 1e-13;
/// `|θ₁* − θ₂*|` below this is classified as the mean regime.
pub const MEAN_REGIME_TOL: f64 = 1e-8;

/// 64 positive tilts inside `(0, hi)`: geometric from the origin and, for a
/// finite `hi`, geometric towards the pole at `hi`.
fn scan_grid(hi: f64) -> Vec<f64> {
    if hi.is_finite() {
        let mut g: Vec<f64> = (0..32).map(|k| hi * 1e-6 * (0.5e6f64).powf(k as f64 / 31.0)).collect();
        g.extend((1..=32).map(|k| hi * (1.0 - 0.5 * (2e-12f64).powf(k as f64 / 32.0))));
        g
    } else {
        (0..64).map(|k| 1e-6 * (1e12f64).powf(k as f64 / 63.0)).collect()
    }
}

/// Root of an increasing `f` on `(0, hi)`; `None` if `f` never becomes positive.
fn increasing_root(f: impl Fn(f64) -> (f64, f64), hi: f64) -> Result<Option<f64>> {
    let mut prev = 0.0;
    for theta in scan_grid(hi) {
        let (v, _) = f(theta);
        if v.is_nan() {
            continue;
        }
        if v > 0.0 {
            return safeguarded_newton(&f, prev, theta, MAX_NEWTON, RESIDUAL_TOL).map(Some);
        }
        prev = theta;
    }
    Ok(None)
}

/// The positive root θ* of `θκ′(θ) = κ(θ)`, or `None` when the left side stays
/// below the right on the whole finiteness interval.
pub fn solve_theta_star(law: &ReproductionLaw) -> Result<Option<f64>> {
    let (_, hi) = law.finiteness_interval();
    increasing_root(
        |theta| match law.moments(theta) {
            Some(m) => (m.gap, theta * m.kappa_double_prime),
            None => (f64::NAN, f64::NAN),
        },
        hi,
    )
}

/// The θ balancing both critical gaps: `t·g₁(θ) + (1−t)·g₂(θ) = 0`.
pub fn solve_theta_mixed(law1: &ReproductionLaw, law2: &ReproductionLaw, t: f64) -> Result<f64> {
    check_split(t)?;
    let hi = law1.finiteness_interval().1.min(law2.finiteness_interval().1);
    let root = increasing_root(
        |theta| match (law1.moments(theta), law2.moments(theta)) {
            (Some(a), Some(b)) => (
                t * a.gap + (1.0 - t) * b.gap,
                theta * (t * a.kappa_double_prime + (1.0 - t) * b.kappa_double_prime),
            ),
            _ => (f64::NAN, f64::NAN),
        },
        hi,
    )?;
    root.ok_or(Error::AbsentRoot { lo: 0.0, hi })
}

fn check_split(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("split fraction t must lie in (0, 1), got {t}")))
    }
}

/// `inf_{θ>0} κ(θ)/θ`, the almost-sure linear speed of the maximum.
pub fn speed(law: &ReproductionLaw) -> f64 {
    if law.kappa(0.0) < 0.0 {
        return f64::NEG_INFINITY;
    }
    let (_, hi) = law.finiteness_interval();
    let top = if hi.is_finite() { hi * (1.0 - 1e-12) } else { 1e6 };
    let ratio = |s: f64| {
        let theta = s.exp();
        law.kappa(theta) / theta
    };
    let (_, v) = golden_section_min(ratio, (1e-6f64).ln(), top.ln(), 1e-13, 400);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Slow,
    Mean,
    Fast,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Slow => "slow",
            Regime::Mean => "mean",
            Regime::Fast => "fast",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Two laws, the split fraction and everything solved from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub law1: ReproductionLaw,
    pub law2: ReproductionLaw,
    pub t: f64,
    pub theta_mixed: f64,
    pub theta1_star: Option<f64>,
    pub theta2_star: Option<f64>,
    pub regime: Regime,
    pub x_star1: f64,
    pub x_star2: f64,
}

impl RegimeSpec {
    /// `t_n = ⌊tn⌋`.
    pub fn split_generation(&self, n: u64) -> u64 {
        split_generation(self.t, n)
    }

    /// Tilt driving the extremes: θ in the fast regime, θ₁* otherwise.
    pub fn working_theta(&self) -> f64 {
        match self.regime {
            Regime::Fast => self.theta_mixed,
            _ => self.theta1_star.expect("classified specs carry θ₁*"),
        }
    }
}

pub fn split_generation(t: f64, n: u64) -> u64 {
    (t * n as f64).floor() as u64
}

pub fn classify_regime(law1: &ReproductionLaw, law2: &ReproductionLaw, t: f64) -> Result<RegimeSpec> {
    check_split(t)?;
    let theta_mixed = solve_theta_mixed(law1, law2, t)?;
    let theta1 = solve_theta_star(law1)?;
    let theta2 = solve_theta_star(law2)?;
    let (Some(t1), Some(t2)) = (theta1, theta2) else {
        return Err(Error::Unsupported(format!(
            "critical tilts must exist for both laws (theta1_star: {theta1:?}, theta2_star: {theta2:?})"
        )));
    };
    let diff = t1 - t2;
    let regime = if diff.abs() < MEAN_REGIME_TOL {
        Regime::Mean
    } else if diff > 0.0 {
        Regime::Fast
    } else {
        Regime::Slow
    };
    // Independent characterisation: κ₁(θ) > θκ₁′(θ) exactly in the fast regime.
    if regime != Regime::Mean {
        let g1 = law1.critical_gap(theta_mixed);
        if (g1 < 0.0) != (regime == Regime::Fast) {
            return Err(Error::Inconsistent(format!(
                "regime {regime} from critical tilts disagrees with the sign of θκ₁′−κ₁ = {g1:e} at θ = {theta_mixed}"
            )));
        }
    }
    Ok(RegimeSpec {
        law1: law1.clone(),
        law2: law2.clone(),
        t,
        theta_mixed,
        theta1_star: theta1,
        theta2_star: theta2,
        regime,
        x_star1: speed(law1),
        x_star2: speed(law2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogArg {
    LogN,
    LogTn,
    LogNMinusTn,
}

/// Which form of `m_n` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CenteringVariant {
    /// The forms under which the limit theorems are stated.
    #[default]
    Theorem,
    /// The generic tightness centering shared by all regimes.
    Generic,
}

/// `m_n = a₁ t_n + a₂ (n − t_n) + Σ c_k log(arg_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringSequence {
    pub regime: Regime,
    pub t: f64,
    pub linear_coeff_first: f64,
    pub linear_coeff_second: f64,
    pub log_coeffs: Vec<(f64, LogArg)>,
}

impl CenteringSequence {
    pub fn eval(&self, n: u64) -> Result<f64> {
        let tn = split_generation(self.t, n);
        if n < 2 || tn == 0 || tn >= n {
            return Err(Error::Domain(format!(
                "centering needs n ≥ 2 and 0 < t_n < n, got n = {n}, t_n = {tn}"
            )));
        }
        let (nf, tf) = (n as f64, tn as f64);
        let mut m = self.linear_coeff_first * tf + self.linear_coeff_second * (nf - tf);
        for &(c, arg) in &self.log_coeffs {
            let x = match arg {
                LogArg::LogN => nf,
                LogArg::LogTn => tf,
                LogArg::LogNMinusTn => nf - tf,
            };
            m += c * x.ln();
        }
        Ok(m)
    }
}

pub fn centering_sequence(spec: &RegimeSpec, variant: CenteringVariant) -> Result<CenteringSequence> {
    let d = |law: &ReproductionLaw, theta: f64| law.kappa_derivatives(theta);
    let (a1, a2, logs) = match (spec.regime, variant) {
        (Regime::Fast, v) => {
            let theta = spec.theta_mixed;
            let (p1, p2) = (d(&spec.law1, theta)?, d(&spec.law2, theta)?);
            let (a1, a2) = match v {
                CenteringVariant::Theorem => (p1.kappa / theta, p2.kappa / theta),
                CenteringVariant::Generic => (p1.kappa_prime, p2.kappa_prime),
            };
            (a1, a2, vec![(-0.5 / theta, LogArg::LogN)])
        }
        (Regime::Slow, v) => {
            let (t1, t2) = (spec.theta1_star.unwrap(), spec.theta2_star.unwrap());
            let (p1, p2) = (d(&spec.law1, t1)?, d(&spec.law2, t2)?);
            let logs = match v {
                CenteringVariant::Theorem => {
                    vec![(-1.5 / t1, LogArg::LogTn), (-1.5 / t2, LogArg::LogNMinusTn)]
                }
                CenteringVariant::Generic => vec![(-1.5 / t1 - 1.5 / t2, LogArg::LogN)],
            };
            (p1.kappa_prime, p2.kappa_prime, logs)
        }
        (Regime::Mean, _) => {
            let theta = spec.theta1_star.unwrap();
            let (p1, p2) = (d(&spec.law1, theta)?, d(&spec.law2, theta)?);
            (p1.kappa_prime, p2.kappa_prime, vec![(-1.5 / theta, LogArg::LogN)])
        }
    };
    Ok(CenteringSequence {
        regime: spec.regime,
        t: spec.t,
        linear_coeff_first: a1,
        linear_coeff_second: a2,
        log_coeffs: logs,
    })
}

/// `m_n` for the regime of `spec`.
pub fn centering(spec: &RegimeSpec, n: u64, variant: CenteringVariant) -> Result<f64> {
    centering_sequence(spec, variant)?.eval(n)
}

/// Homogeneous critical centering `κ′(θ*)n − (3/2θ*) log n`.
pub fn homogeneous_centering(law: &ReproductionLaw, n: u64) -> Result<f64> {
    let theta = solve_theta_star(law)?.ok_or_else(|| Error::Unsupported("law has no critical tilt".into()))?;
    let p = law.kappa_derivatives(theta)?;
    Ok(p.kappa_prime * n as f64 - 1.5 / theta * (n as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{Atom, Displacement};
    use approx::assert_relative_eq;

    fn bg(sigma: f64) -> ReproductionLaw {
        ReproductionLaw::binary_gaussian(0.0, sigma * sigma).unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn theta_star_examples() {
        let g = solve_theta_star(&bg(1.0)).unwrap().unwrap();
        assert_relative_eq!(g, (2.0 * 2f64.ln()).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g, 1.1774100, epsilon = 1e-7);

        let lap = ReproductionLaw::deterministic(2, Displacement::Laplace { scale: 1.0 }).unwrap();
        let oracle = bisect(
            |x| 2.0 * x * x / (1.0 - x * x) - 2f64.ln() + (1.0 - x * x).ln(),
            1e-9,
            1.0 - 1e-12,
        );
        let got = solve_theta_star(&lap).unwrap().unwrap();
        assert_relative_eq!(got, oracle, epsilon = 1e-10);
        assert!((got - 0.6036).abs() < 1e-4);

        let pm1 = ReproductionLaw::finite_atomic(vec![Atom {
            probability: 1.0,
            displacements: vec![1.0, -1.0],
        }])
        .unwrap();
        assert_eq!(solve_theta_star(&pm1).unwrap(), None);
    }

    #[test]
    fn theta_mixed_examples() {
        let th = solve_theta_mixed(&bg(1.0), &bg(2.0), 0.5).unwrap();
        assert_relative_eq!(th, (2.0 * 2f64.ln() / 2.5).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(th, 0.74466, epsilon = 1e-5);
        let same = solve_theta_mixed(&bg(1.3), &bg(1.3), 0.4).unwrap();
        assert_relative_eq!(same, solve_theta_star(&bg(1.3)).unwrap().unwrap(), epsilon = 1e-12);
        let th = solve_theta_mixed(&bg(1.0), &bg(1.2), 0.5).unwrap();
        assert_relative_eq!(th, (2.0 * 2f64.ln() / 1.22).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(th, 1.06598, epsilon = 1e-5);
    }

    #[test]
    fn regime_examples() {
        let s = classify_regime(&bg(1.0), &bg(2.0), 0.5).unwrap();
        assert_eq!(s.regime, Regime::Fast);
        assert_relative_eq!(s.theta1_star.unwrap(), 1.17741, epsilon = 1e-5);
        assert_relative_eq!(s.theta2_star.unwrap(), 0.58871, epsilon = 1e-5);
        assert_eq!(classify_regime(&bg(2.0), &bg(1.0), 0.5).unwrap().regime, Regime::Slow);
        assert_eq!(classify_regime(&bg(1.0), &bg(1.0), 0.5).unwrap().regime, Regime::Mean);
    }

    #[test]
    fn centering_examples() {
        let fast = classify_regime(&bg(1.0), &bg(2.0), 0.5).unwrap();
        // Independent closed form: κᵢ(θ) = ln 2 + σᵢ²θ²/2.
        let th = (2.0 * 2f64.ln() / 2.5).sqrt();
        let k = |s: f64| 2f64.ln() + s * s * th * th / 2.0;
        let oracle = k(1.0) / th * 50.0 + k(2.0) / th * 50.0 - 100f64.ln() / (2.0 * th);
        let m = centering(&fast, 100, CenteringVariant::Theorem).unwrap();
        assert_relative_eq!(m, oracle, epsilon = 1e-9);
        assert!((m - 183.073).abs() < 1e-3);

        let slow = classify_regime(&bg(2.0), &bg(1.0), 0.5).unwrap();
        let c = (2.0 * 2f64.ln()).sqrt();
        let (t1, t2) = (c / 2.0, c);
        let oracle = 2.0 * c * 50.0 + c * 50.0 - 1.5 / t1 * 50f64.ln() - 1.5 / t2 * 50f64.ln();
        let m = centering(&slow, 100, CenteringVariant::Theorem).unwrap();
        assert_relative_eq!(m, oracle, epsilon = 1e-9);
        assert!((m - 161.660).abs() < 1e-3);
    }

    #[test]
    fn centering_variants_differ_by_bounded_amount() {
        for (s1, s2, t) in [(1.0, 2.0, 0.5), (2.0, 1.0, 0.5), (1.0, 1.2, 0.37), (1.5, 1.0, 0.61)] {
            let spec = classify_regime(&bg(s1), &bg(s2), t).unwrap();
            let mut max_diff: f64 = 0.0;
            for n in (10..=10_000).step_by(7) {
                let a = centering(&spec, n, CenteringVariant::Theorem).unwrap();
                let b = centering(&spec, n, CenteringVariant::Generic).unwrap();
                max_diff = max_diff.max((a - b).abs());
            }
            let bound = match spec.regime {
                Regime::Fast => {
                    let p = spec.law1.kappa_derivatives(spec.theta_mixed).unwrap();
                    (p.kappa_prime - p.kappa / spec.theta_mixed).abs() / (1.0 - t)
                }
                _ => {
                    let (t1, t2) = (spec.theta1_star.unwrap(), spec.theta2_star.unwrap());
                    1.5 / t1 * (1.0 / t).ln().abs().max(2.0) + 1.5 / t2 * (1.0 / (1.0 - t)).ln().abs().max(2.0)
                }
            };
            assert!(max_diff <= bound + 1e-9, "{max_diff} > {bound}");
        }
    }

    #[test]
    fn fast_centering_gap_identity() {
        let spec = classify_regime(&bg(1.0), &bg(1.7), 0.37).unwrap();
        let th = spec.theta_mixed;
        let p = spec.law1.kappa_derivatives(th).unwrap();
        for n in [11u64, 50, 123, 999] {
            let a = centering(&spec, n, CenteringVariant::Theorem).unwrap();
            let b = centering(&spec, n, CenteringVariant::Generic).unwrap();
            let frac = 0.37 * n as f64 - split_generation(0.37, n) as f64;
            let expected = frac / (1.0 - 0.37) * (p.kappa_prime - p.kappa / th);
            assert!((a - b - expected).abs() < 1e-8 * n as f64);
        }
    }

    #[test]
    fn degenerate_horizon_is_domain_error() {
        let spec = classify_regime(&bg(1.0), &bg(2.0), 0.5).unwrap();
        assert!(matches!(centering(&spec, 1, CenteringVariant::Theorem), Err(Error::Domain(_))));
    }

    #[test]
    fn speed_examples() {
        assert_relative_eq!(speed(&bg(1.0)), (2.0 * 2f64.ln()).sqrt(), epsilon = 1e-9);
        assert_relative_eq!(speed(&ReproductionLaw::single_child_at(1.0)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(speed(&bg(2.5)), 2.5 * (2.0 * 2f64.ln()).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn mean_regime_matches_homogeneous() {
        let spec = classify_regime(&bg(1.0), &bg(1.0), 0.5).unwrap();
        for n in [10u64, 101, 1000] {
            assert_relative_eq!(
                centering(&spec, n, CenteringVariant::Theorem).unwrap(),
                homogeneous_centering(&bg(1.0), n).unwrap(),
                max_relative = 1e-14
            );
        }
    }
}
