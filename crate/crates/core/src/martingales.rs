//! Additive and derivative martingales, the CLT-weighted functional and its
//! truncated variant, plus samplers for the martingale limits.

use rayon::prelude::*;

use crate::engine::{fold_leaves, Model, PopulationSnapshot};
use crate::error::{Error, Result};
use crate::laws::{ReproductionLaw, TiltParams};
use crate::numeric::NeumaierSum;
use crate::params::solve_theta_star;
use crate::rng::{combine, Purpose, Stream};

pub use crate::numeric::NeumaierSum as CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MartingaleKind {
    Additive,
    Derivative,
    CltFunctional,
    TruncatedCltFunctional,
}

/// Bounded continuous test functions usable across the config boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// 0 below `lo`, `height` above `hi`, linear in between.
    ClampedRamp { lo: f64, hi: f64, height: f64 },
    /// `(1 + cos(π(x − center)/half_width))/2` on the support, 0 outside.
    CosineBump { center: f64, half_width: f64 },
}

impl TestFunction {
    /// Ramp from 0 at −1 to 1 at +1.
    pub const UNIT_RAMP: TestFunction = TestFunction::ClampedRamp { lo: -1.0, hi: 1.0, height: 1.0 };

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant(c) => c,
            TestFunction::ClampedRamp { lo, hi, height } => height * ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            TestFunction::CosineBump { center, half_width } => {
                let u = (x - center) / half_width;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * u).cos())
                }
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFunction::Constant(c) => c.abs(),
            TestFunction::ClampedRamp { height, .. } => height.abs(),
            TestFunction::CosineBump { .. } => 1.0,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            TestFunction::Constant(c) => c >= 0.0,
            TestFunction::ClampedRamp { height, .. } => height >= 0.0,
            TestFunction::CosineBump { .. } => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunction::Constant(c) => c.is_finite(),
            TestFunction::ClampedRamp { lo, hi, height } => lo.is_finite() && hi.is_finite() && lo < hi && height.is_finite(),
            TestFunction::CosineBump { center, half_width } => center.is_finite() && half_width > 0.0 && half_width.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid test function {self:?}")))
        }
    }
}

/// Test function together with the variance of the limiting Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltSpec {
    pub f: TestFunction,
    pub gaussian_variance: f64,
}

impl CltSpec {
    pub fn new(f: TestFunction, tilt: &TiltParams) -> Result<Self> {
        f.validate()?;
        Ok(Self {
            f,
            gaussian_variance: tilt.kappa_double_prime,
        })
    }

    /// `E f(N)` with `N ~ N(0, κ″)`, by 41-node Gauss-Hermite quadrature.
    pub fn gaussian_expectation(&self) -> f64 {
        let (nodes, weights) = gauss_hermite(41);
        let scale = (2.0 * self.gaussian_variance).sqrt();
        let s: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * self.f.eval(scale * x)).sum();
        s / std::f64::consts::PI.sqrt()
    }
}

/// Nodes and weights of `∫ e^{−x²} g(x) dx ≈ Σ w_i g(x_i)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal Hermite recurrence.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLevel {
    pub big_a: f64,
    pub a: f64,
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleValue {
    pub kind: MartingaleKind,
    pub n: u64,
    pub theta: f64,
    pub value: f64,
    pub truncation: Option<TruncationLevel>,
    pub test_function: Option<TestFunction>,
}

fn require_unpruned(s: &PopulationSnapshot) -> Result<()> {
    if s.pruned_mass_flag {
        Err(Error::MartingaleBias)
    } else {
        Ok(())
    }
}

/// `W_n(θ) = Σ e^{θV − nκ(θ)}`.
pub fn additive_martingale(snapshot: &PopulationSnapshot, tilt: &TiltParams) -> Result<MartingaleValue> {
    require_unpruned(snapshot)?;
    let nk = snapshot.generation as f64 * tilt.kappa;
    let value = snapshot
        .positions
        .iter()
        .map(|&v| (tilt.theta * v - nk).exp())
        .collect::<NeumaierSum>()
        .value();
    Ok(MartingaleValue {
        kind: MartingaleKind::Additive,
        n: snapshot.generation,
        theta: tilt.theta,
        value,
        truncation: None,
        test_function: None,
    })
}

/// Tilt parameters at the critical tilt θ*, rejecting laws without one.
pub fn critical_tilt(law: &ReproductionLaw) -> Result<TiltParams> {
    let theta = solve_theta_star(law)?.ok_or_else(|| Error::Unsupported("law has no critical tilt".into()))?;
    law.kappa_derivatives(theta)
}

/// `Z_n = Σ (κ′(θ*)n − V) e^{θ*V − nκ(θ*)}`; `tilt` must sit at θ*.
pub fn derivative_martingale(snapshot: &PopulationSnapshot, tilt: &TiltParams) -> Result<MartingaleValue> {
    require_unpruned(snapshot)?;
    if !(tilt.kappa_double_prime > 0.0) {
        return Err(Error::Degenerate {
            theta: tilt.theta,
            kappa_prime: tilt.kappa_prime,
            kappa_double_prime: tilt.kappa_double_prime,
        });
    }
    let n = snapshot.generation as f64;
    let value = snapshot
        .positions
        .iter()
        .map(|&v| (tilt.kappa_prime * n - v) * (tilt.theta * v - n * tilt.kappa).exp())
        .collect::<NeumaierSum>()
        .value();
    Ok(MartingaleValue {
        kind: MartingaleKind::Derivative,
        n: snapshot.generation,
        theta: tilt.theta,
        value,
        truncation: None,
        test_function: None,
    })
}

#[inline]
fn clt_term(v: f64, n: f64, sqrt_n: f64, tilt: &TiltParams, f: &TestFunction) -> f64 {
    (tilt.theta * v - n * tilt.kappa).exp() * f.eval((v - n * tilt.kappa_prime) / sqrt_n)
}

/// `W̄_n = Σ e^{θV − nκ} f((V − nκ′)/√n)`.
pub fn clt_functional(snapshot: &PopulationSnapshot, tilt: &TiltParams, spec: &CltSpec) -> Result<MartingaleValue> {
    require_unpruned(snapshot)?;
    let n = snapshot.generation as f64;
    let sqrt_n = n.sqrt();
    let value = snapshot
        .positions
        .iter()
        .map(|&v| clt_term(v, n, sqrt_n, tilt, &spec.f))
        .collect::<NeumaierSum>()
        .value();
    Ok(MartingaleValue {
        kind: MartingaleKind::CltFunctional,
        n: snapshot.generation,
        theta: tilt.theta,
        value,
        truncation: None,
        test_function: Some(spec.f),
    })
}

/// The CLT functional restricted to particles whose ancestral line keeps its
/// sibling weights below `A e^{a(k+1)}` and stays below `(κ′ + L)k + A`.
pub fn truncated_clt_functional(
    snapshot: &PopulationSnapshot,
    tilt: &TiltParams,
    spec: &CltSpec,
    big_a: f64,
) -> Result<MartingaleValue> {
    require_unpruned(snapshot)?;
    let (Some(notes), Some(params)) = (&snapshot.annotations, &snapshot.annotation_params) else {
        return Err(Error::Contract("truncated functional needs an annotated snapshot".into()));
    };
    if params.theta != tilt.theta {
        return Err(Error::Contract(format!(
            "annotations were computed at θ = {}, functional requested at θ = {}",
            params.theta, tilt.theta
        )));
    }
    let margin = params.a + tilt.theta * params.l + tilt.theta * tilt.kappa_prime - tilt.kappa;
    if margin >= 0.0 {
        return Err(Error::Parameter(format!("a + θL + θκ′ − κ must be negative, got {margin}")));
    }
    let n = snapshot.generation as f64;
    let sqrt_n = n.sqrt();
    let unrestricted = big_a == f64::INFINITY;
    let value = snapshot
        .positions
        .iter()
        .zip(notes)
        .filter(|(_, note)| unrestricted || note.within(big_a))
        .map(|(&v, _)| clt_term(v, n, sqrt_n, tilt, &spec.f))
        .collect::<NeumaierSum>()
        .value();
    Ok(MartingaleValue {
        kind: MartingaleKind::TruncatedCltFunctional,
        n: snapshot.generation,
        theta: tilt.theta,
        value,
        truncation: Some(TruncationLevel {
            big_a,
            a: params.a,
            l: params.l,
        }),
        test_function: Some(spec.f),
    })
}

/// Leaf reductions of one unpruned tree, computed depth first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafStatistics {
    pub population: u64,
    pub max: f64,
    pub additive: f64,
    pub derivative: Option<f64>,
    pub clt: Option<f64>,
}

/// Same values as the snapshot-based functions, without storing the tree.
pub fn leaf_statistics(
    law: &ReproductionLaw,
    n: u64,
    seed: u64,
    tilt: &TiltParams,
    critical: Option<&TiltParams>,
    clt: Option<&CltSpec>,
) -> Result<LeafStatistics> {
    let model = Model::Homogeneous(law.clone());
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let mut w = NeumaierSum::new();
    let mut z = NeumaierSum::new();
    let mut wb = NeumaierSum::new();
    let mut max = f64::NEG_INFINITY;
    let population = fold_leaves(&model, n, seed, |v| {
        max = max.max(v);
        let e = (tilt.theta * v - nf * tilt.kappa).exp();
        w.add(e);
        if let Some(c) = critical {
            z.add((c.kappa_prime * nf - v) * (c.theta * v - nf * c.kappa).exp());
        }
        if let Some(spec) = clt {
            wb.add(e * spec.f.eval((v - nf * tilt.kappa_prime) / sqrt_n));
        }
    })?;
    Ok(LeafStatistics {
        population,
        max,
        additive: w.value(),
        derivative: critical.map(|_| z.value()),
        clt: clt.map(|_| wb.value()),
    })
}

/// Draws from the law of the additive martingale limit `W(θ)` by population
/// dynamics on the fixed point `W = Σ e^{θℓ−κ} W_ℓ`, started from `W ≡ 1`.
pub fn sample_additive_limit(
    law: &ReproductionLaw,
    theta: f64,
    pool_size: usize,
    generations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let tilt = law.kappa_derivatives(theta)?;
    if law.critical_gap(theta) >= 0.0 {
        return Err(Error::Parameter(format!(
            "additive limit is degenerate unless θκ′(θ) < κ(θ); θ = {theta}"
        )));
    }
    check_pool(pool_size, generations)?;
    let mut pool = vec![1.0; pool_size];
    for g in 0..generations {
        let key = combine(seed, g as u64);
        pool = (0..pool_size)
            .into_par_iter()
            .map(|i| {
                let mut s = Stream::for_purpose(combine(key, i as u64), Purpose::Pool);
                let mut off = Vec::new();
                law.sample_offspring_into(&mut s, &mut off);
                let mut acc = NeumaierSum::new();
                for &l in &off {
                    let j = (s.open01() * pool_size as f64) as usize;
                    acc.add((theta * l - tilt.kappa).exp() * pool[j.min(pool_size - 1)]);
                }
                acc.value()
            })
            .collect();
    }
    Ok(pool)
}

/// Draws from the law of the derivative martingale limit `Z` by population
/// dynamics on the pair `(Z_n, W_n)` at θ*, started from `(0, 1)`:
/// `Z_{n+1} = Σ e^{θ*ℓ−κ}[(κ′ − ℓ) W_n^ℓ + Z_n^ℓ]`.
pub fn sample_derivative_limit(law: &ReproductionLaw, pool_size: usize, generations: usize, seed: u64) -> Result<Vec<f64>> {
    let tilt = critical_tilt(law)?;
    check_pool(pool_size, generations)?;
    let mut pool = vec![(0.0f64, 1.0f64); pool_size];
    for g in 0..generations {
        let key = combine(seed, g as u64);
        pool = (0..pool_size)
            .into_par_iter()
            .map(|i| {
                let mut s = Stream::for_purpose(combine(key, i as u64), Purpose::Pool);
                let mut off = Vec::new();
                law.sample_offspring_into(&mut s, &mut off);
                let (mut z, mut w) = (NeumaierSum::new(), NeumaierSum::new());
                for &l in &off {
                    let j = ((s.open01() * pool_size as f64) as usize).min(pool_size - 1);
                    let e = (tilt.theta * l - tilt.kappa).exp();
                    let (zc, wc) = pool[j];
                    z.add(e * ((tilt.kappa_prime - l) * wc + zc));
                    w.add(e * wc);
                }
                (z.value(), w.value())
            })
            .collect();
    }
    Ok(pool.into_iter().map(|p| p.0).collect())
}

fn check_pool(pool_size: usize, generations: usize) -> Result<()> {
    if pool_size < 2 || generations == 0 {
        return Err(Error::Parameter("pool dynamics need at least 2 members and 1 generation".into()));
    }
    Ok(())
}
