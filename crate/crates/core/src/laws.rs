//! Reproduction laws, their log-Laplace transforms and samplers.
//!
//! A law is either a random number of children with i.i.d. displacements
//! (deterministic or Poisson count) or a finite mixture of explicit
//! displacement multisets. Every sampler writes offspring in non-increasing
//! order; equal atoms keep their draw order.

use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::params;
use crate::rng::Stream;

/// Law of a single displacement for the i.i.d. families.
#[derive(Debug, Clone, PartialEq)]
pub enum Displacement {
    Gaussian { mean: f64, variance: f64 },
    /// Symmetric Laplace with density `exp(-|x|/scale) / (2 scale)`.
    Laplace { scale: f64 },
    /// Finitely many values `(value, probability)`.
    PointMasses(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CountLaw {
    Deterministic(u32),
    Poisson(f64),
}

/// One outcome of a finite-atomic law: with `probability`, the children are
/// displaced by exactly `displacements`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub probability: f64,
    pub displacements: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    DeterministicCount,
    PoissonCount,
    FiniteAtomic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    Iid {
        count: CountLaw,
        displacement: Displacement,
    },
    FiniteAtomic(Vec<Atom>),
}

/// A point-process offspring law. Immutable once built.
#[derive(Debug, Clone)]
pub struct ReproductionLaw {
    kind: LawKind,
    poisson: Option<Poisson<f64>>,
    /// Cumulative probabilities for point-mass displacements or atoms.
    cumulative: Vec<f64>,
}

impl PartialEq for ReproductionLaw {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// κ(θ), κ′(θ), κ″(θ) at a tilt θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltParams {
    pub theta: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub kappa_double_prime: f64,
}

/// Tilted moments plus the critical gap `θκ′(θ) − κ(θ)`, computed without
/// cancelling large `θ·max atom` terms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments {
    pub kappa: f64,
    pub kappa_prime: f64,
    pub kappa_double_prime: f64,
    pub gap: f64,
}

const PROB_TOL: f64 = 1e-12;

fn check_probabilities(probs: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidLaw(format!("{what}: probability {p} is not a non-negative real")));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidLaw(format!("{what}: probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

#[inline]
fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

/// Weighted moments of `values` under weights `p_i e^{θ v_i}`; returns
/// `(log-normaliser, mean, variance, gap)` where the gap is `θ·mean − log-normaliser`.
fn tilted_atoms(pairs: impl Iterator<Item = (f64, f64)> + Clone, theta: f64) -> (f64, f64, f64, f64) {
    let shift = pairs
        .clone()
        .filter(|&(_, p)| p > 0.0)
        .map(|(v, _)| v)
        .fold(if theta >= 0.0 { f64::NEG_INFINITY } else { f64::INFINITY }, |acc, v| {
            if theta >= 0.0 {
                acc.max(v)
            } else {
                acc.min(v)
            }
        });
    let mut s = 0.0;
    let mut m1 = 0.0;
    for (v, p) in pairs.clone() {
        if p > 0.0 {
            let w = p * (theta * (v - shift)).exp();
            s += w;
            m1 += w * (v - shift);
        }
    }
    let centred_mean = m1 / s;
    let mut m2 = 0.0;
    for (v, p) in pairs {
        if p > 0.0 {
            let w = p * (theta * (v - shift)).exp();
            let d = v - shift - centred_mean;
            m2 += w * d * d;
        }
    }
    let log_norm = theta * shift + s.ln();
    let gap = theta * centred_mean - s.ln();
    (log_norm, shift + centred_mean, m2 / s, gap)
}

impl Displacement {
    fn validate(&self) -> Result<()> {
        match self {
            Displacement::Gaussian { mean, variance } => {
                if !mean.is_finite() || !variance.is_finite() || *variance <= 0.0 {
                    return Err(Error::InvalidLaw(format!(
                        "gaussian displacement needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            Displacement::Laplace { scale } => {
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::InvalidLaw(format!("laplace scale must be positive, got {scale}")));
                }
            }
            Displacement::PointMasses(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::InvalidLaw("point masses need at least one atom".into()));
                }
                if atoms.iter().any(|(v, _)| !v.is_finite()) {
                    return Err(Error::InvalidLaw("point mass values must be finite".into()));
                }
                check_probabilities(atoms.iter().map(|a| a.1), "point masses")?;
            }
        }
        Ok(())
    }

    fn finiteness(&self) -> (f64, f64) {
        match self {
            Displacement::Laplace { scale } => (-1.0 / scale, 1.0 / scale),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `(log E e^{θD}, tilted mean, tilted variance, θ·tilted mean − log E e^{θD})`.
    fn tilted(&self, theta: f64) -> (f64, f64, f64, f64) {
        match self {
            Displacement::Gaussian { mean, variance } => (
                mean * theta + 0.5 * variance * theta * theta,
                mean + variance * theta,
                *variance,
                0.5 * variance * theta * theta,
            ),
            Displacement::Laplace { scale } => {
                let bt2 = scale * scale * theta * theta;
                let one_minus = 1.0 - bt2;
                let mean = 2.0 * scale * scale * theta / one_minus;
                let var = 2.0 * scale * scale * (1.0 + bt2) / (one_minus * one_minus);
                let log_mgf = -(-bt2).ln_1p();
                (log_mgf, mean, var, theta * mean - log_mgf)
            }
            Displacement::PointMasses(atoms) => tilted_atoms(atoms.iter().copied(), theta),
        }
    }

    fn scaled(&self, c: f64) -> Displacement {
        match self {
            Displacement::Gaussian { mean, variance } => Displacement::Gaussian {
                mean: mean * c,
                variance: variance * c * c,
            },
            Displacement::Laplace { scale } => Displacement::Laplace { scale: scale * c },
            Displacement::PointMasses(atoms) => {
                Displacement::PointMasses(atoms.iter().map(|&(v, p)| (v * c, p)).collect())
            }
        }
    }
}

impl ReproductionLaw {
    fn build(kind: LawKind) -> Result<Self> {
        let mut poisson = None;
        let cumulative = match &kind {
            LawKind::Iid { count, displacement } => {
                displacement.validate()?;
                match count {
                    CountLaw::Deterministic(k) => {
                        if *k == 0 {
                            return Err(Error::InvalidLaw("deterministic count must be at least 1".into()));
                        }
                    }
                    CountLaw::Poisson(lambda) => {
                        if !(lambda.is_finite() && *lambda > 0.0) {
                            return Err(Error::InvalidLaw(format!("poisson mean must be positive, got {lambda}")));
                        }
                        poisson = Some(
                            Poisson::new(*lambda).map_err(|e| Error::InvalidLaw(format!("poisson mean: {e}")))?,
                        );
                    }
                }
                match displacement {
                    Displacement::PointMasses(atoms) => cumulative(atoms.iter().map(|a| a.1)),
                    _ => Vec::new(),
                }
            }
            LawKind::FiniteAtomic(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::InvalidLaw("finite-atomic law needs at least one outcome".into()));
                }
                for (j, atom) in atoms.iter().enumerate() {
                    if atom.displacements.is_empty() {
                        return Err(Error::InvalidLaw(format!("outcome {j} has an empty displacement set")));
                    }
                    if atom.displacements.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidLaw(format!("outcome {j} has a non-finite displacement")));
                    }
                }
                check_probabilities(atoms.iter().map(|a| a.probability), "finite-atomic outcomes")?;
                cumulative(atoms.iter().map(|a| a.probability))
            }
        };
        let kind = match kind {
            LawKind::FiniteAtomic(atoms) => LawKind::FiniteAtomic(
                atoms
                    .into_iter()
                    .map(|mut a| {
                        a.displacements.sort_by(|x, y| y.total_cmp(x));
                        a
                    })
                    .collect(),
            ),
            other => other,
        };
        Ok(Self { kind, poisson, cumulative })
    }

    pub fn deterministic(count: u32, displacement: Displacement) -> Result<Self> {
        Self::build(LawKind::Iid {
            count: CountLaw::Deterministic(count),
            displacement,
        })
    }

    pub fn poisson(mean: f64, displacement: Displacement) -> Result<Self> {
        Self::build(LawKind::Iid {
            count: CountLaw::Poisson(mean),
            displacement,
        })
    }

    pub fn finite_atomic(atoms: Vec<Atom>) -> Result<Self> {
        Self::build(LawKind::FiniteAtomic(atoms))
    }

    /// Two children with i.i.d. `N(mean, variance)` displacements.
    pub fn binary_gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::deterministic(2, Displacement::Gaussian { mean, variance })
    }

    /// One child displaced by exactly `x`.
    pub fn single_child_at(x: f64) -> Self {
        Self::deterministic(1, Displacement::PointMasses(vec![(x, 1.0)])).expect("valid law")
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn family(&self) -> Family {
        match &self.kind {
            LawKind::Iid { count: CountLaw::Deterministic(_), .. } => Family::DeterministicCount,
            LawKind::Iid { count: CountLaw::Poisson(_), .. } => Family::PoissonCount,
            LawKind::FiniteAtomic(_) => Family::FiniteAtomic,
        }
    }

    pub fn mean_count(&self) -> f64 {
        match &self.kind {
            LawKind::Iid { count: CountLaw::Deterministic(k), .. } => *k as f64,
            LawKind::Iid { count: CountLaw::Poisson(l), .. } => *l,
            LawKind::FiniteAtomic(atoms) => atoms
                .iter()
                .map(|a| a.probability * a.displacements.len() as f64)
                .sum(),
        }
    }

    /// Open interval of tilts on which κ is finite.
    pub fn finiteness_interval(&self) -> (f64, f64) {
        match &self.kind {
            LawKind::Iid { displacement, .. } => displacement.finiteness(),
            LawKind::FiniteAtomic(_) => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_finite_at(&self, theta: f64) -> bool {
        let (lo, hi) = self.finiteness_interval();
        theta.is_finite() && theta > lo && theta < hi
    }

    /// The same law with every displacement multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Parameter(format!("scale factor must be positive, got {c}")));
        }
        let kind = match &self.kind {
            LawKind::Iid { count, displacement } => LawKind::Iid {
                count: count.clone(),
                displacement: displacement.scaled(c),
            },
            LawKind::FiniteAtomic(atoms) => LawKind::FiniteAtomic(
                atoms
                    .iter()
                    .map(|a| Atom {
                        probability: a.probability,
                        displacements: a.displacements.iter().map(|v| v * c).collect(),
                    })
                    .collect(),
            ),
        };
        Self::build(kind)
    }

    pub(crate) fn moments(&self, theta: f64) -> Option<Moments> {
        if !self.is_finite_at(theta) {
            return None;
        }
        let m = match &self.kind {
            LawKind::Iid { displacement, .. } => {
                let log_count = self.mean_count().ln();
                let (log_mgf, mean, var, gap) = displacement.tilted(theta);
                Moments {
                    kappa: log_count + log_mgf,
                    kappa_prime: mean,
                    kappa_double_prime: var,
                    gap: gap - log_count,
                }
            }
            LawKind::FiniteAtomic(atoms) => {
                let pairs = atoms
                    .iter()
                    .flat_map(|a| a.displacements.iter().map(move |&v| (v, a.probability)));
                let (kappa, mean, var, gap) = tilted_atoms(pairs, theta);
                Moments {
                    kappa,
                    kappa_prime: mean,
                    kappa_double_prime: var,
                    gap,
                }
            }
        };
        if m.kappa.is_finite() {
            Some(m)
        } else {
            None
        }
    }

    /// `log E Σ e^{θℓ}`; `+∞` outside the finiteness interval.
    pub fn kappa(&self, theta: f64) -> f64 {
        self.moments(theta).map_or(f64::INFINITY, |m| m.kappa)
    }

    /// `θκ′(θ) − κ(θ)`; `+∞` outside the finiteness interval.
    pub fn critical_gap(&self, theta: f64) -> f64 {
        self.moments(theta).map_or(f64::INFINITY, |m| m.gap)
    }

    pub fn kappa_derivatives(&self, theta: f64) -> Result<TiltParams> {
        let m = self.moments(theta).ok_or_else(|| {
            let (lo, hi) = self.finiteness_interval();
            Error::OutsideFiniteness { theta, lo, hi }
        })?;
        if !(m.kappa_double_prime > 0.0 && m.kappa_double_prime.is_finite()) {
            return Err(Error::Degenerate {
                theta,
                kappa_prime: m.kappa_prime,
                kappa_double_prime: m.kappa_double_prime,
            });
        }
        Ok(TiltParams {
            theta,
            kappa: m.kappa,
            kappa_prime: m.kappa_prime,
            kappa_double_prime: m.kappa_double_prime,
        })
    }

    fn require_finite(&self, theta: f64) -> Result<()> {
        if self.is_finite_at(theta) {
            Ok(())
        } else {
            let (lo, hi) = self.finiteness_interval();
            Err(Error::OutsideFiniteness { theta, lo, hi })
        }
    }

    #[inline]
    fn sample_displacement(d: &Displacement, cumulative: &[f64], s: &mut Stream) -> f64 {
        match d {
            Displacement::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(s);
                mean + variance.sqrt() * z
            }
            Displacement::Laplace { scale } => {
                let u = s.open01() - 0.5;
                let mag = -scale * (1.0 - 2.0 * u.abs()).ln();
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            Displacement::PointMasses(atoms) => atoms[pick(cumulative, s.open01())].0,
        }
    }

    fn sample_count(&self, s: &mut Stream) -> usize {
        match &self.kind {
            LawKind::Iid { count: CountLaw::Deterministic(k), .. } => *k as usize,
            LawKind::Iid { count: CountLaw::Poisson(_), .. } => {
                let p = self.poisson.as_ref().expect("poisson sampler");
                p.sample(s) as usize
            }
            LawKind::FiniteAtomic(_) => unreachable!("finite-atomic laws have no separate count"),
        }
    }

    /// Writes one offspring draw into `out`, sorted non-increasing.
    pub fn sample_offspring_into(&self, s: &mut Stream, out: &mut Vec<f64>) {
        out.clear();
        match &self.kind {
            LawKind::Iid { displacement, .. } => {
                let count = self.sample_count(s);
                for _ in 0..count {
                    out.push(Self::sample_displacement(displacement, &self.cumulative, s));
                }
                sort_desc(out);
            }
            LawKind::FiniteAtomic(atoms) => {
                let j = pick(&self.cumulative, s.open01());
                out.extend_from_slice(&atoms[j].displacements);
            }
        }
    }

    pub fn sample_offspring(&self, s: &mut Stream) -> Vec<f64> {
        let mut out = Vec::new();
        self.sample_offspring_into(s, &mut out);
        out
    }

    /// One step of the many-to-one walk: `E f(S₁) = E Σ f(ℓ) e^{θℓ−κ(θ)}`.
    pub fn sample_tilted_step(&self, theta: f64, s: &mut Stream) -> Result<f64> {
        self.require_finite(theta)?;
        Ok(match &self.kind {
            LawKind::Iid { displacement, .. } => sample_tilted_displacement(displacement, theta, s),
            LawKind::FiniteAtomic(atoms) => {
                let (j, i) = tilted_atom(atoms, theta, s);
                atoms[j].displacements[i]
            }
        })
    }

    /// Offspring of a spine particle together with the index of the spine
    /// child: the offspring follows the law biased by `Σ e^{θℓ−κ}` and the
    /// spine child is picked with probability proportional to `e^{θℓ}`.
    pub fn sample_spine_offspring_into(&self, theta: f64, s: &mut Stream, out: &mut Vec<f64>) -> Result<usize> {
        self.require_finite(theta)?;
        out.clear();
        match &self.kind {
            LawKind::Iid { count, displacement } => {
                // Biasing by Σ e^{θℓ} size-biases the count and tilts one
                // uniformly chosen displacement; the displacements are
                // exchangeable, so the tilted one can sit in slot 0.
                let count = match count {
                    CountLaw::Deterministic(k) => *k as usize,
                    CountLaw::Poisson(_) => 1 + self.sample_count(s),
                };
                let spine_value = sample_tilted_displacement(displacement, theta, s);
                out.push(spine_value);
                for _ in 1..count {
                    out.push(Self::sample_displacement(displacement, &self.cumulative, s));
                }
                // Stable sort keeps the spine ahead of equal values, which is
                // the draw order.
                let mut idx: Vec<usize> = (0..out.len()).collect();
                idx.sort_by(|&a, &b| out[b].total_cmp(&out[a]));
                let sorted: Vec<f64> = idx.iter().map(|&i| out[i]).collect();
                let spine = idx.iter().position(|&i| i == 0).expect("spine slot");
                out.copy_from_slice(&sorted);
                Ok(spine)
            }
            LawKind::FiniteAtomic(atoms) => {
                let (j, i) = tilted_atom(atoms, theta, s);
                out.extend_from_slice(&atoms[j].displacements);
                Ok(i)
            }
        }
    }

    /// A draw from the size-biased law `𝓛̂`.
    pub fn sample_size_biased_offspring(&self, theta: f64, s: &mut Stream) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.sample_spine_offspring_into(theta, s, &mut out)?;
        Ok(out)
    }

    /// All displacement values that occur with positive probability, when
    /// there are finitely many.
    pub fn atom_values(&self) -> Option<Vec<f64>> {
        match &self.kind {
            LawKind::Iid {
                displacement: Displacement::PointMasses(atoms),
                ..
            } => Some(atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect()),
            LawKind::Iid { .. } => None,
            LawKind::FiniteAtomic(atoms) => Some(
                atoms
                    .iter()
                    .filter(|a| a.probability > 0.0)
                    .flat_map(|a| a.displacements.iter().copied())
                    .collect(),
            ),
        }
    }

    /// Verdicts for the standing assumptions at tilt `theta`.
    pub fn check_assumptions(&self, theta: f64) -> AssumptionReport {
        use Verdict::*;
        let mut entries = Vec::new();

        let (survival, supercritical) = match &self.kind {
            LawKind::Iid { count: CountLaw::Deterministic(k), .. } => {
                (HoldsAnalytically, if *k >= 2 { HoldsAnalytically } else { Violated })
            }
            // P(no child) = e^{-λ} > 0 for a Poisson count.
            LawKind::Iid { count: CountLaw::Poisson(_), .. } => (Violated, HoldsAnalytically),
            LawKind::FiniteAtomic(atoms) => {
                let p_one: f64 = atoms
                    .iter()
                    .filter(|a| a.displacements.len() == 1)
                    .map(|a| a.probability)
                    .sum();
                (HoldsAnalytically, if p_one < 1.0 { HoldsAnalytically } else { Violated })
            }
        };
        entries.push((Assumption::Survival, survival));
        entries.push((Assumption::Supercritical, supercritical));

        let closed_form = matches!(
            &self.kind,
            LawKind::Iid {
                displacement: Displacement::Gaussian { .. } | Displacement::Laplace { .. },
                ..
            }
        );
        let computed = if closed_form { HoldsAnalytically } else { HoldsNumerically };

        let as1 = match self.moments(theta) {
            Some(m) if m.kappa_double_prime > 0.0 && m.kappa_double_prime.is_finite() => computed,
            _ => Violated,
        };
        entries.push((Assumption::TiltedVariance, as1));

        // Built-in families have finite exponential moments of every order
        // inside the finiteness interval.
        let moment = if self.is_finite_at(theta) { HoldsAnalytically } else { Violated };
        entries.push((Assumption::LogMoment, moment));

        let lattice = match self.atom_values() {
            None => HoldsAnalytically,
            Some(values) => {
                if lattice_span(&values).is_some() {
                    Violated
                } else {
                    HoldsNumerically
                }
            }
        };
        entries.push((Assumption::NonLattice, lattice));

        match params::solve_theta_star(self) {
            Ok(Some(theta_star)) => {
                entries.push((Assumption::CriticalTilt, HoldsNumerically));
                let as7 = match self.moments(theta_star) {
                    Some(m) if m.kappa_double_prime > 0.0 && m.kappa_double_prime.is_finite() => computed,
                    _ => Violated,
                };
                entries.push((Assumption::CriticalVariance, as7));
                entries.push((Assumption::DerivativeMoments, HoldsAnalytically));
            }
            _ => {
                entries.push((Assumption::CriticalTilt, Violated));
                entries.push((Assumption::CriticalVariance, Violated));
                entries.push((Assumption::DerivativeMoments, Assumed));
            }
        }
        AssumptionReport { theta, entries }
    }
}

#[inline]
fn sort_desc(v: &mut [f64]) {
    if v.len() == 2 {
        if v[0] < v[1] {
            v.swap(0, 1);
        }
    } else if v.len() > 2 {
        v.sort_by(|a, b| b.total_cmp(a));
    }
}

fn sample_tilted_displacement(d: &Displacement, theta: f64, s: &mut Stream) -> f64 {
    match d {
        Displacement::Gaussian { mean, variance } => {
            let z: f64 = StandardNormal.sample(s);
            mean + variance * theta + variance.sqrt() * z
        }
        Displacement::Laplace { scale } => {
            // Tilted density ∝ e^{θx − |x|/b}: two exponential halves.
            let up = 1.0 / scale - theta;
            let down = 1.0 / scale + theta;
            let p_up = (1.0 / up) / (1.0 / up + 1.0 / down);
            let u = s.open01();
            let e = -s.open01().ln();
            if u < p_up {
                e / up
            } else {
                -e / down
            }
        }
        Displacement::PointMasses(atoms) => {
            let shift = atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .map(|a| theta * a.0)
                .fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = atoms.iter().map(|&(v, p)| p * (theta * v - shift).exp()).sum();
            let mut u = s.open01() * total;
            for &(v, p) in atoms {
                let w = p * (theta * v - shift).exp();
                if u < w {
                    return v;
                }
                u -= w;
            }
            atoms.iter().rev().find(|a| a.1 > 0.0).map(|a| a.0).unwrap_or(atoms[0].0)
        }
    }
}

/// Draws an (outcome, position) pair with probability ∝ `p_j e^{θℓ}`.
fn tilted_atom(atoms: &[Atom], theta: f64, s: &mut Stream) -> (usize, usize) {
    let shift = atoms
        .iter()
        .filter(|a| a.probability > 0.0)
        .flat_map(|a| a.displacements.iter().map(move |&v| theta * v))
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = atoms
        .iter()
        .map(|a| a.probability * a.displacements.iter().map(|&v| (theta * v - shift).exp()).sum::<f64>())
        .sum();
    let mut u = s.open01() * total;
    let mut last = (0, 0);
    for (j, a) in atoms.iter().enumerate() {
        if a.probability <= 0.0 {
            continue;
        }
        for (i, &v) in a.displacements.iter().enumerate() {
            let w = a.probability * (theta * v - shift).exp();
            if u < w {
                return (j, i);
            }
            u -= w;
            last = (j, i);
        }
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assumption {
    /// `P(no children) = 0`.
    Survival,
    /// `P(exactly one child) < 1`.
    Supercritical,
    /// `κ″(θ) ∈ (0, ∞)`.
    TiltedVariance,
    /// `E[X log₊ X] < ∞` with `X = Σ e^{θℓ}`.
    LogMoment,
    NonLattice,
    /// A root of `θκ′(θ) = κ(θ)` exists.
    CriticalTilt,
    /// `κ″(θ*) ∈ (0, ∞)`.
    CriticalVariance,
    /// `E[X (log₊ X)²] < ∞` and `E[X̃ log₊ X̃] < ∞` at θ*.
    DerivativeMoments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    HoldsAnalytically,
    HoldsNumerically,
    Assumed,
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub theta: f64,
    pub entries: Vec<(Assumption, Verdict)>,
}

impl AssumptionReport {
    pub fn verdict(&self, a: Assumption) -> Option<Verdict> {
        self.entries.iter().find(|e| e.0 == a).map(|e| e.1)
    }

    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.1 != Verdict::Violated)
    }
}

const LATTICE_TOL: f64 = 1e-12;
const MAX_DENOMINATOR: i64 = 1_000_000;

/// Best rational approximation `p/q` with `q ≤ MAX_DENOMINATOR` via continued fractions.
fn rational_approx(x: f64) -> Option<(i64, i64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DENOMINATOR {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - x).abs() <= LATTICE_TOL * x.abs().max(1.0) {
            return Some((h1, k1));
        }
        let frac = r - a as f64;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    if k1 > 0 && ((h1 as f64 / k1 as f64) - x).abs() <= LATTICE_TOL * x.abs().max(1.0) {
        Some((h1, k1))
    } else {
        None
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Span `b` of a lattice `a + bℤ` containing all `values`, if one exists on
/// the 1e−12 tolerance grid. A single repeated value has span 0.
pub fn lattice_span(values: &[f64]) -> Option<f64> {
    let first = *values.first()?;
    let diffs: Vec<f64> = values
        .iter()
        .map(|v| v - first)
        .filter(|d| d.abs() > LATTICE_TOL * first.abs().max(1.0))
        .collect();
    let Some(reference) = diffs.iter().map(|d| d.abs()).min_by(|a, b| a.total_cmp(b)) else {
        return Some(0.0);
    };
    let mut lcm: i64 = 1;
    for d in &diffs {
        let (_, q) = rational_approx(d / reference)?;
        lcm = lcm / gcd(lcm, q) * q;
        if lcm > MAX_DENOMINATOR {
            return None;
        }
    }
    Some(reference / lcm as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pm1() -> ReproductionLaw {
        ReproductionLaw::finite_atomic(vec![Atom {
            probability: 1.0,
            displacements: vec![1.0, -1.0],
        }])
        .unwrap()
    }

    #[test]
    fn kappa_closed_forms() {
        let bg = ReproductionLaw::binary_gaussian(0.0, 1.0).unwrap();
        assert_relative_eq!(bg.kappa(1.0), 2f64.ln() + 0.5, epsilon = 1e-14);
        assert_relative_eq!(bg.kappa(1.0), 1.193147, epsilon = 1e-6);
        assert_eq!(ReproductionLaw::single_child_at(0.0).kappa(3.7), 0.0);
        assert_relative_eq!(pm1().kappa(1.0), (1f64.exp() + (-1f64).exp()).ln(), epsilon = 1e-14);
        assert_relative_eq!(pm1().kappa(1.0), 1.126928, epsilon = 1e-6);
    }

    #[test]
    fn kappa_outside_interval_is_infinite() {
        let lap = ReproductionLaw::deterministic(2, Displacement::Laplace { scale: 1.0 }).unwrap();
        assert_eq!(lap.kappa(1.0), f64::INFINITY);
        assert_eq!(lap.kappa(-1.5), f64::INFINITY);
        assert!(lap.kappa(-0.5).is_finite());
        assert!(matches!(lap.kappa_derivatives(2.0), Err(Error::OutsideFiniteness { .. })));
    }

    #[test]
    fn derivative_examples() {
        let bg = ReproductionLaw::binary_gaussian(0.0, 1.0).unwrap();
        let t = bg.kappa_derivatives(2.0).unwrap();
        assert_relative_eq!(t.kappa_prime, 2.0, epsilon = 1e-14);
        assert_relative_eq!(t.kappa_double_prime, 1.0, epsilon = 1e-14);
        match ReproductionLaw::single_child_at(0.0).kappa_derivatives(1.0) {
            Err(Error::Degenerate { kappa_prime, .. }) => assert_eq!(kappa_prime, 0.0),
            other => panic!("expected degenerate error, got {other:?}"),
        }
        let t = pm1().kappa_derivatives(1.0).unwrap();
        assert_relative_eq!(t.kappa_prime, 1f64.tanh(), epsilon = 1e-14);
        assert_relative_eq!(t.kappa_prime, 0.761594, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_kappa_matches_formula() {
        let law = ReproductionLaw::deterministic(3, Displacement::Gaussian { mean: 0.3, variance: 2.0 }).unwrap();
        for &theta in &[-1.0, 0.2, 1.7] {
            let expected = 3f64.ln() + 0.3 * theta + theta * theta;
            assert_relative_eq!(law.kappa(theta), expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn construction_rejects_bad_laws() {
        assert!(ReproductionLaw::finite_atomic(vec![Atom {
            probability: 1.0,
            displacements: vec![]
        }])
        .is_err());
        assert!(ReproductionLaw::finite_atomic(vec![Atom {
            probability: 0.7,
            displacements: vec![1.0]
        }])
        .is_err());
        assert!(ReproductionLaw::deterministic(0, Displacement::Laplace { scale: 1.0 }).is_err());
        assert!(ReproductionLaw::poisson(-1.0, Displacement::Laplace { scale: 1.0 }).is_err());
        assert!(ReproductionLaw::binary_gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn deterministic_samplers() {
        let mut s = Stream::new(5);
        for _ in 0..20 {
            assert_eq!(ReproductionLaw::single_child_at(0.0).sample_offspring(&mut s), vec![0.0]);
            assert_eq!(pm1().sample_offspring(&mut s), vec![1.0, -1.0]);
            assert_eq!(
                ReproductionLaw::single_child_at(0.0)
                    .sample_size_biased_offspring(0.8, &mut s)
                    .unwrap(),
                vec![0.0]
            );
            assert_eq!(ReproductionLaw::single_child_at(0.0).sample_tilted_step(2.0, &mut s).unwrap(), 0.0);
        }
    }

    #[test]
    fn offspring_is_sorted() {
        let law = ReproductionLaw::poisson(3.0, Displacement::Laplace { scale: 0.5 }).unwrap();
        let mut s = Stream::new(11);
        for _ in 0..2000 {
            let o = law.sample_offspring(&mut s);
            assert!(o.windows(2).all(|w| w[0] >= w[1]));
            let b = law.sample_size_biased_offspring(0.7, &mut s).unwrap();
            assert!(!b.is_empty());
            assert!(b.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn size_biased_two_outcome_frequencies() {
        let law = ReproductionLaw::finite_atomic(vec![
            Atom { probability: 0.5, displacements: vec![0.0] },
            Atom { probability: 0.5, displacements: vec![1.0, 1.0] },
        ])
        .unwrap();
        let mut s = Stream::new(99);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| law.sample_size_biased_offspring(2f64.ln(), &mut s).unwrap().len() == 2)
            .count();
        let p = hits as f64 / n as f64;
        let se = (0.8 * 0.2 / n as f64).sqrt();
        assert!((p - 0.8).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn tilted_step_two_outcome_frequency() {
        let mut s = Stream::new(1234);
        let n = 100_000;
        let ups = (0..n).filter(|_| pm1().sample_tilted_step(1.0, &mut s).unwrap() > 0.0).count();
        let p = ups as f64 / n as f64;
        let expected = 1f64.exp() / (1f64.exp() + (-1f64).exp());
        assert_relative_eq!(expected, 0.880797, epsilon = 1e-6);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((p - expected).abs() < 4.0 * se);
    }

    #[test]
    fn lattice_detection() {
        assert!(lattice_span(&[1.0, -1.0]).is_some());
        assert!(lattice_span(&[0.0, 0.5, 1.25]).is_some());
        assert!(lattice_span(&[0.0, 1.0, 2f64.sqrt()]).is_none());
        assert_eq!(lattice_span(&[3.0, 3.0]), Some(0.0));
    }

    #[test]
    fn assumption_examples() {
        let bg = ReproductionLaw::binary_gaussian(0.0, 1.0).unwrap();
        let r = bg.check_assumptions(1.0);
        for a in [Assumption::TiltedVariance, Assumption::LogMoment, Assumption::NonLattice] {
            assert_eq!(r.verdict(a), Some(Verdict::HoldsAnalytically), "{a:?}");
        }
        assert!(r.all_hold());
        assert_eq!(pm1().check_assumptions(1.0).verdict(Assumption::NonLattice), Some(Verdict::Violated));
        let single = ReproductionLaw::single_child_at(0.0).check_assumptions(1.0);
        assert_eq!(single.verdict(Assumption::TiltedVariance), Some(Verdict::Violated));
        let pois = ReproductionLaw::poisson(2.0, Displacement::Gaussian { mean: 0.0, variance: 1.0 }).unwrap();
        assert_eq!(pois.check_assumptions(0.5).verdict(Assumption::Survival), Some(Verdict::Violated));
    }
}
