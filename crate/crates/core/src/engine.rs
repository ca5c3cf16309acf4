//! Forward simulation of homogeneous and two-speed branching random walks.
//!
//! Particles carry Ulam-Harris labels and every offspring draw is keyed by
//! the parent's label, so the tree is a deterministic function of the master
//! seed. Pruning only decides which particles are kept; the survivors'
//! offspring are the same draws they would get in the full tree.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extremes::{PointOrigin, PointSample};
use crate::laws::ReproductionLaw;
use crate::params::{split_generation, RegimeSpec};
use crate::rng::{child_label, root_label, Purpose, Stream};

/// Default cap on stored particles (about 1.5 GiB with annotations).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 26;

const PAR_THRESHOLD: usize = 1 << 15;
const PAR_CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Homogeneous(ReproductionLaw),
    /// `law1` drives the steps from generations `g < ⌊tn⌋`, `law2` the rest.
    TwoSpeed {
        law1: ReproductionLaw,
        law2: ReproductionLaw,
        t: f64,
    },
}

impl Model {
    pub fn from_spec(spec: &RegimeSpec) -> Self {
        Model::TwoSpeed {
            law1: spec.law1.clone(),
            law2: spec.law2.clone(),
            t: spec.t,
        }
    }

    /// Law used by particles of `generation` to produce generation + 1.
    #[inline]
    pub fn law_at(&self, generation: u64, horizon: u64) -> &ReproductionLaw {
        match self {
            Model::Homogeneous(law) => law,
            Model::TwoSpeed { law1, law2, t } => {
                if generation < split_generation(*t, horizon) {
                    law1
                } else {
                    law2
                }
            }
        }
    }

    pub fn laws(&self) -> Vec<&ReproductionLaw> {
        match self {
            Model::Homogeneous(law) => vec![law],
            Model::TwoSpeed { law1, law2, .. } => vec![law1, law2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pruning {
    None,
    /// Keep the `k` highest particles of every generation.
    TopK(usize),
    /// Drop particles more than `w` below the generation maximum.
    Window(f64),
}

impl Pruning {
    /// Window of `10/θ` below the maximum.
    pub fn default_window(theta: f64) -> Self {
        Pruning::Window(10.0 / theta)
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Pruning::None)
    }
}

/// Constants of the trajectory events tracked by annotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationParams {
    pub theta: f64,
    pub kappa_prime: f64,
    /// Sibling-weight growth rate `a`.
    pub a: f64,
    /// Extra slope `L` of the barrier line.
    pub l: f64,
}

impl AnnotationParams {
    /// `a = (κ − θκ′)/4`, `L = (κ − θκ′)/(4θ)` at a tilt with `θκ′ < κ`.
    pub fn with_default_constants(law: &ReproductionLaw, theta: f64) -> Result<Self> {
        let p = law.kappa_derivatives(theta)?;
        let slack = p.kappa - theta * p.kappa_prime;
        if slack <= 0.0 {
            return Err(Error::Parameter(format!(
                "truncation constants need θκ′(θ) < κ(θ), got κ − θκ′ = {slack}"
            )));
        }
        Ok(Self {
            theta,
            kappa_prime: p.kappa_prime,
            a: slack / 4.0,
            l: slack / (4.0 * theta),
        })
    }
}

/// Running maxima along the ancestral line of a particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleAnnotation {
    /// `max_{1≤k≤g} [V(u_k) − κ′k − Lk]`.
    pub path_max_excess: f64,
    /// `max_{0≤k<g} [log Σ_i e^{θ(V(u_k i) − V(u_k))} − a(k+1)]`.
    pub sibling_weight_excess: f64,
}

impl ParticleAnnotation {
    const ROOT: ParticleAnnotation = ParticleAnnotation {
        path_max_excess: f64::NEG_INFINITY,
        sibling_weight_excess: f64::NEG_INFINITY,
    };

    /// Membership in both truncation events at level `big_a`.
    pub fn within(&self, big_a: f64) -> bool {
        self.in_sibling_event(big_a) && self.path_max_excess <= big_a
    }

    pub fn in_sibling_event(&self, big_a: f64) -> bool {
        big_a > 0.0 && self.sibling_weight_excess < big_a.ln()
    }
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub model: Model,
    pub horizon: u64,
    pub pruning: Pruning,
    pub annotate: Option<AnnotationParams>,
    pub master_seed: u64,
    pub memory_budget: usize,
    /// Refuse pruning so that martingales computed on the result are unbiased.
    pub martingale_grade: bool,
}

impl SimulationPlan {
    pub fn new(model: Model, horizon: u64, master_seed: u64) -> Self {
        Self {
            model,
            horizon,
            pruning: Pruning::None,
            annotate: None,
            master_seed,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            martingale_grade: false,
        }
    }

    pub fn with_pruning(mut self, pruning: Pruning) -> Self {
        self.pruning = pruning;
        self
    }

    pub fn with_annotations(mut self, params: AnnotationParams) -> Self {
        self.annotate = Some(params);
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.memory_budget = budget;
        self
    }

    pub fn martingale_grade(mut self) -> Self {
        self.martingale_grade = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        match self.pruning {
            Pruning::TopK(0) => return Err(Error::Parameter("TopK needs k ≥ 1".into())),
            Pruning::Window(w) if !(w.is_finite() && w > 0.0) => {
                return Err(Error::Parameter(format!("window must be positive and finite, got {w}")))
            }
            _ => {}
        }
        if self.martingale_grade && !self.pruning.is_none() {
            return Err(Error::MartingaleBias);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSnapshot {
    pub generation: u64,
    pub positions: Vec<f64>,
    pub labels: Vec<u64>,
    pub annotations: Option<Vec<ParticleAnnotation>>,
    /// Constants the annotations were computed with.
    pub annotation_params: Option<AnnotationParams>,
    pub pruned_mass_flag: bool,
}

impl PopulationSnapshot {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSummary {
    pub generation: u64,
    pub population: usize,
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub snapshot: PopulationSnapshot,
    pub summaries: Vec<GenerationSummary>,
}

#[derive(Clone, Copy)]
struct Particle {
    position: f64,
    label: u64,
    note: ParticleAnnotation,
}

fn summarize(generation: u64, ps: &[Particle]) -> GenerationSummary {
    let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
    for p in ps {
        max = max.max(p.position);
        min = min.min(p.position);
    }
    GenerationSummary {
        generation,
        population: ps.len(),
        max,
        min,
    }
}

fn expand_chunk(
    parents: &[Particle],
    law: &ReproductionLaw,
    generation: u64,
    annotate: Option<&AnnotationParams>,
    out: &mut Vec<Particle>,
) {
    let mut offspring = Vec::new();
    for p in parents {
        let mut s = Stream::for_purpose(p.label, Purpose::Offspring);
        law.sample_offspring_into(&mut s, &mut offspring);
        let sibling_excess = annotate.map(|a| {
            let shift = offspring.first().copied().unwrap_or(0.0);
            let sum: f64 = offspring.iter().map(|&l| (a.theta * (l - shift)).exp()).sum();
            a.theta * shift + sum.ln() - a.a * (generation + 1) as f64
        });
        for (rank, &l) in offspring.iter().enumerate() {
            let position = p.position + l;
            let note = match (annotate, sibling_excess) {
                (Some(a), Some(sib)) => ParticleAnnotation {
                    path_max_excess: p
                        .note
                        .path_max_excess
                        .max(position - (a.kappa_prime + a.l) * (generation + 1) as f64),
                    sibling_weight_excess: p.note.sibling_weight_excess.max(sib),
                },
                _ => p.note,
            };
            out.push(Particle {
                position,
                label: child_label(p.label, rank),
                note,
            });
        }
    }
}

fn prune(ps: Vec<Particle>, pruning: Pruning) -> (Vec<Particle>, bool) {
    match pruning {
        Pruning::None => (ps, false),
        Pruning::Window(w) => {
            let max = ps.iter().map(|p| p.position).fold(f64::NEG_INFINITY, f64::max);
            let before = ps.len();
            let kept: Vec<Particle> = ps.into_iter().filter(|p| p.position >= max - w).collect();
            let pruned = kept.len() < before;
            (kept, pruned)
        }
        Pruning::TopK(k) => {
            if ps.len() <= k {
                return (ps, false);
            }
            let mut order: Vec<usize> = (0..ps.len()).collect();
            order.sort_by(|&a, &b| ps[b].position.total_cmp(&ps[a].position));
            let mut keep = order[..k].to_vec();
            keep.sort_unstable();
            (keep.into_iter().map(|i| ps[i]).collect(), true)
        }
    }
}

/// Runs `plan` and returns the final generation plus per-generation summaries.
pub fn simulate(plan: &SimulationPlan) -> Result<SimulationOutput> {
    plan.validate()?;
    let annotate = plan.annotate.as_ref();
    let mut population = vec![Particle {
        position: 0.0,
        label: root_label(plan.master_seed),
        note: ParticleAnnotation::ROOT,
    }];
    let mut summaries = vec![summarize(0, &population)];
    let mut pruned_any = false;

    for g in 0..plan.horizon {
        let law = plan.model.law_at(g, plan.horizon);
        let next = if population.len() >= PAR_THRESHOLD {
            let parts: Vec<Vec<Particle>> = population
                .par_chunks(PAR_CHUNK)
                .map(|chunk| {
                    let mut out = Vec::with_capacity(chunk.len() * 2);
                    expand_chunk(chunk, law, g, annotate, &mut out);
                    out
                })
                .collect();
            let total: usize = parts.iter().map(Vec::len).sum();
            if plan.pruning.is_none() && total > plan.memory_budget {
                return Err(Error::Budget {
                    budget: plan.memory_budget,
                    generation: (g + 1) as usize,
                    population: total,
                });
            }
            let mut next = Vec::with_capacity(total);
            for p in parts {
                next.extend(p);
            }
            next
        } else {
            let mut next = Vec::with_capacity(population.len() * 2);
            expand_chunk(&population, law, g, annotate, &mut next);
            next
        };
        if next.is_empty() {
            return Err(Error::Extinction((g + 1) as usize));
        }
        if plan.pruning.is_none() && next.len() > plan.memory_budget {
            return Err(Error::Budget {
                budget: plan.memory_budget,
                generation: (g + 1) as usize,
                population: next.len(),
            });
        }
        let (kept, pruned) = prune(next, plan.pruning);
        if kept.len() > plan.memory_budget {
            return Err(Error::Budget {
                budget: plan.memory_budget,
                generation: (g + 1) as usize,
                population: kept.len(),
            });
        }
        pruned_any |= pruned;
        summaries.push(summarize(g + 1, &kept));
        population = kept;
    }

    let snapshot = PopulationSnapshot {
        generation: plan.horizon,
        positions: population.iter().map(|p| p.position).collect(),
        labels: population.iter().map(|p| p.label).collect(),
        annotations: annotate.map(|_| population.iter().map(|p| p.note).collect()),
        annotation_params: plan.annotate,
        pruned_mass_flag: pruned_any,
    };
    Ok(SimulationOutput { snapshot, summaries })
}

/// `M_n`, the highest position of the snapshot.
pub fn max_of(snapshot: &PopulationSnapshot) -> f64 {
    snapshot.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Centered positions `V − m_n` at or above `cutoff`, sorted non-increasing.
pub fn extremal_points(snapshot: &PopulationSnapshot, m_n: f64, cutoff: f64) -> Result<PointSample> {
    if !cutoff.is_finite() {
        return Err(Error::Parameter(format!("cutoff must be finite, got {cutoff}")));
    }
    let mut points: Vec<f64> = snapshot
        .positions
        .iter()
        .map(|v| v - m_n)
        .filter(|&x| x >= cutoff)
        .collect();
    points.sort_by(|a, b| b.total_cmp(a));
    Ok(PointSample {
        points,
        origin: PointOrigin::ExtremalProcess { m_n, cutoff },
        weight: 1.0,
        population: snapshot.len(),
    })
}

/// Visits every generation-`horizon` position of the unpruned tree depth
/// first. Leaves arrive in the same order as in [`simulate`]'s snapshot and
/// carry identical values. Returns the number of leaves.
pub fn fold_leaves(model: &Model, horizon: u64, master_seed: u64, visit: impl FnMut(f64)) -> Result<u64> {
    fold_prefix(model, horizon, horizon, master_seed, visit)
}

/// Like [`fold_leaves`] but stops at generation `depth ≤ horizon` of the
/// horizon-`horizon` tree (the law switch still sits at `⌊t·horizon⌋`).
pub fn fold_prefix(model: &Model, horizon: u64, depth: u64, master_seed: u64, mut visit: impl FnMut(f64)) -> Result<u64> {
    if depth > horizon {
        return Err(Error::Parameter(format!("prefix depth {depth} exceeds horizon {horizon}")));
    }
    if depth == 0 {
        visit(0.0);
        return Ok(1);
    }
    let mut buffers: Vec<Vec<f64>> = (0..depth).map(|_| Vec::new()).collect();
    let mut leaves = 0u64;
    let mut walk = Walk {
        model,
        horizon,
        depth,
        leaves: &mut leaves,
    };
    walk.descend(0, 0.0, root_label(master_seed), &mut buffers, &mut visit);
    if leaves == 0 {
        return Err(Error::Extinction(depth as usize));
    }
    Ok(leaves)
}

struct Walk<'a> {
    model: &'a Model,
    horizon: u64,
    depth: u64,
    leaves: &'a mut u64,
}

impl Walk<'_> {
    fn descend(&mut self, generation: u64, position: f64, label: u64, buffers: &mut [Vec<f64>], visit: &mut impl FnMut(f64)) {
        let law = self.model.law_at(generation, self.horizon);
        let (head, tail) = buffers.split_first_mut().expect("one buffer per level");
        let mut s = Stream::for_purpose(label, Purpose::Offspring);
        law.sample_offspring_into(&mut s, head);
        if generation + 1 == self.depth {
            for &l in head.iter() {
                visit(position + l);
            }
            *self.leaves += head.len() as u64;
            return;
        }
        for rank in 0..head.len() {
            let l = head[rank];
            self.descend(generation + 1, position + l, child_label(label, rank), tail, visit);
        }
    }
}

/// All generation-`horizon` positions of the unpruned tree, in label order.
pub fn leaf_positions(model: &Model, horizon: u64, master_seed: u64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    fold_leaves(model, horizon, master_seed, |x| out.push(x))?;
    Ok(out)
}

/// Unpruned `M_n` without storing the tree.
pub fn unpruned_max(model: &Model, horizon: u64, master_seed: u64) -> Result<f64> {
    let mut m = f64::NEG_INFINITY;
    fold_leaves(model, horizon, master_seed, |x| m = m.max(x))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{Atom, Displacement};
    use crate::rng::replicate_seed;

    fn binary_zero() -> ReproductionLaw {
        ReproductionLaw::deterministic(2, Displacement::PointMasses(vec![(0.0, 1.0)])).unwrap()
    }

    fn bg() -> ReproductionLaw {
        ReproductionLaw::binary_gaussian(0.0, 1.0).unwrap()
    }

    #[test]
    fn deterministic_trees() {
        let out = simulate(&SimulationPlan::new(
            Model::Homogeneous(ReproductionLaw::single_child_at(1.0)),
            7,
            1,
        ))
        .unwrap();
        assert_eq!(out.snapshot.positions, vec![7.0]);
        assert_eq!(max_of(&out.snapshot), 7.0);

        let out = simulate(&SimulationPlan::new(Model::Homogeneous(binary_zero()), 10, 1)).unwrap();
        assert_eq!(out.snapshot.len(), 1024);
        assert!(out.snapshot.positions.iter().all(|&x| x == 0.0));
        assert_eq!(max_of(&out.snapshot), 0.0);
        assert_eq!(out.summaries.len(), 11);
        assert_eq!(out.summaries[10].population, 1024);
    }

    #[test]
    fn law_switch_happens_at_split_generation() {
        for n in 1..40u64 {
            for &t in &[0.1, 0.25, 0.5, 0.77, 0.9] {
                let model = Model::TwoSpeed {
                    law1: ReproductionLaw::single_child_at(1.0),
                    law2: ReproductionLaw::single_child_at(-1.0),
                    t,
                };
                let out = simulate(&SimulationPlan::new(model, n, 3)).unwrap();
                let tn = split_generation(t, n) as f64;
                assert_eq!(out.snapshot.positions, vec![tn - (n as f64 - tn)]);
            }
        }
    }

    #[test]
    fn depth_first_matches_generation_order() {
        let model = Model::TwoSpeed {
            law1: bg(),
            law2: ReproductionLaw::poisson(2.5, Displacement::Laplace { scale: 0.7 }).unwrap(),
            t: 0.4,
        };
        for seed in 0..20 {
            let plan = SimulationPlan::new(model.clone(), 9, seed);
            match simulate(&plan) {
                Ok(out) => {
                    let dfs = leaf_positions(&model, 9, seed).unwrap();
                    assert_eq!(out.snapshot.positions, dfs);
                }
                Err(Error::Extinction(_)) => assert!(leaf_positions(&model, 9, seed).is_err()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn pruning_keeps_survivor_draws() {
        let model = Model::Homogeneous(bg());
        for seed in 0..50 {
            let full = simulate(&SimulationPlan::new(model.clone(), 10, seed)).unwrap();
            let pruned = simulate(&SimulationPlan::new(model.clone(), 10, seed).with_pruning(Pruning::TopK(8))).unwrap();
            assert!(pruned.snapshot.len() <= 8);
            for (x, l) in pruned.snapshot.positions.iter().zip(&pruned.snapshot.labels) {
                let i = full.snapshot.labels.iter().position(|m| m == l).unwrap();
                assert_eq!(full.snapshot.positions[i], *x);
            }
        }
    }

    #[test]
    fn window_agrees_with_unpruned_at_small_horizon() {
        let model = Model::Homogeneous(bg());
        let mut same = 0;
        for i in 0..1000 {
            let seed = replicate_seed(77, i);
            let full = unpruned_max(&model, 12, seed).unwrap();
            let win = simulate(&SimulationPlan::new(model.clone(), 12, seed).with_pruning(Pruning::Window(12.0))).unwrap();
            if max_of(&win.snapshot) == full {
                same += 1;
            }
        }
        assert!(same >= 990, "{same}");
    }

    #[test]
    fn budget_is_enforced() {
        let plan = SimulationPlan::new(Model::Homogeneous(bg()), 12, 0).with_budget(1000);
        assert!(matches!(simulate(&plan), Err(Error::Budget { .. })));
        let plan = SimulationPlan::new(Model::Homogeneous(bg()), 12, 0)
            .with_budget(1000)
            .with_pruning(Pruning::TopK(100));
        assert!(simulate(&plan).is_ok());
    }

    #[test]
    fn martingale_grade_refuses_pruning() {
        let plan = SimulationPlan::new(Model::Homogeneous(bg()), 4, 0)
            .with_pruning(Pruning::Window(3.0))
            .martingale_grade();
        assert_eq!(simulate(&plan).unwrap_err(), Error::MartingaleBias);
        assert!(SimulationPlan::new(Model::Homogeneous(bg()), 0, 0).validate().is_err());
        assert!(SimulationPlan::new(Model::Homogeneous(bg()), 3, 0)
            .with_pruning(Pruning::Window(-1.0))
            .validate()
            .is_err());
    }

    #[test]
    fn extremal_points_examples() {
        let snap = simulate(&SimulationPlan::new(
            Model::Homogeneous(ReproductionLaw::single_child_at(1.0)),
            7,
            1,
        ))
        .unwrap()
        .snapshot;
        assert_eq!(extremal_points(&snap, 5.0, 0.0).unwrap().points, vec![2.0]);
        assert!(extremal_points(&snap, 5.0, 10.0).unwrap().points.is_empty());
        assert!(extremal_points(&snap, 5.0, f64::INFINITY).is_err());
    }

    /// Exact law of `M_n` for a finite-atomic law by enumerating every
    /// outcome assignment of the tree.
    fn enumerate_max(atoms: &[Atom], depth: u32) -> Vec<(f64, f64)> {
        if depth == 0 {
            return vec![(0.0, 1.0)];
        }
        let sub = enumerate_max(atoms, depth - 1);
        let mut out: Vec<(f64, f64)> = Vec::new();
        for atom in atoms {
            let mut combos = vec![(f64::NEG_INFINITY, atom.probability)];
            for &l in &atom.displacements {
                combos = combos
                    .iter()
                    .flat_map(|&(m, p)| sub.iter().map(move |&(x, q)| (m.max(l + x), p * q)))
                    .collect();
            }
            out.extend(combos);
        }
        out
    }

    #[test]
    fn max_law_matches_enumeration() {
        let atoms = vec![
            Atom { probability: 0.5, displacements: vec![1.0, -1.0] },
            Atom { probability: 0.5, displacements: vec![0.0, 0.0] },
        ];
        let exact: f64 = enumerate_max(&atoms, 3).iter().filter(|e| e.0 == 3.0).map(|e| e.1).sum();
        let model = Model::Homogeneous(ReproductionLaw::finite_atomic(atoms).unwrap());
        let n = 100_000u64;
        let hits = (0..n)
            .filter(|&i| unpruned_max(&model, 3, replicate_seed(9, i)).unwrap() == 3.0)
            .count();
        let p = hits as f64 / n as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p - exact).abs() < 3.0 * se, "{p} vs {exact}");

        let pm1 = ReproductionLaw::finite_atomic(vec![Atom {
            probability: 1.0,
            displacements: vec![1.0, -1.0],
        }])
        .unwrap();
        assert!((0..100).all(|i| unpruned_max(&Model::Homogeneous(pm1.clone()), 3, i).unwrap() == 3.0));
    }

    #[test]
    fn mean_population_growth() {
        let law = ReproductionLaw::poisson(1.6, Displacement::Gaussian { mean: 0.0, variance: 1.0 }).unwrap();
        let model = Model::Homogeneous(law);
        let n = 8;
        let reps = 1000;
        let mut sizes = Vec::new();
        for i in 0..reps {
            let plan = SimulationPlan::new(model.clone(), n, replicate_seed(5, i));
            sizes.push(match simulate(&plan) {
                Ok(out) => out.snapshot.len() as f64,
                Err(Error::Extinction(_)) => 0.0,
                Err(e) => panic!("{e}"),
            });
        }
        let mean = sizes.iter().sum::<f64>() / reps as f64;
        let var = sizes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        let expected = 1.6f64.powi(n as i32);
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected} (se {se})");
    }
}
