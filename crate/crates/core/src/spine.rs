//! Spinal decomposition: the tilted spine walk, trees with a distinguished
//! line of descent, and checks of the many-to-one identity.

use crate::engine::{Model, PopulationSnapshot, Pruning};
use crate::error::{Error, Result};
use crate::laws::{LawKind, ReproductionLaw};
use crate::rng::{child_label, combine, root_label, Purpose, Stream};

/// `S_0 = 0, S_1, …, S_n` under the tilted step law.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineWalk {
    pub positions: Vec<f64>,
    pub theta: f64,
}

impl SpineWalk {
    pub fn endpoint(&self) -> f64 {
        *self.positions.last().expect("walk starts at 0")
    }
}

pub fn sample_spine_walk(law: &ReproductionLaw, theta: f64, n: u64, stream: &mut Stream) -> Result<SpineWalk> {
    let mut positions = Vec::with_capacity(n as usize + 1);
    positions.push(0.0);
    let mut x = 0.0;
    for _ in 0..n {
        x += law.sample_tilted_step(theta, stream)?;
        positions.push(x);
    }
    Ok(SpineWalk { positions, theta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinedTree {
    pub snapshot: PopulationSnapshot,
    /// Index of the spine particle in `snapshot.positions`.
    pub spine_index: usize,
    pub spine_positions: SpineWalk,
    /// Rank of the spine child among its siblings, per generation.
    pub spine_ranks: Vec<usize>,
}

/// A tree under the size-biased measure: the spine reproduces by the biased
/// law and hands the spine to a child chosen ∝ `e^{θℓ}`; everyone else
/// reproduces by the plain law. Pruning never removes the spine.
pub fn sample_spined_tree(law: &ReproductionLaw, theta: f64, n: u64, seed: u64, pruning: Pruning) -> Result<SpinedTree> {
    if n == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    #[derive(Clone, Copy)]
    struct P {
        x: f64,
        label: u64,
        spine: bool,
    }
    let mut pop = vec![P {
        x: 0.0,
        label: root_label(seed),
        spine: true,
    }];
    let mut spine_xs = vec![0.0];
    let mut ranks = Vec::with_capacity(n as usize);
    let mut pruned_any = false;
    let mut off = Vec::new();
    for _ in 0..n {
        let mut next = Vec::with_capacity(pop.len() * 2);
        for p in &pop {
            if p.spine {
                let mut s = Stream::for_purpose(p.label, Purpose::Spine);
                let k = law.sample_spine_offspring_into(theta, &mut s, &mut off)?;
                ranks.push(k);
                for (rank, &l) in off.iter().enumerate() {
                    next.push(P {
                        x: p.x + l,
                        label: child_label(p.label, rank),
                        spine: rank == k,
                    });
                }
                spine_xs.push(p.x + off[k]);
            } else {
                let mut s = Stream::for_purpose(p.label, Purpose::Offspring);
                law.sample_offspring_into(&mut s, &mut off);
                for (rank, &l) in off.iter().enumerate() {
                    next.push(P {
                        x: p.x + l,
                        label: child_label(p.label, rank),
                        spine: false,
                    });
                }
            }
        }
        match pruning {
            Pruning::None => {}
            Pruning::Window(w) => {
                let max = next.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
                let before = next.len();
                next.retain(|p| p.spine || p.x >= max - w);
                pruned_any |= next.len() < before;
            }
            Pruning::TopK(k) => {
                if next.len() > k {
                    let mut order: Vec<usize> = (0..next.len()).collect();
                    order.sort_by(|&a, &b| next[b].x.total_cmp(&next[a].x));
                    let mut keep: Vec<usize> = order[..k].to_vec();
                    if let Some(si) = next.iter().position(|p| p.spine) {
                        if !keep.contains(&si) {
                            keep.push(si);
                        }
                    }
                    keep.sort_unstable();
                    next = keep.into_iter().map(|i| next[i]).collect();
                    pruned_any = true;
                }
            }
        }
        pop = next;
    }
    let spine_index = pop.iter().position(|p| p.spine).expect("spine survives");
    Ok(SpinedTree {
        snapshot: PopulationSnapshot {
            generation: n,
            positions: pop.iter().map(|p| p.x).collect(),
            labels: pop.iter().map(|p| p.label).collect(),
            annotations: None,
            annotation_params: None,
            pruned_mass_flag: pruned_any,
        },
        spine_index,
        spine_positions: SpineWalk {
            positions: spine_xs,
            theta,
        },
        spine_ranks: ranks,
    })
}

/// Path functionals `g(V(u_1), …, V(u_n))` available to the identity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathFunctional {
    Constant(f64),
    /// `1{S_n ≤ level}`.
    EndpointAtMost(f64),
    /// `exp(−(S_n − center)² / scale)`.
    EndpointBump { center: f64, scale: f64 },
    /// `1{lo ≤ S_k ≤ hi for every k ≥ 1}`.
    PathBox { lo: f64, hi: f64 },
}

impl PathFunctional {
    /// `path` holds `S_1..S_n` (the start is excluded).
    pub fn eval(&self, path: &[f64]) -> f64 {
        let end = path.last().copied().unwrap_or(0.0);
        match *self {
            PathFunctional::Constant(c) => c,
            PathFunctional::EndpointAtMost(x) => (end <= x) as u8 as f64,
            PathFunctional::EndpointBump { center, scale } => (-(end - center).powi(2) / scale).exp(),
            PathFunctional::PathBox { lo, hi } => path.iter().all(|&s| s >= lo && s <= hi) as u8 as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManyToOneReport {
    pub lhs_estimate: f64,
    pub rhs_estimate: f64,
    pub pooled_stderr: f64,
    /// Both sides by exhaustive enumeration, for small finite-atomic laws.
    pub exact: Option<(f64, f64)>,
}

impl ManyToOneReport {
    pub fn z_score(&self) -> f64 {
        (self.lhs_estimate - self.rhs_estimate) / self.pooled_stderr
    }
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Largest unpruned left-hand tree the check simulates.
pub const MANY_TO_ONE_LEAF_CAP: f64 = 1.0 * (1u64 << 22) as f64;

/// `Σ_{|u|=n} g(path)` over one unpruned tree, by depth-first traversal.
fn tree_path_sum(law: &ReproductionLaw, n: u64, seed: u64, g: &PathFunctional) -> f64 {
    fn rec(law: &ReproductionLaw, depth: u64, n: u64, label: u64, path: &mut Vec<f64>, g: &PathFunctional, acc: &mut f64) {
        if depth == n {
            *acc += g.eval(path);
            return;
        }
        let mut s = Stream::for_purpose(label, Purpose::Offspring);
        let off = law.sample_offspring(&mut s);
        let x = path.last().copied().unwrap_or(0.0);
        for (rank, l) in off.into_iter().enumerate() {
            path.push(x + l);
            rec(law, depth + 1, n, child_label(label, rank), path, g, acc);
            path.pop();
        }
    }
    let mut acc = 0.0;
    let mut path = Vec::with_capacity(n as usize);
    rec(law, 0, n, root_label(seed), &mut path, g, &mut acc);
    acc
}

/// Monte Carlo estimates of both sides of
/// `E Σ_{|u|=n} g(V(u_1..u_n)) = E[e^{−θS_n + nκ(θ)} g(S_1..S_n)]`.
pub fn many_to_one_check(
    law: &ReproductionLaw,
    theta: f64,
    n: u64,
    g: PathFunctional,
    reps: u64,
    seed: u64,
) -> Result<ManyToOneReport> {
    if reps < 2 {
        return Err(Error::Parameter("many-to-one check needs at least 2 replicates".into()));
    }
    let kappa = law.kappa(theta);
    if !kappa.is_finite() {
        let (lo, hi) = law.finiteness_interval();
        return Err(Error::OutsideFiniteness { theta, lo, hi });
    }
    let expected_leaves = law.mean_count().powi(n as i32);
    if expected_leaves > MANY_TO_ONE_LEAF_CAP {
        return Err(Error::Budget {
            budget: MANY_TO_ONE_LEAF_CAP as usize,
            generation: n as usize,
            population: expected_leaves as usize,
        });
    }
    let lhs: Vec<f64> = (0..reps)
        .map(|i| tree_path_sum(law, n, combine(seed, 2 * i), &g))
        .collect();
    let rhs: Vec<f64> = (0..reps)
        .map(|i| {
            let mut s = Stream::replicate(seed, 2 * i + 1, Purpose::Spine);
            let walk = sample_spine_walk(law, theta, n, &mut s)?;
            let sn = walk.endpoint();
            Ok((-theta * sn + n as f64 * kappa).exp() * g.eval(&walk.positions[1..]))
        })
        .collect::<Result<_>>()?;
    let (ml, vl) = mean_and_var(&lhs);
    let (mr, vr) = mean_and_var(&rhs);
    let exact = match law.kind() {
        LawKind::FiniteAtomic(_) if n <= 4 => Some((exact_tree_side(law, n, &g)?, exact_spine_side(law, theta, n, &g)?)),
        _ => None,
    };
    Ok(ManyToOneReport {
        lhs_estimate: ml,
        rhs_estimate: mr,
        pooled_stderr: (vl / reps as f64 + vr / reps as f64).sqrt(),
        exact,
    })
}

const ENUMERATION_CAP: usize = 1 << 20;

/// `E Σ_{|u|=n} g(path)` under the plain law: every internal node averages
/// over its reproduction outcomes, with no tilting involved.
pub fn exact_tree_side(law: &ReproductionLaw, n: u64, g: &PathFunctional) -> Result<f64> {
    let LawKind::FiniteAtomic(atoms) = law.kind() else {
        return Err(Error::Unsupported("exact enumeration needs a finite-atomic law".into()));
    };
    let width: usize = atoms.iter().map(|a| a.displacements.len()).sum();
    if (width as f64).powi(n as i32) > ENUMERATION_CAP as f64 {
        return Err(Error::Budget {
            budget: ENUMERATION_CAP,
            generation: n as usize,
            population: (width as f64).powi(n as i32) as usize,
        });
    }
    fn rec(atoms: &[crate::laws::Atom], left: u64, path: &mut Vec<f64>, g: &PathFunctional) -> f64 {
        if left == 0 {
            return g.eval(path);
        }
        let x = path.last().copied().unwrap_or(0.0);
        let mut total = 0.0;
        for a in atoms.iter().filter(|a| a.probability > 0.0) {
            let mut inner = 0.0;
            for &l in &a.displacements {
                path.push(x + l);
                inner += rec(atoms, left - 1, path, g);
                path.pop();
            }
            total += a.probability * inner;
        }
        total
    }
    Ok(rec(atoms, n, &mut Vec::with_capacity(n as usize), g))
}

/// `E[e^{−θS_n+nκ} g(S_1..S_n)]` by enumerating every spine path.
pub fn exact_spine_side(law: &ReproductionLaw, theta: f64, n: u64, g: &PathFunctional) -> Result<f64> {
    let LawKind::FiniteAtomic(atoms) = law.kind() else {
        return Err(Error::Unsupported("exact enumeration needs a finite-atomic law".into()));
    };
    let kappa = law.kappa(theta);
    let steps: Vec<(f64, f64)> = atoms
        .iter()
        .flat_map(|a| a.displacements.iter().map(move |&l| (l, a.probability * (theta * l - kappa).exp())))
        .filter(|s| s.1 > 0.0)
        .collect();
    let mut paths: Vec<(f64, Vec<f64>)> = vec![(1.0, Vec::new())];
    for _ in 0..n {
        paths = paths
            .into_iter()
            .flat_map(|(p, path)| {
                let x = path.last().copied().unwrap_or(0.0);
                steps.iter().map(move |&(l, q)| {
                    let mut np = path.clone();
                    np.push(x + l);
                    (p * q, np)
                })
            })
            .collect();
        if paths.len() > ENUMERATION_CAP {
            return Err(Error::Budget {
                budget: ENUMERATION_CAP,
                generation: 0,
                population: paths.len(),
            });
        }
    }
    Ok(paths
        .iter()
        .map(|(p, path)| {
            let sn = path.last().copied().unwrap_or(0.0);
            p * (-theta * sn + n as f64 * kappa).exp() * g.eval(path)
        })
        .sum())
}

/// Empirical frequencies of the spine child's rank over `trials` one-step
/// draws, next to the `e^{θℓ}`-proportional expectation for a finite-atomic
/// law (expected weights per (outcome, rank)).
pub fn spine_selection_frequencies(law: &ReproductionLaw, theta: f64, trials: u64, seed: u64) -> Result<Vec<(f64, f64)>> {
    let LawKind::FiniteAtomic(atoms) = law.kind() else {
        return Err(Error::Unsupported("selection frequencies need a finite-atomic law".into()));
    };
    let kappa = law.kappa(theta);
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut expected = Vec::new();
    for (j, a) in atoms.iter().enumerate() {
        for (i, &l) in a.displacements.iter().enumerate() {
            cells.push((j, i));
            expected.push(a.probability * (theta * l - kappa).exp());
        }
    }
    let mut counts = vec![0u64; cells.len()];
    let mut off = Vec::new();
    let mut s = Stream::replicate(seed, 0, Purpose::Spine);
    for _ in 0..trials {
        let k = law.sample_spine_offspring_into(theta, &mut s, &mut off)?;
        // Identify the outcome by its sorted displacement multiset.
        let j = atoms
            .iter()
            .position(|a| a.displacements == off)
            .expect("offspring matches an outcome");
        let c = cells.iter().position(|&c| c == (j, k)).expect("cell");
        counts[c] += 1;
    }
    Ok(counts
        .iter()
        .zip(expected)
        .map(|(&c, e)| (c as f64 / trials as f64, e))
        .collect())
}

/// Homogeneous model of `law`, for callers that simulate the plain tree.
pub fn plain_model(law: &ReproductionLaw) -> Model {
    Model::Homogeneous(law.clone())
}
