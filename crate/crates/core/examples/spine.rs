//! Many-to-one identity by exact enumeration and by Monte Carlo, and a
//! spined tree.

use twospeed::engine::Pruning;
use twospeed::laws::{Atom, ReproductionLaw};
use twospeed::spine::{exact_spine_side, exact_tree_side, many_to_one_check, sample_spined_tree, PathFunctional};

fn main() -> twospeed::Result<()> {
    let law = ReproductionLaw::finite_atomic(vec![
        Atom { probability: 0.3, displacements: vec![0.5] },
        Atom { probability: 0.7, displacements: vec![1.0, -0.2, -2.0] },
    ])?;
    let theta = 0.8;
    for g in [
        PathFunctional::Constant(1.0),
        PathFunctional::EndpointAtMost(0.0),
        PathFunctional::PathBox { lo: -1.0, hi: 2.0 },
    ] {
        let lhs = exact_tree_side(&law, 4, &g)?;
        let rhs = exact_spine_side(&law, theta, 4, &g)?;
        let mc = many_to_one_check(&law, theta, 4, g, 20_000, 3)?;
        println!(
            "{g:?}: exact {lhs:.10} / {rhs:.10}; MC {:.4} / {:.4} (z {:.2})",
            mc.lhs_estimate,
            mc.rhs_estimate,
            mc.z_score()
        );
    }
    let tree = sample_spined_tree(&law, theta, 6, 11, Pruning::None)?;
    println!(
        "spined tree: {} leaves, spine at index {}, spine path {:?}",
        tree.snapshot.len(),
        tree.spine_index,
        tree.spine_positions.positions
    );
    Ok(())
}
