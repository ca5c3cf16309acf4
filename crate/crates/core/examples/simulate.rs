//! One pruned two-speed simulation and its per-generation profile.

use twospeed::engine::{max_of, simulate, Model, Pruning, SimulationPlan};
use twospeed::laws::ReproductionLaw;
use twospeed::params::{centering, classify_regime, CenteringVariant};

fn main() -> twospeed::Result<()> {
    let law1 = ReproductionLaw::binary_gaussian(0.0, 1.0)?;
    let law2 = ReproductionLaw::binary_gaussian(0.0, 1.44)?;
    let spec = classify_regime(&law1, &law2, 0.5)?;
    let n = 200;
    let plan = SimulationPlan::new(Model::from_spec(&spec), n, 7).with_pruning(Pruning::default_window(spec.working_theta()));
    let out = simulate(&plan)?;
    for s in out.summaries.iter().step_by(20) {
        println!("gen {:>4}  particles {:>6}  max {:>9.3}  min {:>9.3}", s.generation, s.population, s.max, s.min);
    }
    let m_n = centering(&spec, n, CenteringVariant::Theorem)?;
    let max = max_of(&out.snapshot);
    println!("M_n = {max:.3}, m_n = {m_n:.3}, M_n - m_n = {:.3}", max - m_n);
    Ok(())
}
