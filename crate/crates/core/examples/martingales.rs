//! Additive, derivative and CLT-weighted martingales averaged over trees.

use twospeed::laws::ReproductionLaw;
use twospeed::martingales::{critical_tilt, leaf_statistics, CltSpec, TestFunction};
use twospeed::rng::replicate_seed;
use twospeed::stats::mean_stderr;

fn main() -> twospeed::Result<()> {
    let law = ReproductionLaw::binary_gaussian(0.0, 1.0)?;
    let tilt = law.kappa_derivatives(0.5)?;
    let crit = critical_tilt(&law)?;
    let spec = CltSpec::new(TestFunction::UNIT_RAMP, &tilt)?;
    let ef = spec.gaussian_expectation();
    println!("θ = 0.5, κ = {:.5}, E f(N(0, κ'')) = {ef:.5}", tilt.kappa);
    for n in [4, 8, 12] {
        let stats: Vec<_> = (0..2000)
            .map(|i| leaf_statistics(&law, n, replicate_seed(n, i), &tilt, Some(&crit), Some(&spec)))
            .collect::<twospeed::Result<_>>()?;
        let w: Vec<f64> = stats.iter().map(|s| s.additive).collect();
        let z: Vec<f64> = stats.iter().filter_map(|s| s.derivative).collect();
        let dev: Vec<f64> = stats.iter().map(|s| (s.clt.unwrap_or(0.0) - s.additive * ef).abs()).collect();
        let ((wm, ws), (zm, zs), (dm, ds)) = (mean_stderr(&w), mean_stderr(&z), mean_stderr(&dev));
        println!("n={n:>2}  W {wm:.4}±{ws:.4}  Z {zm:.3}±{zs:.3}  |W̄ - W E f| {dm:.4}±{ds:.4}");
    }
    Ok(())
}
