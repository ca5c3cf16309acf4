//! Rejection sampling of the decoration seen from the maximum.

use twospeed::extremes::sample_decoration;
use twospeed::laws::ReproductionLaw;
use twospeed::params::solve_theta_mixed;

fn main() -> twospeed::Result<()> {
    let law1 = ReproductionLaw::binary_gaussian(0.0, 1.0)?;
    let law2 = ReproductionLaw::binary_gaussian(0.0, 1.44)?;
    let theta = solve_theta_mixed(&law1, &law2, 0.5)?;
    let run = sample_decoration(&law2, theta, 10, 200, 5, 1_000_000)?;
    println!(
        "θ = {theta:.4}: {} accepts in {} trials, rate {:.5} (95% CI {:.5}-{:.5}, table {:.5})",
        run.samples.len(),
        run.trials,
        run.acceptance_rate,
        run.rate_ci.0,
        run.rate_ci.1,
        run.table_rate.unwrap_or(f64::NAN)
    );
    let mean_overshoot = run.overshoots.iter().sum::<f64>() / run.overshoots.len() as f64;
    println!("mean overshoot {mean_overshoot:.4} (1/θ = {:.4})", 1.0 / theta);
    for s in run.samples.iter().take(3) {
        let pts: Vec<String> = s.points.iter().take(6).map(|p| format!("{p:.3}")).collect();
        println!("  points {}", pts.join(" "));
    }
    Ok(())
}
