//! Law of the centered maximum in the fast regime and the fitted Gumbel
//! mixture.

use twospeed::engine::Model;
use twospeed::extremes::{fit_shift_constant, max_law_samples, FitOptions, MaxLawMethod};
use twospeed::laws::ReproductionLaw;
use twospeed::martingales::sample_additive_limit;
use twospeed::params::{centering, classify_regime, CenteringVariant};
use twospeed::stats::{ks_distance, tail_slope, EmpiricalCdf};

fn main() -> twospeed::Result<()> {
    let law1 = ReproductionLaw::binary_gaussian(0.0, 1.0)?;
    let law2 = ReproductionLaw::binary_gaussian(0.0, 1.44)?;
    let spec = classify_regime(&law1, &law2, 0.5)?;
    let theta = spec.working_theta();
    let model = Model::from_spec(&spec);
    let w = sample_additive_limit(&law1, theta, 5000, 60, 1)?;
    let method = MaxLawMethod::Completion { handoff: 8, grid_step: 0.02 };
    let mut cdfs = Vec::new();
    for n in [50, 100] {
        let m_n = centering(&spec, n, CenteringVariant::Theorem)?;
        let cdf = EmpiricalCdf::new(max_law_samples(&model, n, m_n, 2000, n, method)?)?;
        let slope = tail_slope(&cdf, cdf.quantile(0.9), cdf.quantile(0.99))?;
        let opts = FitOptions { bootstrap_reps: 100, ..FitOptions::default() };
        let fit = fit_shift_constant(&cdf, &w, theta, n, opts)?;
        println!(
            "n={n}: median {:.3}, iqr {:.3}, tail slope {:.3} (θ = {theta:.3}), λ̂ {:.4} in [{:.4}, {:.4}], KS at fit {:.4}",
            cdf.quantile(0.5),
            cdf.iqr(),
            slope.slope,
            fit.lambda_hat,
            fit.bootstrap_ci.0,
            fit.bootstrap_ci.1,
            fit.ks_at_fit
        );
        cdfs.push(cdf);
    }
    println!("KS between horizons: {:.4}", ks_distance(&cdfs[0], &cdfs[1]));
    Ok(())
}
