//! Critical tilts, regime classification and centering sequences for a few
//! pairs of binary Gaussian laws.

use twospeed::laws::ReproductionLaw;
use twospeed::params::{centering, classify_regime, speed, CenteringVariant};

fn main() -> twospeed::Result<()> {
    for (v1, v2) in [(1.0, 4.0), (1.0, 1.44), (4.0, 1.0), (1.0, 1.0)] {
        let law1 = ReproductionLaw::binary_gaussian(0.0, v1)?;
        let law2 = ReproductionLaw::binary_gaussian(0.0, v2)?;
        let spec = classify_regime(&law1, &law2, 0.5)?;
        println!(
            "σ1²={v1} σ2²={v2}: regime {:<4} θ={:.6} θ1*={:.6} θ2*={:.6} speeds {:.4}/{:.4}",
            spec.regime,
            spec.theta_mixed,
            spec.theta1_star.unwrap_or(f64::NAN),
            spec.theta2_star.unwrap_or(f64::NAN),
            speed(&law1),
            speed(&law2),
        );
        for n in [100, 1000, 10_000] {
            println!(
                "    n={n:>6}  m_n={:>12.4}  generic={:>12.4}",
                centering(&spec, n, CenteringVariant::Theorem)?,
                centering(&spec, n, CenteringVariant::Generic)?,
            );
        }
    }
    Ok(())
}
