//! Empirical CDFs, KS distances, tail slopes and bootstrap intervals on
//! exponential samples.

use rand::SeedableRng;
use rand_distr::{Distribution, Exp};
use twospeed::stats::{bootstrap_ci, ks_critical_value, ks_distance, ks_distance_to, tail_slope, EmpiricalCdf};

fn main() -> twospeed::Result<()> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let exp = Exp::new(2.0).expect("positive rate");
    let a: Vec<f64> = (0..5000).map(|_| exp.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..5000).map(|_| exp.sample(&mut rng)).collect();
    let (ca, cb) = (EmpiricalCdf::new(a.clone())?, EmpiricalCdf::new(b)?);
    println!("two-sample KS {:.4} (5% critical {:.4})", ks_distance(&ca, &cb), ks_critical_value(0.05, 5000, 5000));
    println!("KS to Exp(2) {:.4}", ks_distance_to(&ca, |x| if x < 0.0 { 0.0 } else { 1.0 - (-2.0 * x).exp() }));
    let fit = tail_slope(&ca, ca.quantile(0.5), ca.quantile(0.99))?;
    println!("tail slope {:.3} ± {:.3} (expected -2)", fit.slope, fit.stderr);
    let (lo, hi) = bootstrap_ci(|xs| xs.iter().sum::<f64>() / xs.len() as f64, &a, 500, 0.95, 9)?;
    println!("mean {:.4}, 95% bootstrap interval [{lo:.4}, {hi:.4}]", ca.mean());
    Ok(())
}
