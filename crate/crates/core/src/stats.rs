//! Empirical distributions, KS distances, tail slopes and bootstrap intervals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{Purpose, Stream};
use rand::Rng;

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("empirical CDF needs at least one sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("NaN sample in empirical CDF".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted: values })
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn n_samples(&self) -> usize {
        self.sorted.len()
    }

    /// `#{x_i ≤ y} / n`.
    pub fn eval(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= y) as f64 / self.sorted.len() as f64
    }

    /// Lower empirical quantile: smallest sample with `F̂ ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    let (x, y) = (&a.sorted, &b.sorted);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample distance to a continuous CDF, checking both sides of every jump.
pub fn ks_distance_to(a: &EmpiricalCdf, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = a.sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < a.sorted.len() {
        let v = a.sorted[i];
        let before = i as f64 / n;
        while i < a.sorted.len() && a.sorted[i] == v {
            i += 1;
        }
        let after = i as f64 / n;
        let f = cdf(v);
        d = d.max((f - before).abs()).max((after - f).abs());
    }
    d.min(1.0)
}

/// Asymptotic two-sample KS critical value `c(α) √((n+m)/(nm))`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
}

/// Grid resolution used by [`tail_slope`].
pub const TAIL_GRID_POINTS: usize = 25;
pub const TAIL_MIN_SAMPLES: usize = 50;

/// Least-squares slope of `log(1 − F̂(y))` on an even grid in `[y_lo, y_hi]`.
pub fn tail_slope(cdf: &EmpiricalCdf, y_lo: f64, y_hi: f64) -> Result<TailFit> {
    if !(y_lo < y_hi) {
        return Err(Error::Parameter(format!("tail window [{y_lo}, {y_hi}] is empty")));
    }
    let n = cdf.n_samples();
    let above = n - cdf.sorted.partition_point(|&x| x <= y_lo);
    if above < TAIL_MIN_SAMPLES {
        return Err(Error::InsufficientTail {
            have: above,
            need: TAIL_MIN_SAMPLES,
        });
    }
    let pts: Vec<(f64, f64)> = (0..TAIL_GRID_POINTS)
        .map(|k| y_lo + (y_hi - y_lo) * k as f64 / (TAIL_GRID_POINTS - 1) as f64)
        .filter_map(|y| {
            let s = 1.0 - cdf.eval(y);
            (s > 0.0).then(|| (y, s.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientTail {
            have: pts.len(),
            need: 3,
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok(TailFit { slope, stderr })
}

/// Percentile bootstrap interval; replicate `r` resamples with its own
/// derived stream, so the result does not depend on thread count.
pub fn bootstrap_ci<S>(statistic: S, samples: &[f64], reps: usize, level: f64, seed: u64) -> Result<(f64, f64)>
where
    S: Fn(&[f64]) -> f64 + Sync,
{
    if reps == 0 {
        return Err(Error::Parameter("bootstrap needs at least one replicate".into()));
    }
    if samples.is_empty() {
        return Err(Error::Empty("bootstrap needs samples".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("confidence level {level} outside (0, 1)")));
    }
    let n = samples.len();
    let mut stats: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut s = Stream::replicate(seed, r, Purpose::Bootstrap);
            let resample: Vec<f64> = (0..n).map(|_| samples[s.random_range(0..n)]).collect();
            statistic(&resample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let cdf = EmpiricalCdf { sorted: stats };
    let tail = (1.0 - level) / 2.0;
    Ok((cdf.quantile(tail), cdf.quantile(1.0 - tail)))
}

/// Outcome of fitting the shift constant of a Gumbel mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub lambda_hat: f64,
    pub ks_at_fit: f64,
    pub bootstrap_ci: (f64, f64),
    pub theta: f64,
    pub n: u64,
    pub w_sample_count: usize,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};
    use statrs::function::erf::erfc;

    fn normal_cdf(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn ks_trivial_cases() {
        let a = EmpiricalCdf::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ks_distance(&a, &a.clone()), 0.0);
        let z = EmpiricalCdf::new(vec![0.0]).unwrap();
        let o = EmpiricalCdf::new(vec![1.0]).unwrap();
        assert_eq!(ks_distance(&z, &o), 1.0);
        assert!(EmpiricalCdf::new(vec![]).is_err());
    }

    #[test]
    fn gaussian_ks_below_critical_value() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut s = Stream::replicate(seed, 0, Purpose::Replicate);
            let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut s)).collect();
            let d = ks_distance_to(&EmpiricalCdf::new(xs).unwrap(), normal_cdf);
            hits += (d < 1.63 / 100_000f64.sqrt()) as u32;
        }
        assert!(hits >= 99, "{hits}/100 seeds under the 1% critical value");
    }

    #[test]
    fn exponential_tail_slope() {
        let mut s = Stream::new(5);
        let e = Exp::new(2.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| e.sample(&mut s)).collect();
        let cdf = EmpiricalCdf::new(xs).unwrap();
        let fit = tail_slope(&cdf, cdf.quantile(0.5), cdf.quantile(0.99)).unwrap();
        assert!((-2.1..=-1.9).contains(&fit.slope), "{fit:?}");
    }

    #[test]
    fn tail_slope_smoke_and_errors() {
        let mut s = Stream::new(6);
        let xs: Vec<f64> = (0..1000).map(|_| s.random::<f64>()).collect();
        let fit = tail_slope(&EmpiricalCdf::new(xs).unwrap(), 0.0, 0.5).unwrap();
        assert!(fit.slope.is_finite());
        let c = EmpiricalCdf::new(vec![3.0; 1000]).unwrap();
        assert!(matches!(tail_slope(&c, 3.0, 4.0), Err(Error::InsufficientTail { .. })));
    }

    #[test]
    fn bootstrap_cases() {
        assert_eq!(bootstrap_ci(mean, &[2.5; 50], 200, 0.9, 1).unwrap(), (2.5, 2.5));
        let mut s = Stream::new(7);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut s)).collect();
        let (lo, hi) = bootstrap_ci(mean, &xs, 1000, 0.9, 2).unwrap();
        let ratio = (hi - lo) / (2.0 * 1.645 / 100.0);
        assert!((1.0 / 1.2..=1.2).contains(&ratio), "{ratio}");
        assert_eq!(bootstrap_ci(mean, &xs, 1000, 0.9, 2).unwrap(), (lo, hi));
        assert!(matches!(bootstrap_ci(mean, &xs, 0, 0.9, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn quantiles_and_eval() {
        let c = EmpiricalCdf::new(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.eval(2.0), 0.5);
        assert_eq!(c.eval(1.999), 0.25);
        assert_eq!(c.quantile(0.5), 2.0);
        assert_eq!(c.quantile(1.0), 4.0);
        assert_eq!(c.iqr(), 2.0);
    }

    fn sample_set() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![-5i32..5, -5i32..5].prop_map(|k| k as f64 * 0.5), 1..40)
    }

    proptest! {
        #[test]
        fn ks_symmetric(a in sample_set(), b in sample_set()) {
            let (a, b) = (EmpiricalCdf::new(a).unwrap(), EmpiricalCdf::new(b).unwrap());
            let d = ks_distance(&a, &b);
            prop_assert_eq!(d, ks_distance(&b, &a));
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn ks_triangle(a in sample_set(), b in sample_set(), c in sample_set()) {
            let (a, b, c) = (
                EmpiricalCdf::new(a).unwrap(),
                EmpiricalCdf::new(b).unwrap(),
                EmpiricalCdf::new(c).unwrap(),
            );
            prop_assert!(ks_distance(&a, &c) <= ks_distance(&a, &b) + ks_distance(&b, &c) + 1e-12);
        }

        #[test]
        fn ks_matches_brute_force(a in sample_set(), b in sample_set()) {
            let (ea, eb) = (EmpiricalCdf::new(a.clone()).unwrap(), EmpiricalCdf::new(b.clone()).unwrap());
            let brute = a.iter().chain(&b).map(|&y| (ea.eval(y) - eb.eval(y)).abs()).fold(0.0, f64::max);
            prop_assert!((ks_distance(&ea, &eb) - brute).abs() < 1e-12);
        }
    }
}
