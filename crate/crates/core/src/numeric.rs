//! Small numerical helpers shared across modules.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<NeumaierSum>().value()
}

/// Root of an increasing function with a sign change on `[a, b]`
/// (`f(a) < 0 < f(b)`), by Newton steps safeguarded with bisection.
pub fn safeguarded_newton(
    f: impl Fn(f64) -> (f64, f64),
    mut a: f64,
    mut b: f64,
    max_iter: usize,
    residual_tol: f64,
) -> Result<f64> {
    let mut x = 0.5 * (a + b);
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx.abs() <= residual_tol {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(a.abs()) {
            return Ok(x);
        }
        let newton = x - fx / dfx;
        x = if dfx > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
    }
    Err(Error::NumericalFailure { iterations: max_iter, lo: a, hi: b })
}

/// Minimiser of a unimodal function on `[a, b]` by golden-section search.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Plain bisection for an increasing function with `f(a) ≤ 0 ≤ f(b)`.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) <= 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn newton_finds_sqrt2() {
        let r = safeguarded_newton(|x| (x * x - 2.0, 2.0 * x), 0.0, 3.0, 200, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, _) = golden_section_min(|x| (x - 0.3).powi(2), -2.0, 2.0, 1e-12, 500);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
