//! Piecewise monotone cubic Hermite interpolation (Fritsch–Carlson slopes
//! with the Fritsch–Butland weighted harmonic mean, as in PCHIP).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    /// Set when the abscissae are equally spaced, enabling O(1) lookup.
    uniform_step: Option<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant. `xs` must be strictly increasing with at least two points.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::InvalidConfig(format!(
                "interpolation needs >= 2 matching points, got {} abscissae and {} ordinates",
                n,
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "interpolation abscissae must be strictly increasing".into(),
            ));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = ys.windows(2).zip(&h).map(|(w, hk)| (w[1] - w[0]) / hk).collect();

        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                if d0 * d1 > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }

        let span = xs[n - 1] - xs[0];
        let step = span / (n - 1) as f64;
        let uniform = h.iter().all(|hk| (hk - step).abs() <= 1e-9 * step);
        Ok(Self {
            xs,
            ys,
            slopes,
            uniform_step: uniform.then_some(step),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    /// Value at `x`, or `None` outside the tabulated domain.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        (x >= lo && x <= hi).then(|| self.eval_inside(x))
    }

    /// Value at `x` clamped into the domain (the end values are held, never
    /// extrapolated).
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        self.eval_inside(x.clamp(lo, hi))
    }

    fn interval(&self, x: f64) -> usize {
        let last = self.xs.len() - 2;
        match self.uniform_step {
            Some(step) => {
                let guess = (((x - self.xs[0]) / step) as usize).min(last);
                // Rounding can land one cell off.
                if x < self.xs[guess] && guess > 0 {
                    guess - 1
                } else if x > self.xs[guess + 1] && guess < last {
                    guess + 1
                } else {
                    guess
                }
            }
            None => self.xs.partition_point(|&k| k <= x).saturating_sub(1).min(last),
        }
    }

    fn eval_inside(&self, x: f64) -> f64 {
        let k = self.interval(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

/// Three-point end slope, shape-preserving.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive, with exact endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v[n - 1] = hi;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let xs = linspace(0.0, 2.0, 9);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let f = MonotoneCubic::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((f.eval(*x).unwrap() - y).abs() < 1e-14);
        }
        assert!((f.eval(0.37).unwrap() - (3.0 * 0.37 - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn never_extrapolates() {
        let f = MonotoneCubic::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0]).unwrap();
        assert!(f.eval(-0.1).is_none());
        assert!(f.eval(2.1).is_none());
        assert_eq!(f.eval_clamped(5.0), 4.0);
    }

    #[test]
    fn smooth_function_accuracy() {
        let xs = linspace(0.0, 1.0, 201);
        let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let f = MonotoneCubic::new(xs, ys).unwrap();
        let worst = (0..997)
            .map(|i| {
                let x = i as f64 / 996.0;
                (f.eval(x).unwrap() - x.exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn rejects_unsorted() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn preserves_monotone_data(steps in prop::collection::vec(0.0f64..5.0, 3..30),
                                   gaps in prop::collection::vec(0.01f64..2.0, 30)) {
            let n = steps.len();
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            let (mut x, mut y) = (0.0, 0.0);
            for i in 0..n {
                x += gaps[i];
                y += steps[i];
                xs.push(x);
                ys.push(y);
            }
            let f = MonotoneCubic::new(xs.clone(), ys).unwrap();
            let (lo, hi) = f.domain();
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=400 {
                let v = f.eval((lo + (hi - lo) * k as f64 / 400.0).min(hi)).unwrap();
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
