//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Smallest pivot magnitude accepted relative to the row scale.
const PIVOT_TOL: f64 = 1e-300;

/// Solves `A x = d` with sub-diagonal `a` (`a[0]` unused), diagonal `b` and
/// super-diagonal `c` (`c[n-1]` unused).
pub fn solve(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    assert!(n > 0 && a.len() == n && b.len() == n && c.len() == n);

    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut pivot = b[0];
    if !(pivot.abs() > PIVOT_TOL) {
        return Err(Error::SingularSystem { row: 0, pivot });
    }
    cp[0] = c[0] / pivot;
    dp[0] = d[0] / pivot;
    for i in 1..n {
        pivot = b[i] - a[i] * cp[i - 1];
        if !(pivot.abs() > PIVOT_TOL) || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i, pivot });
        }
        cp[i] = c[i] / pivot;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / pivot;
    }

    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    Ok(x)
}
