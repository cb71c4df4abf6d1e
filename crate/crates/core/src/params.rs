//! Exogenous market constants and the local state of the aggregate capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude the slope of the market-to-book ratio is treated as
/// exactly zero, so boundary points see `R = 0` without sign noise.
pub const SLOPE_ZERO_GUARD: f64 = 1e-14;

/// Constants of the insurance and financial markets plus the robustness degree.
///
/// `Default` is the benchmark calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Shareholder discount rate.
    pub lambda: f64,
    /// Expected instantaneous loss per unit of coverage.
    pub l: f64,
    /// Loss volatility per unit of coverage.
    pub eta: f64,
    /// Risk-free rate.
    pub r: f64,
    /// Expected return of the risky asset.
    pub mu: f64,
    /// Volatility of the risky asset.
    pub sigma: f64,
    /// Proportional cost of external financing.
    pub gamma: f64,
    /// Risk aversion of insurees.
    pub alpha: f64,
    /// Robustness degree; `1/theta` is the ambiguity aversion.
    pub theta: f64,
    /// Correlation between insurance and financial shocks.
    pub rho: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl MarketParams {
    pub const fn benchmark() -> Self {
        Self {
            lambda: 0.04,
            l: 1.0,
            eta: 0.28,
            r: 0.01528,
            mu: 0.03528,
            sigma: 0.18,
            gamma: 0.2,
            alpha: 2.0,
            theta: 2.8,
            rho: -0.2,
        }
    }

    /// The benchmark with the financial market switched off (`rho = r = q = 0`).
    pub const fn no_investment() -> Self {
        let mut p = Self::benchmark();
        p.rho = 0.0;
        p.r = 0.0;
        p.mu = 0.0;
        p
    }

    /// Sharpe ratio of the risky asset.
    pub fn sharpe(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }

    /// Upper bound on `|rho|` implied by the correlation assumption, or `None`
    /// when the Sharpe ratio is zero and the bound is void.
    pub fn correlation_bound(&self) -> Option<f64> {
        let q = self.sharpe();
        (q > 0.0).then(|| self.alpha * self.eta / q)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: impl Into<String>) -> Error {
            Error::InvalidParameter {
                name,
                reason: reason.into(),
            }
        }
        let named = [
            ("lambda", self.lambda),
            ("l", self.l),
            ("eta", self.eta),
            ("r", self.r),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("rho", self.rho),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return Err(bad(name, format!("must be finite, got {value}")));
            }
        }
        for (name, value) in [
            ("eta", self.eta),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("lambda", self.lambda),
        ] {
            if value <= 0.0 {
                return Err(bad(name, format!("must be > 0, got {value}")));
            }
        }
        if self.r < 0.0 {
            return Err(bad("r", format!("must be >= 0, got {}", self.r)));
        }
        if self.lambda < self.r {
            return Err(bad("lambda", format!("must be >= r = {}, got {}", self.r, self.lambda)));
        }
        if self.mu < self.r {
            return Err(bad("mu", format!("must be >= r = {}, got {}", self.r, self.mu)));
        }
        if self.rho.abs() >= 1.0 {
            return Err(bad("rho", format!("must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Whether `|rho| <= alpha * eta / q` holds (trivially true for `q = 0`).
    pub fn satisfies_correlation_bound(&self) -> bool {
        self.correlation_bound().is_none_or(|bound| self.rho.abs() <= bound)
    }
}

/// Aggregate capacity together with the market-to-book ratio and its slope there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalState {
    pub capacity: f64,
    pub ratio: f64,
    pub slope: f64,
}

impl LocalState {
    pub fn new(capacity: f64, ratio: f64, slope: f64) -> Self {
        Self { capacity, ratio, slope }
    }

    /// Market risk aversion `R = -u'/u`.
    pub fn risk_aversion(&self) -> f64 {
        if self.slope.abs() < SLOPE_ZERO_GUARD {
            0.0
        } else {
            -self.slope / self.ratio
        }
    }

    /// Checks the corridor `1 <= u <= 1 + gamma`, `u' <= 0` and `M R < 1`.
    pub fn check(&self, params: &MarketParams) -> Result<()> {
        let fail = |reason: String| Error::InvalidParameter { name: "state", reason };
        if self.ratio < 1.0 || self.ratio > 1.0 + params.gamma {
            return Err(fail(format!(
                "market-to-book ratio {} outside [1, {}]",
                self.ratio,
                1.0 + params.gamma
            )));
        }
        if self.slope > 0.0 {
            return Err(fail(format!("slope {} is positive", self.slope)));
        }
        if self.capacity * self.risk_aversion() >= 1.0 {
            return Err(fail(format!(
                "M R = {} is not below 1",
                self.capacity * self.risk_aversion()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_sharpe_and_bound() {
        let p = MarketParams::benchmark();
        assert!((p.sharpe() - 0.02 / 0.18).abs() < 1e-15);
        let bound = p.correlation_bound().unwrap();
        assert!((bound - 5.04).abs() < 1e-12);
        assert!(p.satisfies_correlation_bound());
        p.validate().unwrap();
    }

    #[test]
    fn reduction_has_void_correlation_bound() {
        let p = MarketParams::no_investment();
        p.validate().unwrap();
        assert_eq!(p.sharpe(), 0.0);
        assert!(p.correlation_bound().is_none());
        assert!(p.satisfies_correlation_bound());
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = MarketParams::benchmark();
        p.theta = 0.0;
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter { name: "theta", .. })
        ));
        let mut p = MarketParams::benchmark();
        p.rho = 1.0;
        assert!(p.validate().is_err());
        let mut p = MarketParams::benchmark();
        p.lambda = 0.01;
        assert!(p.validate().is_err());
        let mut p = MarketParams::benchmark();
        p.mu = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn strong_correlation_passes_parameter_bound() {
        let mut p = MarketParams::benchmark();
        p.rho = 0.9;
        assert!(p.satisfies_correlation_bound());
    }

    #[test]
    fn slope_guard() {
        let s = LocalState::new(1.0, 1.1, -1e-15);
        assert_eq!(s.risk_aversion(), 0.0);
        let s = LocalState::new(1.0, 1.1, -0.11);
        assert!((s.risk_aversion() - 0.1).abs() < 1e-15);
    }
}
