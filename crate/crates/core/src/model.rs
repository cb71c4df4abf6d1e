//! Pointwise closed-form equilibrium quantities.
//!
//! Everything here is a function of the local state `(M, u, u')` and the
//! market constants; nothing requires the ODE to be solved. Formulas are
//! written in terms of the risk aversion `R = -u'/u` and the clearing
//! coefficients `(g1, g2)` so that `R = 0` boundary points are exact.

use crate::error::{Error, Result};
use crate::params::{LocalState, MarketParams};

/// Threshold on `|g1^2 - g2^2|` below which the clearing system is singular.
pub const DETERMINANT_TOL: f64 = 1e-12;

/// Loading-adjusted premium rate `l + eta p`.
pub fn premium_rate(loading: f64, params: &MarketParams) -> f64 {
    params.l + params.eta * loading
}

/// Linear insuree demand. Not clamped to `[0, 1]`.
pub fn demand(loading: f64, params: &MarketParams) -> f64 {
    1.0 - loading / (params.alpha * params.eta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearing {
    pub g1: f64,
    pub g2: f64,
}

impl Clearing {
    pub fn determinant(&self) -> f64 {
        self.g1 * self.g1 - self.g2 * self.g2
    }
}

/// Coefficients of the two market-clearing conditions.
pub fn g_coefficients(state: &LocalState, params: &MarketParams) -> Result<Clearing> {
    let r = state.risk_aversion();
    let c = Clearing {
        g1: 1.0 + (1.0 + params.rho * params.rho) * robust_scale(state, params) * r - state.capacity * r,
        g2: 2.0 * params.rho * robust_scale(state, params) * r,
    };
    let det = c.determinant();
    if !(det.abs() >= DETERMINANT_TOL) {
        return Err(Error::DegenerateSystem {
            capacity: state.capacity,
            determinant: det,
        });
    }
    Ok(c)
}

/// `M theta / u`, the aggregate entropy weight per unit of value.
fn robust_scale(state: &LocalState, params: &MarketParams) -> f64 {
    state.capacity * params.theta / state.ratio
}

/// `M (theta/u) / (g1^2 - g2^2)`, common to all clearing formulas.
fn clearing_weight(state: &LocalState, params: &MarketParams, c: &Clearing) -> f64 {
    robust_scale(state, params) / c.determinant()
}

/// Equilibrium loading `p*(M)`; may be negative.
pub fn equilibrium_price(state: &LocalState, params: &MarketParams) -> Result<f64> {
    let c = g_coefficients(state, params)?;
    Ok(price_from(state, params, &c))
}

fn price_from(state: &LocalState, params: &MarketParams, c: &Clearing) -> f64 {
    let w = clearing_weight(state, params, c);
    let q = params.sharpe();
    let num = params.eta - w * (params.rho * c.g1 - c.g2) * q;
    let den = 1.0 / params.alpha + w * (c.g1 - params.rho * c.g2);
    num / den
}

/// Equilibrium coverage evaluated from its own closed form (not by composing
/// [`demand`] with [`equilibrium_price`]).
pub fn equilibrium_demand(state: &LocalState, params: &MarketParams) -> Result<f64> {
    let c = g_coefficients(state, params)?;
    let w = clearing_weight(state, params, &c);
    let q = params.sharpe();
    let num = w * (c.g1 - params.rho * c.g2 + (params.rho * c.g1 - c.g2) * q / (params.alpha * params.eta));
    let den = 1.0 / params.alpha + w * (c.g1 - params.rho * c.g2);
    Ok(num / den)
}

/// Aggregate risky position `Y*(M)` given the equilibrium loading.
pub fn aggregate_investment(state: &LocalState, loading: f64, params: &MarketParams) -> Result<f64> {
    let c = g_coefficients(state, params)?;
    Ok(investment_from(state, loading, params, &c))
}

fn investment_from(state: &LocalState, loading: f64, params: &MarketParams, c: &Clearing) -> f64 {
    let w = clearing_weight(state, params, c);
    let q = params.sharpe();
    let rho = params.rho;
    w / params.sigma * (c.g1 * (q + rho * loading) - c.g2 * (loading + rho * q))
}

/// Limit of [`aggregate_investment`] as `theta -> infinity`. Undefined at `R = 0`.
pub fn investment_limit_large_theta(state: &LocalState, loading: f64, params: &MarketParams) -> f64 {
    let rho = params.rho;
    (params.sharpe() - rho * loading) / ((1.0 - rho * rho) * state.risk_aversion() * params.sigma)
}

/// Worst-case drift distortions of the loss and financial shocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generators {
    pub insurance: f64,
    pub financial: f64,
}

pub fn worst_case_generators(
    state: &LocalState,
    loading: f64,
    coverage: f64,
    investment: f64,
    params: &MarketParams,
) -> Generators {
    let r = state.risk_aversion();
    let rho = params.rho;
    let ins = coverage * params.eta;
    let fin = investment * params.sigma;
    Generators {
        insurance: r * (ins + rho * fin) - loading,
        financial: r * (fin + rho * ins) - params.sharpe(),
    }
}

/// Generators from the inner minimization for an insurer holding `reserves`
/// with entropy weight `theta * reserves` and value `reserves * u(M)`.
/// Agrees with [`worst_case_generators`] when the insurer follows the
/// proportional policies.
pub fn entropy_minimizing_generators(
    reserves: f64,
    state: &LocalState,
    underwriting: f64,
    investing: f64,
    coverage: f64,
    investment: f64,
    params: &MarketParams,
) -> Generators {
    let rho = params.rho;
    let (v_m, v_big_m) = (state.ratio, reserves * state.slope);
    let ins = (underwriting * v_m + coverage * v_big_m) * params.eta;
    let fin = (investing * v_m + investment * v_big_m) * params.sigma;
    let weight = (1.0 - rho * rho) * params.theta * reserves;
    Generators {
        insurance: -(ins - rho * fin) / weight,
        financial: -(fin - rho * ins) / weight,
    }
}

/// Signs of the expected profits under the worst-case measure,
/// `eta (p* + hI)` and `sigma (q + hS)`.
pub fn distorted_profits(loading: f64, gens: &Generators, params: &MarketParams) -> (f64, f64) {
    (
        params.eta * (loading + gens.insurance),
        params.sigma * (params.sharpe() + gens.financial),
    )
}

/// Underwriting and investment of one insurer holding reserves `m`.
pub fn individual_policies(reserves: f64, state: &LocalState, coverage: f64, investment: f64) -> Result<(f64, f64)> {
    if reserves < 0.0 {
        return Err(Error::NegativeReserves(reserves));
    }
    if reserves == 0.0 {
        return Ok((0.0, 0.0));
    }
    let share = reserves / state.capacity;
    Ok((share * coverage, share * investment))
}

/// Per-unit optimal underwriting `x*/m`; positive means the non-negativity
/// constraint on underwriting is slack.
pub fn f_condition(state: &LocalState, loading: f64, coverage: f64, investment: f64, params: &MarketParams) -> f64 {
    let r = state.risk_aversion();
    let rho = params.rho;
    let q = params.sharpe();
    params.theta / (state.ratio * params.eta)
        * (loading + rho * q
            - r * (1.0 + rho * rho) * coverage * params.eta
            - 2.0 * r * rho * investment * params.sigma)
        + r * coverage
}

/// The factored form whose sign matches [`f_condition`] at equilibrium.
pub fn f_condition_factor(state: &LocalState, params: &MarketParams) -> f64 {
    let r = state.risk_aversion();
    let rho = params.rho;
    let tilt = rho * params.sharpe() / (params.alpha * params.eta);
    let m = state.capacity;
    (1.0 + tilt) * (1.0 - m * r) + (1.0 - tilt) * (1.0 - rho * rho) * robust_scale(state, params) * r
}

/// Instantaneous variance of aggregate capacity, `(D eta)^2 + 2 rho D eta Y sigma + (Y sigma)^2`.
pub fn capacity_variance(coverage: f64, investment: f64, params: &MarketParams) -> f64 {
    let a = coverage * params.eta;
    let b = investment * params.sigma;
    a * a + 2.0 * params.rho * a * b + b * b
}

/// Entropy-weighted size of the distortion, `hI^2 + 2 rho hI hS + hS^2`.
pub fn distortion_energy(gens: &Generators, params: &MarketParams) -> f64 {
    let (a, b) = (gens.insurance, gens.financial);
    a * a + 2.0 * params.rho * a * b + b * b
}

/// All equilibrium quantities at one local state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEquilibrium {
    pub risk_aversion: f64,
    pub clearing: Clearing,
    pub price: f64,
    pub coverage: f64,
    pub investment: f64,
    pub generators: Generators,
    pub variance: f64,
}

impl LocalEquilibrium {
    pub fn evaluate(state: &LocalState, params: &MarketParams) -> Result<Self> {
        let clearing = g_coefficients(state, params)?;
        let price = price_from(state, params, &clearing);
        let coverage = demand(price, params);
        let investment = investment_from(state, price, params, &clearing);
        let generators = worst_case_generators(state, price, coverage, investment, params);
        Ok(Self {
            risk_aversion: state.risk_aversion(),
            clearing,
            price,
            coverage,
            investment,
            generators,
            variance: capacity_variance(coverage, investment, params),
        })
    }
}
