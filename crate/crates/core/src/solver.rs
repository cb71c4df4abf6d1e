//! Free-boundary solver for the market-to-book ratio.
//!
//! The second-order ODE for `u(M)` is integrated forward from a trial
//! financing barrier `M_low` with `u = 1 + gamma`, `u' = 0`. The payout
//! barrier `M_high` is the first point where `u'` climbs back to zero, and the
//! trial is accepted when `u(M_high) = 1`. A safeguarded secant/bisection
//! iteration drives that single scalar residual to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::linspace;
use crate::model::{self, LocalEquilibrium};
use crate::ode::{bisect_in_step, Dopri5, Flow, Termination};
use crate::params::{LocalState, MarketParams};

/// Below this `Sigma^2` the ODE cannot be solved for `u''`.
pub const VARIANCE_TOL: f64 = 1e-14;

/// Slack on the profit-sign checks for floating-point cancellation.
const PROFIT_ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Tolerance on the four boundary conditions.
    pub boundary_tol: f64,
    /// Tolerance on the pointwise ODE residual over the output grid.
    pub interior_tol: f64,
    pub grid_size: usize,
    /// Outer free-boundary iterations.
    pub max_iters: usize,
    /// Initial search interval for the financing barrier.
    pub bracket: (f64, f64),
    /// Trials whose `u'` has not returned to zero by this capacity are
    /// classified by their terminal deviation.
    pub capacity_cap: f64,
    /// Resolution of the payout-barrier event in `M`.
    pub event_tol: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            boundary_tol: 1e-8,
            interior_tol: 1e-6,
            grid_size: 2001,
            max_iters: 200,
            bracket: (1e-3, 1.0),
            capacity_cap: 100.0,
            event_tol: 1e-12,
            rtol: 1e-12,
            atol: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("boundary_tol", self.boundary_tol),
            ("interior_tol", self.interior_tol),
            ("capacity_cap", self.capacity_cap),
            ("event_tol", self.event_tol),
            ("rtol", self.rtol),
            ("atol", self.atol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "solver.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.grid_size < 3 {
            return Err(Error::InvalidConfig(format!(
                "solver.grid_size must be >= 3, got {}",
                self.grid_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("solver.max_iters must be >= 1".into()));
        }
        let (lo, hi) = self.bracket;
        if !(lo > 0.0 && hi > lo && hi < self.capacity_cap) {
            return Err(Error::InvalidConfig(format!(
                "solver.bracket must satisfy 0 < lo < hi < capacity_cap, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    fn integrator(&self) -> Dopri5 {
        Dopri5 {
            rtol: self.rtol,
            atol: self.atol,
            first_step: Some(1e-6),
            ..Dopri5::default()
        }
    }
}

/// Second derivative of the market-to-book ratio implied by the HJBI equation.
pub fn u_curvature(state: &LocalState, params: &MarketParams) -> Result<f64> {
    let le = LocalEquilibrium::evaluate(state, params)?;
    curvature_from(state, &le, params)
}

fn curvature_from(state: &LocalState, le: &LocalEquilibrium, params: &MarketParams) -> Result<f64> {
    if !(le.variance > VARIANCE_TOL) {
        return Err(Error::VanishingDiffusion {
            capacity: state.capacity,
            variance: le.variance,
        });
    }
    let u = state.ratio;
    let r = le.risk_aversion;
    let energy = model::distortion_energy(&le.generators, params);
    let drift_gap = params.lambda - params.r - params.theta / (2.0 * u) * energy + state.capacity * params.r * r;
    Ok(2.0 * u * (drift_gap / le.variance + r * r))
}

/// Pointwise residual of the HJBI equation for a given `u''`.
pub fn ode_residual(state: &LocalState, curvature: f64, params: &MarketParams) -> Result<f64> {
    let le = LocalEquilibrium::evaluate(state, params)?;
    let u = state.ratio;
    let r = le.risk_aversion;
    let energy = model::distortion_energy(&le.generators, params);
    Ok(params.lambda
        - params.r
        - (params.theta / (2.0 * u) * energy - state.capacity * params.r * r
            + (0.5 * curvature / u - r * r) * le.variance))
}

fn rhs(params: &MarketParams) -> impl Fn(f64, &[f64; 2]) -> Result<[f64; 2]> + '_ {
    move |m, y| {
        if !(y[0] > 0.0) || !y[1].is_finite() {
            return Err(Error::InvalidSolution(format!(
                "trajectory left the admissible region at M = {m}: u = {}, u' = {}",
                y[0], y[1]
            )));
        }
        let state = LocalState::new(m, y[0], y[1]);
        let curv = u_curvature(&state, params)?;
        if !curv.is_finite() {
            return Err(Error::InvalidSolution(format!("non-finite u'' at M = {m}")));
        }
        Ok([y[1], curv])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotEnd {
    /// `u'` returned to zero from below.
    PayoutBarrier,
    /// `u` rose above `1 + gamma`.
    RatioExceeded,
    /// Capacity reached the cap first.
    CapacityCap,
    /// The right-hand side broke down or the integrator gave up.
    Breakdown,
}

/// One forward integration from a trial financing barrier.
#[derive(Debug, Clone)]
pub struct Shot {
    pub m_low: f64,
    pub terminal_capacity: f64,
    pub terminal_ratio: f64,
    pub terminal_slope: f64,
    pub end: ShotEnd,
    pub rk_steps: usize,
}

impl Shot {
    /// Shooting residual `u(M_end) - 1`.
    pub fn deviation(&self) -> f64 {
        self.terminal_ratio - 1.0
    }
}

pub fn shoot(params: &MarketParams, m_low: f64, cfg: &SolverConfig) -> Shot {
    let top = 1.0 + params.gamma;
    let mut end = ShotEnd::CapacityCap;
    let out = cfg
        .integrator()
        .integrate(rhs(params), m_low, [top, 0.0], cfg.capacity_cap, &[], |step| {
            if step.y0[1] < 0.0 && step.y1[1] >= 0.0 {
                end = ShotEnd::PayoutBarrier;
                // Keep the side where u' is still negative.
                let c = bisect_in_step(step, |y| y[1], cfg.event_tol);
                Flow::Stop {
                    x: c.before,
                    y: c.y_before,
                }
            } else if step.y1[0] > top {
                end = ShotEnd::RatioExceeded;
                Flow::Stop { x: step.x1, y: step.y1 }
            } else {
                Flow::Continue
            }
        });
    match out.termination {
        Termination::Stopped | Termination::Completed => {}
        _ => end = ShotEnd::Breakdown,
    }
    Shot {
        m_low,
        terminal_capacity: out.x,
        terminal_ratio: out.y[0],
        terminal_slope: out.y[1],
        end,
        rk_steps: out.accepted,
    }
}

/// Safeguarded secant/bisection on the financing barrier.
struct BarrierSearch {
    shots: usize,
    iterations: usize,
    rk_steps: usize,
}

impl BarrierSearch {
    fn shoot(&mut self, params: &MarketParams, m: f64, cfg: &SolverConfig) -> Shot {
        let s = shoot(params, m, cfg);
        self.shots += 1;
        self.rk_steps += s.rk_steps;
        s
    }

    /// Log-spaced trials across the configured bracket, endpoints included.
    fn scan(&mut self, params: &MarketParams, cfg: &SolverConfig) -> Vec<Shot> {
        const SCAN: usize = 48;
        let (lo, hi) = cfg.bracket;
        let ratio = (hi / lo).powf(1.0 / SCAN as f64);
        (0..=SCAN)
            .map(|k| {
                let m = if k == SCAN { hi } else { lo * ratio.powi(k as i32) };
                self.shoot(params, m, cfg)
            })
            .collect()
    }

    fn solve(&mut self, params: &MarketParams, cfg: &SolverConfig) -> Result<Shot> {
        let (lo, hi) = cfg.bracket;
        let a = self.shoot(params, lo, cfg);
        let b = self.shoot(params, hi, cfg);
        let mut fallback = None;
        if a.deviation().signum() != b.deviation().signum() {
            let s = self.refine(params, cfg, a, b)?;
            if s.end == ShotEnd::PayoutBarrier {
                return Ok(s);
            }
            fallback = Some(s);
        }
        // Either no sign change at the endpoints or the root sits on a jump of
        // the objective where trials stop reaching the payout barrier. Look
        // for a sign change between two trials that both reach it.
        let shots = self.scan(params, cfg);
        for w in shots.windows(2) {
            let (x, y) = (&w[0], &w[1]);
            if x.end == ShotEnd::PayoutBarrier
                && y.end == ShotEnd::PayoutBarrier
                && x.deviation().signum() != y.deviation().signum()
            {
                let s = self.refine(params, cfg, x.clone(), y.clone())?;
                if s.end == ShotEnd::PayoutBarrier {
                    return Ok(s);
                }
            }
        }
        if let Some(s) = fallback {
            return Ok(s);
        }
        if let Some(w) = shots
            .windows(2)
            .find(|w| w[0].deviation().signum() != w[1].deviation().signum())
        {
            return self.refine(params, cfg, w[0].clone(), w[1].clone());
        }
        if shots.iter().all(|s| s.end != ShotEnd::PayoutBarrier) {
            return Err(Error::no_equilibrium(
                "payout_barrier",
                format!(
                    "u' never returns to zero below M = {} for any trial M_low in [{lo}, {hi}]",
                    cfg.capacity_cap
                ),
            ));
        }
        Err(Error::NoBracket { lo, hi })
    }

    fn refine(&mut self, params: &MarketParams, cfg: &SolverConfig, mut a: Shot, mut b: Shot) -> Result<Shot> {
        let target = 0.01 * cfg.boundary_tol;
        let mut force_bisect = false;
        loop {
            if self.iterations >= cfg.max_iters {
                return Err(Error::no_equilibrium(
                    "max_iters",
                    format!(
                        "{} free-boundary iterations exhausted with bracket [{}, {}]",
                        cfg.max_iters, a.m_low, b.m_low
                    ),
                ));
            }
            self.iterations += 1;
            let (fa, fb) = (a.deviation(), b.deviation());
            let width = (b.m_low - a.m_low).abs();
            let mid = 0.5 * (a.m_low + b.m_low);
            let secant = b.m_low - fb * (b.m_low - a.m_low) / (fb - fa);
            let (lo, hi) = (a.m_low.min(b.m_low), a.m_low.max(b.m_low));
            let inside = secant > lo + 1e-3 * width && secant < hi - 1e-3 * width;
            let m = if force_bisect || !inside || !secant.is_finite() {
                mid
            } else {
                secant
            };
            let s = self.shoot(params, m, cfg);
            let fm = s.deviation();
            if fm == 0.0 || fm.abs() <= target || width <= 4.0 * f64::EPSILON * m.abs() {
                let best = [a, b, s]
                    .into_iter()
                    .min_by(|x, y| x.deviation().abs().total_cmp(&y.deviation().abs()))
                    .expect("three candidates");
                return Ok(best);
            }
            if fm.signum() == fa.signum() {
                a = s;
            } else {
                b = s;
            }
            force_bisect = (b.m_low - a.m_low).abs() > 0.5 * width;
        }
    }
}

/// Residuals of the four boundary conditions and the no-arbitrage restatement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResiduals {
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    /// `V'(M_low) - (1 + gamma)` with `V = M u`.
    pub value_slope_low: f64,
    /// `V'(M_high) - 1`.
    pub value_slope_high: f64,
}

impl BoundaryResiduals {
    pub fn max_abs(&self) -> f64 {
        [self.ratio_low, self.ratio_high, self.slope_low, self.slope_high]
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub boundary: f64,
    pub interior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub boundary: BoundaryResiduals,
    #[serde(with = "crate::io::lossless_float")]
    pub max_ode_residual: f64,
    pub tolerances: Tolerances,
    pub shots: usize,
    pub root_iterations: usize,
    pub rk_steps: usize,
    pub assumptions: AssumptionReport,
}

/// Equilibrium on a uniform capacity grid spanning `[m_low, m_high]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub params: MarketParams,
    pub m_low: f64,
    pub m_high: f64,
    pub grid: Vec<f64>,
    /// Market-to-book ratio `u`.
    pub ratio: Vec<f64>,
    /// Its derivative `u'`.
    pub slope: Vec<f64>,
    pub price: Vec<f64>,
    pub coverage: Vec<f64>,
    pub investment: Vec<f64>,
    pub gen_insurance: Vec<f64>,
    pub gen_financial: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl EquilibriumSolution {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn state(&self, i: usize) -> LocalState {
        LocalState::new(self.grid[i], self.ratio[i], self.slope[i])
    }

    pub fn risk_aversion(&self, i: usize) -> f64 {
        self.state(i).risk_aversion()
    }

    pub fn capacity_variance(&self, i: usize) -> f64 {
        model::capacity_variance(self.coverage[i], self.investment[i], &self.params)
    }

    /// HJBI residual at interior grid points with `u''` from three-point
    /// central differences. Index `k` of the result is grid point `k + 1`.
    pub fn ode_residuals(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let h = (self.m_high - self.m_low) / (n - 1) as f64;
        (1..n - 1)
            .map(|i| {
                let curv = (self.ratio[i + 1] - 2.0 * self.ratio[i] + self.ratio[i - 1]) / (h * h);
                ode_residual(&self.state(i), curv, &self.params)
            })
            .collect()
    }

    /// Recomputes every pointwise quantity from `(grid, ratio, slope)`.
    pub(crate) fn populate(&mut self) -> Result<()> {
        let n = self.len();
        self.price = Vec::with_capacity(n);
        self.coverage = Vec::with_capacity(n);
        self.investment = Vec::with_capacity(n);
        self.gen_insurance = Vec::with_capacity(n);
        self.gen_financial = Vec::with_capacity(n);
        for i in 0..n {
            let le = LocalEquilibrium::evaluate(&self.state(i), &self.params)?;
            self.price.push(le.price);
            self.coverage.push(le.coverage);
            self.investment.push(le.investment);
            self.gen_insurance.push(le.generators.insurance);
            self.gen_financial.push(le.generators.financial);
        }
        Ok(())
    }

    fn boundary_residuals(&self) -> BoundaryResiduals {
        let n = self.len();
        let top = 1.0 + self.params.gamma;
        BoundaryResiduals {
            ratio_low: self.ratio[0] - top,
            ratio_high: self.ratio[n - 1] - 1.0,
            slope_low: self.slope[0],
            slope_high: self.slope[n - 1],
            value_slope_low: self.ratio[0] + self.m_low * self.slope[0] - top,
            value_slope_high: self.ratio[n - 1] + self.m_high * self.slope[n - 1] - 1.0,
        }
    }
}

/// Outcome of one named invariant over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Smallest slack over the grid; negative when violated.
    #[serde(with = "crate::io::lossless_float")]
    pub margin: f64,
    pub worst_index: Option<usize>,
    pub worst_capacity: Option<f64>,
    /// Whether a failure rules the solution out as an equilibrium. The
    /// profit signs and the finite-difference residual are report-only.
    pub blocking: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_blocking_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| c.blocking && !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tracks the smallest slack of a pointwise condition.
struct Worst {
    margin: f64,
    index: Option<usize>,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            index: None,
        }
    }

    fn see(&mut self, i: usize, margin: f64) {
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
            self.index = Some(i);
        }
    }

    fn check(self, name: &str, grid: &[f64], blocking: bool, strict: bool) -> Check {
        let passed = if strict { self.margin > 0.0 } else { self.margin >= 0.0 };
        Check {
            name: name.to_string(),
            passed,
            margin: self.margin,
            worst_index: self.index,
            worst_capacity: self.index.map(|i| grid[i]),
            blocking,
        }
    }
}

/// Evaluates every equilibrium invariant on the grid.
pub fn check_assumptions(sol: &EquilibriumSolution, params: &MarketParams) -> AssumptionReport {
    let n = sol.len();
    let tol = sol.diagnostics.tolerances;
    let grid = &sol.grid;
    let mut checks = Vec::new();
    let scalar = |name: &str, margin: f64, blocking: bool| Check {
        name: name.to_string(),
        passed: margin >= 0.0,
        margin,
        worst_index: None,
        worst_capacity: None,
        blocking,
    };

    checks.push(scalar("barrier_order", sol.m_low.min(sol.m_high - sol.m_low), true));
    if n < 3 {
        checks.push(scalar("grid_size", -1.0, true));
        return AssumptionReport { checks };
    }

    let b = sol.boundary_residuals();
    checks.push(scalar("boundary_conditions", tol.boundary - b.max_abs(), true));
    checks.push(scalar(
        "no_arbitrage",
        tol.boundary - b.value_slope_low.abs().max(b.value_slope_high.abs()),
        true,
    ));

    let top = 1.0 + params.gamma;
    let mut corridor = Worst::new();
    let mut decreasing = Worst::new();
    // At the barriers u' is pinned to zero by the boundary conditions and
    // only its size is checked, above.
    for i in 1..n - 1 {
        corridor.see(i, (sol.ratio[i] - 1.0).min(top - sol.ratio[i]));
        decreasing.see(i, -sol.slope[i]);
    }
    checks.push(corridor.check("ratio_corridor", grid, true, true));
    checks.push(decreasing.check("ratio_decreasing", grid, true, false));

    checks.push(scalar(
        "correlation_bound",
        params
            .correlation_bound()
            .map_or(f64::INFINITY, |bound| bound - params.rho.abs()),
        true,
    ));

    let mut risk = Worst::new();
    let mut interior = Worst::new();
    let mut ins_profit = Worst::new();
    let mut inv_profit = Worst::new();
    for i in 0..n {
        let s = sol.state(i);
        risk.see(i, 1.0 - s.capacity * s.risk_aversion());
        interior.see(
            i,
            model::f_condition(&s, sol.price[i], sol.coverage[i], sol.investment[i], params),
        );
        let gens = model::Generators {
            insurance: sol.gen_insurance[i],
            financial: sol.gen_financial[i],
        };
        let (pi, ps) = model::distorted_profits(sol.price[i], &gens, params);
        ins_profit.see(i, pi);
        inv_profit.see(i, ps);
    }
    checks.push(risk.check("risk_aversion_bound", grid, true, true));
    checks.push(interior.check("underwriting_interior", grid, true, true));

    let mut residual = Worst::new();
    match sol.ode_residuals() {
        Ok(res) => {
            for (k, r) in res.iter().enumerate() {
                residual.see(k + 1, tol.interior - r.abs());
            }
        }
        Err(_) => residual.see(0, f64::NEG_INFINITY),
    }
    checks.push(residual.check("ode_residual", grid, false, true));

    // Both profits vanish identically at the financing barrier, where the
    // computed value is a cancellation of O(p) terms.
    ins_profit.margin += PROFIT_ROUNDOFF;
    inv_profit.margin += PROFIT_ROUNDOFF;
    checks.push(ins_profit.check("insurance_profit", grid, false, false));
    checks.push(inv_profit.check("investment_profit", grid, false, false));
    AssumptionReport { checks }
}

/// Solves the free-boundary problem and assembles the equilibrium.
pub fn solve_equilibrium(params: &MarketParams, cfg: &SolverConfig) -> Result<EquilibriumSolution> {
    params.validate()?;
    cfg.validate()?;

    let mut search = BarrierSearch {
        shots: 0,
        iterations: 0,
        rk_steps: 0,
    };
    let shot = search.solve(params, cfg)?;
    if shot.end != ShotEnd::PayoutBarrier {
        return Err(Error::no_equilibrium(
            "payout_barrier",
            format!(
                "converged trial M_low = {} ends by {:?} at M = {} instead of u' = 0",
                shot.m_low, shot.end, shot.terminal_capacity
            ),
        ));
    }
    if !(shot.deviation().abs() < cfg.boundary_tol) {
        return Err(Error::no_equilibrium(
            "boundary_conditions",
            format!("u(M_high) - 1 = {:e} after the barrier search", shot.deviation()),
        ));
    }

    let (m_low, m_high) = (shot.m_low, shot.terminal_capacity);
    if !(m_high > m_low) {
        return Err(Error::no_equilibrium(
            "barrier_order",
            format!("M_high = {m_high} is not above M_low = {m_low}"),
        ));
    }

    let grid = linspace(m_low, m_high, cfg.grid_size);
    let mut ratio = Vec::with_capacity(grid.len());
    let mut slope = Vec::with_capacity(grid.len());
    ratio.push(1.0 + params.gamma);
    slope.push(0.0);
    let mut next = 1;
    let out = cfg.integrator().integrate(
        rhs(params),
        m_low,
        [1.0 + params.gamma, 0.0],
        m_high,
        &grid[1..],
        |step| {
            while next < grid.len() && grid[next] <= step.x1 {
                let y = if grid[next] == step.x1 {
                    step.y1
                } else {
                    step.eval(grid[next])
                };
                ratio.push(y[0]);
                slope.push(y[1]);
                next += 1;
            }
            Flow::Continue
        },
    );
    search.rk_steps += out.accepted;
    if out.termination != Termination::Completed || ratio.len() != grid.len() {
        return Err(Error::no_equilibrium(
            "trajectory",
            format!(
                "resampling integration stopped at M = {} ({:?}){}",
                out.x,
                out.termination,
                out.rhs_error.map(|e| format!(": {e}")).unwrap_or_default()
            ),
        ));
    }

    let mut sol = EquilibriumSolution {
        params: *params,
        m_low,
        m_high,
        grid,
        ratio,
        slope,
        price: Vec::new(),
        coverage: Vec::new(),
        investment: Vec::new(),
        gen_insurance: Vec::new(),
        gen_financial: Vec::new(),
        diagnostics: Diagnostics {
            boundary: BoundaryResiduals {
                ratio_low: 0.0,
                ratio_high: 0.0,
                slope_low: 0.0,
                slope_high: 0.0,
                value_slope_low: 0.0,
                value_slope_high: 0.0,
            },
            max_ode_residual: f64::NAN,
            tolerances: Tolerances {
                boundary: cfg.boundary_tol,
                interior: cfg.interior_tol,
            },
            shots: search.shots,
            root_iterations: search.iterations,
            rk_steps: search.rk_steps,
            assumptions: AssumptionReport::default(),
        },
    };
    sol.populate()
        .map_err(|e| Error::no_equilibrium("pointwise_equilibrium", e.to_string()))?;
    sol.diagnostics.boundary = sol.boundary_residuals();
    sol.diagnostics.max_ode_residual = sol.ode_residuals()?.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    let report = check_assumptions(&sol, params);
    if let Some(failed) = report.first_blocking_failure() {
        return Err(Error::no_equilibrium(
            failed.name.clone(),
            format!(
                "margin {:e}{}",
                failed.margin,
                failed
                    .worst_capacity
                    .map(|m| format!(" at M = {m}"))
                    .unwrap_or_default()
            ),
        ));
    }
    sol.diagnostics.assumptions = report;
    Ok(sol)
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Rho,
    Theta,
    Gamma,
    Alpha,
    Eta,
    Sigma,
    Mu,
    R,
    Lambda,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 9] = [
        SweepAxis::Rho,
        SweepAxis::Theta,
        SweepAxis::Gamma,
        SweepAxis::Alpha,
        SweepAxis::Eta,
        SweepAxis::Sigma,
        SweepAxis::Mu,
        SweepAxis::R,
        SweepAxis::Lambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Rho => "rho",
            SweepAxis::Theta => "theta",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Eta => "eta",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Mu => "mu",
            SweepAxis::R => "r",
            SweepAxis::Lambda => "lambda",
        }
    }

    pub fn apply(self, params: &mut MarketParams, value: f64) {
        let slot = match self {
            SweepAxis::Rho => &mut params.rho,
            SweepAxis::Theta => &mut params.theta,
            SweepAxis::Gamma => &mut params.gamma,
            SweepAxis::Alpha => &mut params.alpha,
            SweepAxis::Eta => &mut params.eta,
            SweepAxis::Sigma => &mut params.sigma,
            SweepAxis::Mu => &mut params.mu,
            SweepAxis::R => &mut params.r,
            SweepAxis::Lambda => &mut params.lambda,
        };
        *slot = value;
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown sweep axis `{s}` (expected one of rho, theta, gamma, alpha, eta, sigma, mu, r, lambda)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub m_low: Option<f64>,
    pub m_high: Option<f64>,
    pub range: Option<f64>,
    /// `solved`, or the error class with its message.
    pub status: String,
}

impl SweepRow {
    pub fn solved(&self) -> bool {
        self.status == "solved"
    }
}

/// Solves along one parameter axis. Failures become rows, never errors.
///
/// Each solve first tries a bracket around the previous financing barrier.
pub fn sweep(base: &MarketParams, axis: SweepAxis, values: &[f64], cfg: &SolverConfig) -> Vec<SweepRow> {
    let mut prev_low: Option<f64> = None;
    values
        .iter()
        .map(|&value| {
            let mut params = *base;
            axis.apply(&mut params, value);
            let mut result = Err(Error::NoBracket {
                lo: cfg.bracket.0,
                hi: cfg.bracket.1,
            });
            if let Some(prev) = prev_low {
                let warm = SolverConfig {
                    bracket: (
                        (0.5 * prev).max(cfg.bracket.0),
                        (2.0 * prev).min(cfg.capacity_cap * 0.5),
                    ),
                    ..*cfg
                };
                result = solve_equilibrium(&params, &warm);
            }
            if result.is_err() {
                result = solve_equilibrium(&params, cfg);
            }
            match result {
                Ok(sol) => {
                    prev_low = Some(sol.m_low);
                    SweepRow {
                        value,
                        m_low: Some(sol.m_low),
                        m_high: Some(sol.m_high),
                        range: Some(sol.m_high - sol.m_low),
                        status: "solved".into(),
                    }
                }
                Err(e) => SweepRow {
                    value,
                    m_low: None,
                    m_high: None,
                    range: None,
                    status: status_of(&e),
                },
            }
        })
        .collect()
}

fn status_of(e: &Error) -> String {
    match e {
        Error::NoEquilibrium { invariant, .. } => format!("NoEquilibrium({invariant})"),
        Error::NoBracket { .. } => "NoEquilibrium(no_bracket)".into(),
        Error::InvalidParameter { name, .. } => format!("InvalidParameter({name})"),
        other => format!("Error({other})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_at_financing_boundary() {
        let p = MarketParams::benchmark();
        let s = LocalState::new(0.3240, 1.2, 0.0);
        let le = LocalEquilibrium::evaluate(&s, &p).unwrap();
        let (price, q, u) = (le.price, p.sharpe(), 1.2);
        let energy = price * price + 2.0 * p.rho * price * q + q * q;
        let expected = 2.0 * u * (p.lambda - p.r - p.theta / (2.0 * u) * energy) / le.variance;
        let got = u_curvature(&s, &p).unwrap();
        assert!((got - expected).abs() < 1e-13 * expected.abs().max(1.0));
    }

    #[test]
    fn curvature_reduction_frozen() {
        // rho = r = q = 0 at M = 0.15, u = 1.2, u' = 0: p = eta / (1/alpha + M theta/u),
        // D = 1 - p/(alpha eta), u'' = 2u (lambda - theta p^2/(2u)) / (D eta)^2.
        // Values from an independent 30-digit evaluation.
        let p = MarketParams::no_investment();
        let s = LocalState::new(0.15, 1.2, 0.0);
        let got = u_curvature(&s, &p).unwrap();
        assert!((got - -15.635152019991670).abs() < 1e-11, "{got}");
    }

    #[test]
    fn vanishing_diffusion_detected() {
        let p = MarketParams::no_investment();
        // M -> 0 drives D -> 0 with Y = 0.
        let s = LocalState::new(1e-12, 1.2, 0.0);
        assert!(matches!(u_curvature(&s, &p), Err(Error::VanishingDiffusion { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            grid_size: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            bracket: (0.5, 0.1),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            boundary_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn shot_classification_around_benchmark_root() {
        let p = MarketParams::benchmark();
        let cfg = SolverConfig::default();
        let low = shoot(&p, 0.30, &cfg);
        let high = shoot(&p, 0.35, &cfg);
        assert_eq!(low.end, ShotEnd::PayoutBarrier);
        assert!(low.deviation() < 0.0);
        assert!(high.deviation() > 0.0);
        let tiny = shoot(&p, 0.01, &cfg);
        assert!(tiny.deviation() < 0.0);
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("gamma".parse::<SweepAxis>().unwrap(), SweepAxis::Gamma);
        assert!("l".parse::<SweepAxis>().is_err());
        let mut p = MarketParams::benchmark();
        SweepAxis::Lambda.apply(&mut p, 0.05);
        assert_eq!(p.lambda, 0.05);
    }

    #[test]
    fn hand_built_violation_is_located() {
        let p = MarketParams::benchmark();
        let mut sol = solve_equilibrium(
            &p,
            &SolverConfig {
                grid_size: 2001,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sol.diagnostics.assumptions.first_blocking_failure().is_none());
        sol.slope[570] = 1e-3;
        let report = check_assumptions(&sol, &p);
        let c = report.get("ratio_decreasing").unwrap();
        assert!(!c.passed);
        assert_eq!(c.worst_index, Some(570));
        assert_eq!(c.worst_capacity, Some(sol.grid[570]));
    }
}
