//! End-to-end acceptance criteria with their tolerances and time budgets.
//!
//! Shared by the `acceptance` test target and the CLI `reproduce` command.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::cycles::{analyze, ergodic_check, stationary_density};
use crate::dynamics::{build_dynamics, first_passage_times, CapacityDynamics, SimulationConfig};
use crate::error::Error;
use crate::interp::linspace;
use crate::model::{self, LocalEquilibrium};
use crate::params::MarketParams;
use crate::solver::{solve_equilibrium, EquilibriumSolution, SolverConfig, SweepAxis};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    /// One line per individual check, prefixed `ok` or `FAIL`.
    pub details: Vec<String>,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} {:<26} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.summary,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Accumulates individual checks for one criterion.
struct Checks {
    lines: Vec<String>,
    failed: usize,
}

impl Checks {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            failed: 0,
        }
    }

    fn record(&mut self, ok: bool, what: impl AsRef<str>) {
        if !ok {
            self.failed += 1;
        }
        self.lines
            .push(format!("{} {}", if ok { "ok  " } else { "FAIL" }, what.as_ref()));
    }

    fn rel(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let rel = ((got - want) / want).abs();
        self.record(
            rel <= tol,
            format!("{label} = {got:.6} vs {want} (rel {rel:.2e}, tol {tol})"),
        );
    }

    fn abs(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let err = (got - want).abs();
        self.record(
            err <= tol,
            format!("{label} = {got:.6} vs {want} (abs {err:.2e}, tol {tol})"),
        );
    }

    fn below(&mut self, label: &str, value: f64, bound: f64) {
        self.record(value < bound, format!("{label} = {value:.3e} < {bound:e}"));
    }

    fn budget(&mut self, start: Instant, limit: Duration) {
        let t = start.elapsed();
        self.record(
            t < limit,
            format!("runtime {:.2}s < {}s", t.as_secs_f64(), limit.as_secs()),
        );
    }

    fn finish(self, name: &'static str, start: Instant) -> Outcome {
        let total = self.lines.len();
        Outcome {
            name,
            passed: self.failed == 0,
            summary: format!("{}/{} checks", total - self.failed, total),
            details: self.lines,
            elapsed: start.elapsed(),
        }
    }
}

fn solve_or_record(c: &mut Checks, label: &str, p: &MarketParams) -> Option<EquilibriumSolution> {
    match solve_equilibrium(p, &SolverConfig::default()) {
        Ok(s) => Some(s),
        Err(e) => {
            c.record(false, format!("{label}: solver error: {e}"));
            None
        }
    }
}

fn dynamics_or_record(c: &mut Checks, label: &str, sol: &EquilibriumSolution) -> Option<CapacityDynamics> {
    match build_dynamics(sol) {
        Ok(d) => Some(d),
        Err(e) => {
            c.record(false, format!("{label}: dynamics error: {e}"));
            None
        }
    }
}

pub fn benchmark_boundaries() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    if let Some(sol) = solve_or_record(&mut c, "benchmark", &MarketParams::benchmark()) {
        c.rel("M_low", sol.m_low, 0.3240, 0.02);
        c.rel("M_high", sol.m_high, 2.1322, 0.02);
    }
    c.budget(start, Duration::from_secs(10));
    c.finish("benchmark_boundaries", start)
}

/// Reference barriers: (axis, value, M_low, M_high, relative tolerance).
pub const REFERENCE_SWEEPS: [(SweepAxis, f64, f64, f64, f64); 12] = [
    (SweepAxis::Rho, -0.2, 0.3240, 2.1322, 0.02),
    (SweepAxis::Rho, 0.0, 0.3172, 2.7259, 0.02),
    (SweepAxis::Rho, 0.2, 0.2949, 2.9637, 0.02),
    (SweepAxis::Rho, 0.5, 0.2494, 2.6720, 0.02),
    (SweepAxis::Theta, 0.8, 0.3344, 1.1976, 0.02),
    (SweepAxis::Theta, 2.8, 0.3240, 2.1322, 0.02),
    (SweepAxis::Theta, 3.5, 0.3339, 3.6064, 0.02),
    (SweepAxis::Theta, 4.0, 0.3554, 10.3278, 0.03),
    (SweepAxis::Gamma, 0.02, 0.6444, 1.6011, 0.02),
    (SweepAxis::Gamma, 0.1, 0.4237, 1.9475, 0.02),
    (SweepAxis::Gamma, 0.2, 0.3240, 2.1322, 0.02),
    (SweepAxis::Gamma, 0.3, 0.2687, 2.2426, 0.02),
];

pub fn sweep_regression() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    for (axis, value, low, high, tol) in REFERENCE_SWEEPS {
        let mut p = MarketParams::benchmark();
        axis.apply(&mut p, value);
        let label = format!("{axis}={value}");
        if let Some(sol) = solve_or_record(&mut c, &label, &p) {
            c.rel(&format!("{label} M_low"), sol.m_low, low, tol);
            c.rel(&format!("{label} M_high"), sol.m_high, high, tol);
        }
    }
    c.budget(start, Duration::from_secs(120));
    c.finish("sweep_regression", start)
}

pub fn no_investment_reduction() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    let p = MarketParams::no_investment();
    if let Some(sol) = solve_or_record(&mut c, "reduction", &p) {
        c.abs("M_low", sol.m_low, 0.15, 0.01);
        c.abs("M_high", sol.m_high, 0.78, 0.01);
        if let Some(d) = dynamics_or_record(&mut c, "reduction", &sol) {
            match analyze(&d, sol.len()) {
                Ok(a) => {
                    c.rel("Ts(M_low)", a.soft_duration, 14.05, 0.03);
                    c.rel("Th(M_high)", a.hard_duration, 11.92, 0.03);
                    c.rel("cycle", a.cycle_duration, 25.97, 0.03);
                }
                Err(e) => c.record(false, format!("durations: {e}")),
            }
        }
    }
    c.finish("no_investment_reduction", start)
}

pub fn cycle_durations() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    if let Some(sol) = solve_or_record(&mut c, "benchmark", &MarketParams::benchmark()) {
        if let Some(d) = dynamics_or_record(&mut c, "benchmark", &sol) {
            match analyze(&d, sol.len()) {
                Ok(a) => {
                    c.rel("Ts(M_low)", a.soft_duration, 39.28, 0.03);
                    c.rel("Th(M_high)", a.hard_duration, 33.82, 0.03);
                    c.rel("cycle", a.cycle_duration, 73.10, 0.03);
                    c.record(
                        a.soft_duration > a.hard_duration,
                        format!("soft phase {:.4} > hard phase {:.4}", a.soft_duration, a.hard_duration),
                    );
                }
                Err(e) => c.record(false, format!("durations: {e}")),
            }
        }
    }
    c.finish("cycle_durations", start)
}

pub fn stationary_density_criterion() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    if let Some(sol) = solve_or_record(&mut c, "benchmark", &MarketParams::benchmark()) {
        if let Some(d) = dynamics_or_record(&mut c, "benchmark", &sol) {
            match stationary_density(&d, sol.len()) {
                Ok(dens) => {
                    let mass = dens.integrate(|_| 1.0);
                    c.below("|integral - 1|", (mass - 1.0).abs(), 1e-6);
                    let rises = dens.density.windows(2).filter(|w| !(w[1] < w[0])).count();
                    c.record(rises == 0, format!("density strictly decreasing ({rises} rises)"));
                    let sim = SimulationConfig {
                        horizon: 1e5,
                        dt: 1e-3,
                        ..Default::default()
                    };
                    match ergodic_check(&d, &dens, &sim) {
                        Ok(r) => match r.l1 {
                            Some(l1) => c.below("occupancy L1", l1, 0.05),
                            None => c.record(false, "occupancy: insufficient samples"),
                        },
                        Err(e) => c.record(false, format!("occupancy: {e}")),
                    }
                }
                Err(e) => c.record(false, format!("density: {e}")),
            }
        }
    }
    c.budget(start, Duration::from_secs(60));
    c.finish("stationary_density", start)
}

fn pointwise_properties(c: &mut Checks, label: &str, sol: &EquilibriumSolution) {
    let p = &sol.params;
    let n = sol.len();
    let q = p.sharpe();
    let (mut composition, mut generators, mut drift) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let s = sol.state(i);
        let le = match LocalEquilibrium::evaluate(&s, p) {
            Ok(le) => le,
            Err(e) => {
                c.record(
                    false,
                    format!("{label}: pointwise evaluation at M = {}: {e}", s.capacity),
                );
                return;
            }
        };
        let closed = model::equilibrium_demand(&s, p).unwrap_or(f64::NAN);
        composition = composition.max((closed - model::demand(le.price, p)).abs());

        let reserves = 0.5 * s.capacity;
        let (x, y) =
            model::individual_policies(reserves, &s, le.coverage, le.investment).unwrap_or((f64::NAN, f64::NAN));
        let h = model::entropy_minimizing_generators(reserves, &s, x, y, le.coverage, le.investment, p);
        generators = generators
            .max((h.insurance - sol.gen_insurance[i]).abs())
            .max((h.financial - sol.gen_financial[i]).abs());

        let var = sol.capacity_variance(i);
        let r_form = s.capacity * p.r + s.risk_aversion() * var;
        let direct = sol.coverage[i] * p.eta * (sol.price[i] + sol.gen_insurance[i])
            + sol.investment[i] * p.sigma * (q + sol.gen_financial[i])
            + s.capacity * p.r;
        drift = drift.max((r_form - direct).abs());
    }
    // Barriers: the distortion collapses onto the prices.
    for i in [0, n - 1] {
        generators = generators
            .max((sol.gen_insurance[i] + sol.price[i]).abs())
            .max((sol.gen_financial[i] + q).abs());
    }
    c.below(&format!("{label}: |D(p*) - closed-form demand|"), composition, 1e-10);
    c.below(&format!("{label}: generator identities"), generators, 1e-12);
    c.below(&format!("{label}: |Phi - (Mr + R Sigma^2)|"), drift, 1e-10);

    match sol.ode_residuals() {
        Ok(res) => {
            let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            c.below(&format!("{label}: interior ODE residual"), worst, 1e-6);
        }
        Err(e) => c.record(false, format!("{label}: residual: {e}")),
    }
    c.below(
        &format!("{label}: boundary residuals"),
        sol.diagnostics.boundary.max_abs(),
        1e-8,
    );

    let top = 1.0 + p.gamma;
    let corridor = (0..n).all(|i| sol.ratio[i] >= 1.0 && sol.ratio[i] <= top);
    c.record(corridor, format!("{label}: 1 <= u <= 1 + gamma on the grid"));
    let rising = (1..n - 1).filter(|&i| sol.slope[i] > 0.0).count();
    let pinned = sol.slope[0].abs().max(sol.slope[n - 1].abs());
    c.record(
        rising == 0 && pinned < sol.diagnostics.tolerances.boundary,
        format!("{label}: du <= 0 inside, |du| = {pinned:.1e} at the barriers ({rising} violations)"),
    );
    let mr = (0..n)
        .map(|i| sol.grid[i] * sol.risk_aversion(i))
        .fold(f64::NEG_INFINITY, f64::max);
    c.below(&format!("{label}: max M R"), mr, 1.0);
    let fmin = (0..n)
        .map(|i| model::f_condition(&sol.state(i), sol.price[i], sol.coverage[i], sol.investment[i], p))
        .fold(f64::INFINITY, f64::min);
    c.record(fmin > 0.0, format!("{label}: min f = {fmin:.4e} > 0"));
}

pub fn property_suite() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    let bench = MarketParams::benchmark();

    let coarse = solve_or_record(&mut c, "benchmark", &bench);
    if let Some(sol) = &coarse {
        pointwise_properties(&mut c, "benchmark", sol);
    }
    if let Some(sol) = solve_or_record(&mut c, "reduction", &MarketParams::no_investment()) {
        pointwise_properties(&mut c, "reduction", &sol);
    }

    if let Some(sol) = &coarse {
        let cfg = SolverConfig {
            grid_size: 2 * (sol.len() - 1) + 1,
            ..Default::default()
        };
        match solve_equilibrium(&bench, &cfg) {
            Ok(fine) => {
                let shift = (fine.m_low - sol.m_low).abs().max((fine.m_high - sol.m_high).abs());
                c.below("grid doubling: barrier shift", shift, 1e-7);
            }
            Err(e) => c.record(false, format!("grid doubling: {e}")),
        }
    }

    // Constant coefficients: the density is an exponential in closed form.
    let (phi0, sigma0, lo, hi) = (0.01, 0.2, 0.3, 1.3);
    let grid = linspace(lo, hi, 11);
    let k = 2.0 * phi0 / (sigma0 * sigma0);
    let stub = CapacityDynamics::from_tabulated(grid.clone(), vec![phi0; 11], vec![sigma0; 11], vec![phi0; 11]);
    match stub.and_then(|d| stationary_density(&d, 2001)) {
        Ok(dens) => {
            let norm = ((k * hi).exp() - (k * lo).exp()) / k;
            let worst = dens
                .grid
                .iter()
                .zip(&dens.density)
                .map(|(m, v)| (v - (k * m).exp() / norm).abs())
                .fold(0.0f64, f64::max);
            c.below("constant-coefficient density error", worst, 1e-8);
        }
        Err(e) => c.record(false, format!("constant-coefficient density: {e}")),
    }

    if let Some(sol) = &coarse {
        if let Some(d) = dynamics_or_record(&mut c, "benchmark", sol) {
            let sim = SimulationConfig {
                horizon: 1e4,
                dt: 1e-3,
                paths: 400,
                ..Default::default()
            };
            match (
                analyze(&d, sol.len()),
                first_passage_times(&d, &sim, sol.m_low, sol.m_high),
            ) {
                (Ok(a), Ok(fp)) => {
                    let se = fp.std_error();
                    let gap = (fp.mean() - a.soft_duration).abs();
                    c.record(
                        fp.censored == 0 && gap <= 1.96 * se,
                        format!(
                            "first passage: MC {:.3} vs Ts {:.3}, |gap| {gap:.3} <= 1.96 SE {:.3} ({} paths, {} censored)",
                            fp.mean(),
                            a.soft_duration,
                            1.96 * se,
                            fp.times.len(),
                            fp.censored
                        ),
                    );
                }
                (Err(e), _) | (_, Err(e)) => c.record(false, format!("first passage: {e}")),
            }
        }
    }
    c.finish("property_suite", start)
}

pub fn non_existence() -> Outcome {
    let start = Instant::now();
    let mut c = Checks::new();
    for theta in [10.0, 50.0] {
        let mut p = MarketParams::benchmark();
        p.theta = theta;
        let t = Instant::now();
        let label = format!("theta={theta}");
        match solve_equilibrium(&p, &SolverConfig::default()) {
            Err(Error::NoEquilibrium { invariant, detail }) => c.record(
                !invariant.is_empty(),
                format!("{label}: NoEquilibrium `{invariant}` ({detail})"),
            ),
            Err(e) => c.record(false, format!("{label}: unexpected error {e}")),
            Ok(sol) => c.record(
                false,
                format!("{label}: returned a solution on [{}, {}]", sol.m_low, sol.m_high),
            ),
        }
        c.budget(t, Duration::from_secs(10));
    }
    c.finish("non_existence", start)
}

pub type Criterion = fn() -> Outcome;

pub const CRITERIA: [(&str, Criterion); 7] = [
    ("benchmark_boundaries", benchmark_boundaries),
    ("sweep_regression", sweep_regression),
    ("no_investment_reduction", no_investment_reduction),
    ("cycle_durations", cycle_durations),
    ("stationary_density", stationary_density_criterion),
    ("property_suite", property_suite),
    ("non_existence", non_existence),
];

/// Renders outcomes as a table with per-check detail under failures.
pub fn render(outcomes: &[Outcome], verbose: bool) -> String {
    let mut out = String::new();
    for o in outcomes {
        let _ = writeln!(out, "{}", o.line());
        if verbose || !o.passed {
            for d in &o.details {
                let _ = writeln!(out, "       {d}");
            }
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let _ = writeln!(out, "{passed}/{} criteria passed", outcomes.len());
    out
}
