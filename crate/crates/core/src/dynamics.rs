//! Reflected diffusion of aggregate capacity between the two barriers.
//!
//! `dM = Phi(M) dt + Sigma(M) dW`, with dividends paid at `M_high` and
//! capital raised at `M_low`. Paths use Euler-Maruyama with projection onto
//! `[M_low, M_high]` after every step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::solver::EquilibriumSolution;

/// Tolerance on the two drift forms agreeing at grid points.
pub const DRIFT_IDENTITY_TOL: f64 = 1e-10;

/// Fraction of the horizon discarded before occupancy is recorded.
pub const BURN_IN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Drift after the worst-case belief distortion.
    #[default]
    WorstCase,
    /// Drift under the reference model, `D eta p + Y sigma q + M r`.
    Reference,
}

/// Tabulated drift and volatility of capacity.
#[derive(Debug, Clone)]
pub struct CapacityDynamics {
    pub m_low: f64,
    pub m_high: f64,
    phi: MonotoneCubic,
    phi_reference: MonotoneCubic,
    sigma: MonotoneCubic,
}

impl CapacityDynamics {
    /// Builds dynamics from arbitrary tabulated coefficients on a common grid.
    /// Used for stubs; `sigma` may vanish here, unlike in [`build_dynamics`].
    pub fn from_tabulated(grid: Vec<f64>, phi: Vec<f64>, sigma: Vec<f64>, phi_reference: Vec<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidSolution("volatility must be nonnegative".into()));
        }
        let m_low = grid[0];
        let m_high = grid[grid.len() - 1];
        Ok(Self {
            m_low,
            m_high,
            phi: MonotoneCubic::new(grid.clone(), phi)?,
            phi_reference: MonotoneCubic::new(grid.clone(), phi_reference)?,
            sigma: MonotoneCubic::new(grid, sigma)?,
        })
    }

    pub fn grid(&self) -> &[f64] {
        self.phi.knots()
    }

    /// Drift at the grid points.
    pub fn phi_values(&self) -> &[f64] {
        self.phi.values()
    }

    pub fn sigma_values(&self) -> &[f64] {
        self.sigma.values()
    }

    pub fn phi_reference_values(&self) -> &[f64] {
        self.phi_reference.values()
    }

    /// Drift at `m`, which is clamped into the barriers.
    pub fn phi(&self, m: f64) -> f64 {
        self.phi.eval_clamped(m)
    }

    pub fn sigma(&self, m: f64) -> f64 {
        self.sigma.eval_clamped(m)
    }

    pub fn drift(&self, m: f64, measure: Measure) -> f64 {
        match measure {
            Measure::WorstCase => self.phi.eval_clamped(m),
            Measure::Reference => self.phi_reference.eval_clamped(m),
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.m_low + self.m_high)
    }
}

/// Tabulates `Phi` and `Sigma` on the solution grid.
///
/// `Phi` is taken in its risk-aversion form `M r + R Sigma^2`; the direct
/// form from the distorted profits must agree to [`DRIFT_IDENTITY_TOL`].
pub fn build_dynamics(sol: &EquilibriumSolution) -> Result<CapacityDynamics> {
    let p = &sol.params;
    let q = p.sharpe();
    let n = sol.len();
    let mut phi = Vec::with_capacity(n);
    let mut phi_ref = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let m = sol.grid[i];
        let var = sol.capacity_variance(i);
        if !(var > 0.0) {
            return Err(Error::InvalidSolution(format!(
                "Sigma^2 = {var:e} at M = {m} (grid point {i})"
            )));
        }
        let ins = sol.coverage[i] * p.eta;
        let fin = sol.investment[i] * p.sigma;
        let r_form = m * p.r + sol.risk_aversion(i) * var;
        let direct = ins * (sol.price[i] + sol.gen_insurance[i]) + fin * (q + sol.gen_financial[i]) + m * p.r;
        if !((r_form - direct).abs() < DRIFT_IDENTITY_TOL) {
            return Err(Error::InvalidSolution(format!(
                "drift forms disagree by {:e} at M = {m}",
                (r_form - direct).abs()
            )));
        }
        phi.push(r_form);
        phi_ref.push(ins * sol.price[i] + fin * q + m * p.r);
        sigma.push(var.sqrt());
    }
    CapacityDynamics::from_tabulated(sol.grid.clone(), phi, sigma, phi_ref)
}

/// Drift gap between the two measures, `Phi_ref - Phi = -(D eta hI + Y sigma hS)`.
pub fn measure_gap(sol: &EquilibriumSolution, i: usize) -> f64 {
    let p = &sol.params;
    -(sol.coverage[i] * p.eta * sol.gen_insurance[i] + sol.investment[i] * p.sigma * sol.gen_financial[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Initial capacity; the barrier midpoint when absent.
    pub m0: Option<f64>,
    pub seed: u64,
    pub paths: usize,
    pub bins: usize,
    pub measure: Measure,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 1e5,
            dt: 1e-3,
            m0: None,
            seed: 20_250_101,
            paths: 1,
            bins: 200,
            measure: Measure::WorstCase,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "simulation.dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "simulation.horizon must be finite and >= dt, got {}",
                self.horizon
            )));
        }
        if self.bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "simulation.bins must be >= 2, got {}",
                self.bins
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidConfig("simulation.paths must be >= 1".into()));
        }
        Ok(())
    }

    /// Validates and resolves the initial capacity against the barriers.
    pub fn start(&self, dyn_: &CapacityDynamics) -> Result<f64> {
        self.validate()?;
        let m0 = self.m0.unwrap_or_else(|| dyn_.midpoint());
        if !(m0 >= dyn_.m_low && m0 <= dyn_.m_high) {
            return Err(Error::InvalidConfig(format!(
                "simulation.m0 = {m0} lies outside [{}, {}]",
                dyn_.m_low, dyn_.m_high
            )));
        }
        Ok(m0)
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round().max(1.0) as u64
    }
}

/// Independent stream for one path, fixed by `(seed, path)` alone.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

struct Stepper<'a> {
    dyn_: &'a CapacityDynamics,
    measure: Measure,
    dt: f64,
    sqrt_dt: f64,
}

impl Stepper<'_> {
    #[inline]
    fn step(&self, m: f64, z: f64) -> f64 {
        let next = m + self.dyn_.drift(m, self.measure) * self.dt + self.dyn_.sigma(m) * self.sqrt_dt * z;
        next.clamp(self.dyn_.m_low, self.dyn_.m_high)
    }

    /// Unprojected step, for first-passage detection.
    #[inline]
    fn raw(&self, m: f64, z: f64) -> f64 {
        m + self.dyn_.drift(m, self.measure) * self.dt + self.dyn_.sigma(m) * self.sqrt_dt * z
    }
}

fn stepper<'a>(dyn_: &'a CapacityDynamics, cfg: &SimulationConfig) -> Stepper<'a> {
    Stepper {
        dyn_,
        measure: cfg.measure,
        dt: cfg.dt,
        sqrt_dt: cfg.dt.sqrt(),
    }
}

/// One path as `(t, M)` samples, keeping every `stride`-th step plus the start.
pub fn simulate_path(
    dyn_: &CapacityDynamics,
    cfg: &SimulationConfig,
    path: u64,
    stride: usize,
) -> Result<Vec<(f64, f64)>> {
    let m0 = cfg.start(dyn_)?;
    let stride = stride.max(1) as u64;
    let steps = cfg.steps();
    let st = stepper(dyn_, cfg);
    let mut rng = path_rng(cfg.seed, path);
    let mut out = Vec::with_capacity((steps / stride + 1) as usize);
    let mut m = m0;
    out.push((0.0, m));
    for k in 1..=steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        m = st.step(m, z);
        if k % stride == 0 {
            out.push((k as f64 * cfg.dt, m));
        }
    }
    Ok(out)
}

/// Time spent in each capacity bin after burn-in, pooled over paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyHistogram {
    pub edges: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Simulated time that entered the histogram, summed over paths.
    pub total_time: f64,
    /// Number of recorded steps.
    pub samples: u64,
    /// Time average of `M` over the recorded steps.
    pub time_average: f64,
}

struct Tally {
    counts: Vec<u64>,
    samples: u64,
    sum: f64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.samples += other.samples;
        self.sum += other.sum;
        self
    }
}

pub fn occupancy(dyn_: &CapacityDynamics, cfg: &SimulationConfig) -> Result<OccupancyHistogram> {
    let m0 = cfg.start(dyn_)?;
    let steps = cfg.steps();
    let burn = (BURN_IN_FRACTION * steps as f64).floor() as u64;
    let bins = cfg.bins;
    let (lo, hi) = (dyn_.m_low, dyn_.m_high);
    let width = (hi - lo) / bins as f64;
    let st = stepper(dyn_, cfg);

    let run = |path: u64| {
        let mut rng = path_rng(cfg.seed, path);
        let mut t = Tally {
            counts: vec![0; bins],
            samples: 0,
            sum: 0.0,
        };
        let mut m = m0;
        for k in 1..=steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            m = st.step(m, z);
            if k > burn {
                let b = (((m - lo) / width) as usize).min(bins - 1);
                t.counts[b] += 1;
                t.samples += 1;
                t.sum += m;
            }
        }
        t
    };
    // Paths merge in index order so the pooled result is independent of scheduling.
    let tallies: Vec<Tally> = (0..cfg.paths as u64).into_par_iter().map(run).collect();
    let total = tallies.into_iter().reduce(Tally::merge).expect("at least one path");

    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    edges[bins] = hi;
    let fractions = if total.samples == 0 {
        vec![0.0; bins]
    } else {
        total.counts.iter().map(|&c| c as f64 / total.samples as f64).collect()
    };
    Ok(OccupancyHistogram {
        edges,
        fractions,
        total_time: total.samples as f64 * cfg.dt,
        samples: total.samples,
        time_average: if total.samples == 0 {
            f64::NAN
        } else {
            total.sum / total.samples as f64
        },
    })
}

/// Sampled first-passage times from `from` to the level `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstPassage {
    pub times: Vec<f64>,
    /// Paths that had not reached `to` by the horizon.
    pub censored: usize,
}

impl FirstPassage {
    pub fn mean(&self) -> f64 {
        self.times.iter().sum::<f64>() / self.times.len() as f64
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        let n = self.times.len() as f64;
        let mean = self.mean();
        let var = self.times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Runs `cfg.paths` paths from `from` until they cross `to`, reflecting at
/// the opposite barrier. Each path is capped at `cfg.horizon`.
pub fn first_passage_times(
    dyn_: &CapacityDynamics,
    cfg: &SimulationConfig,
    from: f64,
    to: f64,
) -> Result<FirstPassage> {
    cfg.validate()?;
    for (name, v) in [("from", from), ("to", to)] {
        if !(v >= dyn_.m_low && v <= dyn_.m_high) {
            return Err(Error::InvalidConfig(format!(
                "first-passage `{name}` = {v} lies outside [{}, {}]",
                dyn_.m_low, dyn_.m_high
            )));
        }
    }
    let upward = to >= from;
    let steps = cfg.steps();
    let st = stepper(dyn_, cfg);
    let run = |path: u64| -> Option<f64> {
        let mut rng = path_rng(cfg.seed, path);
        let mut m = from;
        for k in 1..=steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            let next = st.raw(m, z);
            if (upward && next >= to) || (!upward && next <= to) {
                return Some(k as f64 * cfg.dt);
            }
            m = next.clamp(dyn_.m_low, dyn_.m_high);
        }
        None
    };
    let results: Vec<Option<f64>> = (0..cfg.paths as u64).into_par_iter().map(run).collect();
    let censored = results.iter().filter(|r| r.is_none()).count();
    Ok(FirstPassage {
        times: results.into_iter().flatten().collect(),
        censored,
    })
}
