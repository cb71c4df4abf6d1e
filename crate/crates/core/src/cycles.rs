//! Expected phase durations and the stationary law of capacity.
//!
//! The soft phase runs from `M_low` up to the payout barrier and the hard
//! phase from `M_high` down to the financing barrier. Both expected hitting
//! times solve `-1 = Phi T' + Sigma^2 T'' / 2` with reflection at the
//! barrier that is not the target.

use serde::{Deserialize, Serialize};

use crate::dynamics::{occupancy, CapacityDynamics, SimulationConfig};
use crate::error::{Error, Result};
use crate::interp::{linspace, MonotoneCubic};
use crate::tridiag;

/// Below this many recorded steps the ergodic comparison is not attempted.
pub const MIN_ERGODIC_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Durations {
    pub grid: Vec<f64>,
    /// Expected time to reach `M_high`.
    pub soft: Vec<f64>,
    /// Expected time to reach `M_low`.
    pub hard: Vec<f64>,
}

fn coefficients(dyn_: &CapacityDynamics, grid_size: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if grid_size < 3 {
        return Err(Error::InvalidConfig(format!("grid_size must be >= 3, got {grid_size}")));
    }
    let grid = linspace(dyn_.m_low, dyn_.m_high, grid_size);
    let phi = grid.iter().map(|&m| dyn_.phi(m)).collect();
    let var = grid.iter().map(|&m| dyn_.sigma(m).powi(2)).collect();
    Ok((grid, phi, var))
}

/// Central differences with a ghost-point Neumann row at the reflecting end.
fn hitting_time(phi: &[f64], var: &[f64], h: f64, target_high: bool) -> Result<Vec<f64>> {
    let n = phi.len();
    let m = n - 1;
    // Unknowns exclude the Dirichlet node.
    let offset = if target_high { 0 } else { 1 };
    let (mut a, mut b, mut c) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let d = vec![-1.0; m];
    for k in 0..m {
        let i = k + offset;
        let diff = 0.5 * var[i] / (h * h);
        let adv = phi[i] / (2.0 * h);
        a[k] = diff - adv;
        b[k] = -2.0 * diff;
        c[k] = diff + adv;
        if target_high && i == 0 {
            // T_{-1} = T_1
            c[k] = 2.0 * diff;
            a[k] = 0.0;
        }
        if !target_high && i == n - 1 {
            // T_{n} = T_{n-2}
            a[k] = 2.0 * diff;
            c[k] = 0.0;
        }
    }
    let x = tridiag::solve(&a, &b, &c, &d)?;
    let mut t = Vec::with_capacity(n);
    if target_high {
        t.extend(x);
        t.push(0.0);
    } else {
        t.push(0.0);
        t.extend(x);
    }
    Ok(t)
}

pub fn phase_durations(dyn_: &CapacityDynamics, grid_size: usize) -> Result<Durations> {
    let (grid, phi, var) = coefficients(dyn_, grid_size)?;
    let h = (dyn_.m_high - dyn_.m_low) / (grid_size - 1) as f64;
    Ok(Durations {
        soft: hitting_time(&phi, &var, h, true)?,
        hard: hitting_time(&phi, &var, h, false)?,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Normalizing constant of `kappa / Sigma^2 * exp(2 int Phi / Sigma^2)`.
    pub kappa: f64,
}

impl StationaryDensity {
    /// Trapezoidal integral of `f(M) * density`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, p)| 0.5 * (x[1] - x[0]) * (f(x[0]) * p[0] + f(x[1]) * p[1]))
            .sum()
    }

    /// Cumulative distribution at the grid points.
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for (x, p) in self.grid.windows(2).zip(self.density.windows(2)) {
            acc += 0.5 * (x[1] - x[0]) * (p[0] + p[1]);
            out.push(acc);
        }
        out
    }
}

pub fn stationary_density(dyn_: &CapacityDynamics, grid_size: usize) -> Result<StationaryDensity> {
    let (grid, phi, var) = coefficients(dyn_, grid_size)?;
    if let Some(i) = var.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidSolution(format!("Sigma^2 vanishes at M = {}", grid[i])));
    }
    let mut log_weight = Vec::with_capacity(grid_size);
    let mut acc = 0.0;
    log_weight.push(0.0);
    for i in 1..grid_size {
        let h = grid[i] - grid[i - 1];
        acc += h * (phi[i - 1] / var[i - 1] + phi[i] / var[i]);
        log_weight.push(acc);
    }
    // Shift the exponent before normalizing; kappa absorbs the shift.
    let top = log_weight.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_weight.iter().zip(&var).map(|(w, v)| (w - top).exp() / v).collect();
    let mass: f64 = grid
        .windows(2)
        .zip(scaled.windows(2))
        .map(|(x, p)| 0.5 * (x[1] - x[0]) * (p[0] + p[1]))
        .sum();
    let density = scaled.iter().map(|p| p / mass).collect();
    Ok(StationaryDensity {
        grid,
        density,
        kappa: (-top).exp() / mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleAnalytics {
    pub durations: Durations,
    pub soft_duration: f64,
    pub hard_duration: f64,
    pub cycle_duration: f64,
    pub density: StationaryDensity,
}

pub fn analyze(dyn_: &CapacityDynamics, grid_size: usize) -> Result<CycleAnalytics> {
    let durations = phase_durations(dyn_, grid_size)?;
    let soft_duration = durations.soft[0];
    let hard_duration = durations.hard[grid_size - 1];
    Ok(CycleAnalytics {
        soft_duration,
        hard_duration,
        cycle_duration: soft_duration + hard_duration,
        density: stationary_density(dyn_, grid_size)?,
        durations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    /// `None` when too few samples were recorded.
    pub l1: Option<f64>,
    pub mean_gap: Option<f64>,
    pub analytic_mean: f64,
    pub time_average: f64,
    pub samples: u64,
    pub insufficient_samples: bool,
    /// Analytic bin masses aligned with `occupancy`.
    pub analytic_mass: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub edges: Vec<f64>,
}

/// Exact bin masses of the analytic density on the given edges.
pub fn bin_masses(density: &StationaryDensity, edges: &[f64]) -> Result<Vec<f64>> {
    let cdf = MonotoneCubic::new(density.grid.clone(), density.cdf())?;
    Ok(edges
        .windows(2)
        .map(|e| cdf.eval_clamped(e[1]) - cdf.eval_clamped(e[0]))
        .collect())
}

pub fn ergodic_check(
    dyn_: &CapacityDynamics,
    density: &StationaryDensity,
    sim: &SimulationConfig,
) -> Result<ErgodicReport> {
    let hist = occupancy(dyn_, sim)?;
    let analytic_mass = bin_masses(density, &hist.edges)?;
    let analytic_mean = density.integrate(|m| m);
    let insufficient = hist.samples < MIN_ERGODIC_SAMPLES;
    let (l1, mean_gap) = if insufficient {
        (None, None)
    } else {
        let l1 = hist
            .fractions
            .iter()
            .zip(&analytic_mass)
            .map(|(a, b)| (a - b).abs())
            .sum();
        (Some(l1), Some((hist.time_average - analytic_mean).abs()))
    };
    Ok(ErgodicReport {
        l1,
        mean_gap,
        analytic_mean,
        time_average: hist.time_average,
        samples: hist.samples,
        insufficient_samples: insufficient,
        analytic_mass,
        occupancy: hist.fractions,
        edges: hist.edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(phi: f64, sigma: f64, n: usize) -> CapacityDynamics {
        let grid = linspace(0.3, 1.3, n);
        CapacityDynamics::from_tabulated(grid, vec![phi; n], vec![sigma; n], vec![phi; n]).unwrap()
    }

    #[test]
    fn constant_coefficient_density_matches_exponential() {
        let (phi, sigma) = (0.01, 0.2);
        let d = constant(phi, sigma, 11);
        let s = stationary_density(&d, 2001).unwrap();
        let k = 2.0 * phi / (sigma * sigma);
        let norm = ((k * 1.3f64).exp() - (k * 0.3f64).exp()) / k;
        let worst = s
            .grid
            .iter()
            .zip(&s.density)
            .map(|(m, p)| (p - (k * m).exp() / norm).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
        assert!((s.integrate(|_| 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_drift_durations_are_parabolic() {
        // Phi = 0, Sigma = s: T_soft(M) = ((b - a)^2 - (M - a)^2) / s^2.
        let s = 0.5;
        let d = constant(0.0, s, 11);
        let out = phase_durations(&d, 401).unwrap();
        for (i, &m) in out.grid.iter().enumerate() {
            let soft = (1.0 - (m - 0.3f64).powi(2)) / (s * s);
            let hard = (1.0 - (1.3 - m).powi(2)) / (s * s);
            assert!((out.soft[i] - soft).abs() < 1e-9, "{i}");
            assert!((out.hard[i] - hard).abs() < 1e-9, "{i}");
        }
        assert_eq!(out.soft[400], 0.0);
        assert_eq!(out.hard[0], 0.0);
    }

    #[test]
    fn vanishing_volatility_is_singular() {
        let d = constant(0.0, 0.0, 11);
        assert!(matches!(phase_durations(&d, 11), Err(Error::SingularSystem { .. })));
        assert!(stationary_density(&d, 11).is_err());
    }

    #[test]
    fn degenerate_horizon_is_flagged() {
        let d = constant(0.01, 0.2, 11);
        let dens = stationary_density(&d, 101).unwrap();
        let sim = SimulationConfig {
            horizon: 1e-3,
            dt: 1e-3,
            ..Default::default()
        };
        let r = ergodic_check(&d, &dens, &sim).unwrap();
        assert!(r.insufficient_samples);
        assert!(r.l1.is_none() && r.mean_gap.is_none());
    }

    #[test]
    fn bin_masses_sum_to_one() {
        let d = constant(0.01, 0.2, 11);
        let dens = stationary_density(&d, 201).unwrap();
        let edges = linspace(0.3, 1.3, 8);
        let m = bin_masses(&dens, &edges).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.iter().all(|x| *x > 0.0));
    }
}
