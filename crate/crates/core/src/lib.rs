//! Robust insurance-market equilibrium with ambiguity-averse insurers.
//!
//! Aggregate capacity `M` moves between a financing barrier and a payout
//! barrier. Between them the market-to-book ratio `u(M)` solves a
//! second-order free-boundary problem; prices, underwriting and investment
//! follow pointwise from `(M, u, u')`.

// `!(x > 0.0)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cycles;
pub mod dynamics;
pub mod error;
pub mod interp;
pub mod io;
pub mod model;
pub mod ode;
pub mod params;
pub mod solver;
pub mod tridiag;

pub use cycles::{analyze, ergodic_check, phase_durations, stationary_density, CycleAnalytics};
pub use dynamics::{build_dynamics, CapacityDynamics, Measure, SimulationConfig};
pub use error::{Error, Result};
pub use params::{LocalState, MarketParams};
pub use solver::{check_assumptions, solve_equilibrium, sweep, EquilibriumSolution, SolverConfig, SweepAxis};
