use robust_insurance::cycles::{analyze, ergodic_check, phase_durations};
use robust_insurance::dynamics::{build_dynamics, measure_gap, occupancy, simulate_path, Measure, SimulationConfig};
use robust_insurance::{solve_equilibrium, EquilibriumSolution, MarketParams, SolverConfig};

fn bench() -> EquilibriumSolution {
    solve_equilibrium(&MarketParams::benchmark(), &SolverConfig::default()).unwrap()
}

#[test]
fn drift_at_financing_barrier_is_interest_only() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    assert_eq!(d.phi_values()[0], sol.m_low * sol.params.r);
    assert!(d.phi_values()[1..sol.len() - 1].iter().all(|&p| p > 0.0));
}

#[test]
fn reference_drift_differs_by_the_distortion() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    for i in (0..sol.len()).step_by(50) {
        let gap = d.phi_reference_values()[i] - d.phi_values()[i];
        assert!((gap - measure_gap(&sol, i)).abs() < 1e-12);
    }
}

#[test]
fn durations_are_positive_and_monotone() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    let t = phase_durations(&d, sol.len()).unwrap();
    let n = t.grid.len();
    assert_eq!(t.soft[n - 1], 0.0);
    assert_eq!(t.hard[0], 0.0);
    assert!(t.soft.windows(2).all(|w| w[1] < w[0]));
    assert!(t.hard.windows(2).all(|w| w[1] > w[0]));
    assert!(t.soft.iter().chain(&t.hard).all(|&x| x >= 0.0));
}

#[test]
fn durations_stable_under_grid_doubling() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    let a = analyze(&d, 2001).unwrap();
    let b = analyze(&d, 4001).unwrap();
    assert!((a.soft_duration / b.soft_duration - 1.0).abs() < 5e-3);
    assert!((a.hard_duration / b.hard_duration - 1.0).abs() < 5e-3);
}

#[test]
fn simulated_paths_stay_between_barriers() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    for measure in [Measure::WorstCase, Measure::Reference] {
        let cfg = SimulationConfig {
            horizon: 200.0,
            dt: 1e-3,
            measure,
            ..Default::default()
        };
        let path = simulate_path(&d, &cfg, 0, 1).unwrap();
        assert!(path.iter().all(|&(_, m)| m >= sol.m_low && m <= sol.m_high));
    }
}

#[test]
fn pooled_occupancy_is_a_distribution() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    let cfg = SimulationConfig {
        horizon: 100.0,
        paths: 3,
        ..Default::default()
    };
    let h = occupancy(&d, &cfg).unwrap();
    assert!(h.fractions.iter().all(|&f| f >= 0.0));
    assert!((h.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(h.edges.len(), cfg.bins + 1);
    assert_eq!(h.edges[cfg.bins], sol.m_high);
    assert_eq!(occupancy(&d, &cfg).unwrap(), h);
}

#[test]
fn long_run_averages_match_the_stationary_law() {
    let sol = bench();
    let d = build_dynamics(&sol).unwrap();
    let a = analyze(&d, sol.len()).unwrap();
    let r = ergodic_check(&d, &a.density, &SimulationConfig::default()).unwrap();
    let range = sol.m_high - sol.m_low;
    assert!(r.mean_gap.unwrap() < 0.01 * range, "{r:?}");
    // Lower half of the capacity range.
    let half = r.analytic_mass.len() / 2;
    let analytic: f64 = r.analytic_mass[..half].iter().sum();
    let simulated: f64 = r.occupancy[..half].iter().sum();
    assert!((analytic - simulated).abs() < 0.02, "{analytic} vs {simulated}");
}
