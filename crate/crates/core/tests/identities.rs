use proptest::prelude::*;
use robust_insurance::model::{self, LocalEquilibrium};
use robust_insurance::{LocalState, MarketParams};

fn params() -> impl Strategy<Value = MarketParams> {
    (-0.6f64..0.6, 0.5f64..4.0, 0.05f64..0.4).prop_map(|(rho, theta, gamma)| MarketParams {
        rho,
        theta,
        gamma,
        ..MarketParams::benchmark()
    })
}

/// States inside the corridor with `M R` bounded away from one.
fn state(gamma: f64) -> impl Strategy<Value = LocalState> {
    (0.05f64..5.0, 0.0f64..1.0, 0.0f64..0.9).prop_map(move |(m, t, mr)| {
        let u = 1.0 + gamma * t;
        let r = mr / m;
        LocalState::new(m, u, -r * u)
    })
}

proptest! {
    #[test]
    fn demand_composes_with_price((p, s) in params().prop_flat_map(|p| (Just(p), state(p.gamma)))) {
        if let Ok(le) = LocalEquilibrium::evaluate(&s, &p) {
            let closed = model::equilibrium_demand(&s, &p).unwrap();
            prop_assert!((closed - model::demand(le.price, &p)).abs() < 1e-10);
        }
    }

    #[test]
    fn generators_minimize_entropy((p, s) in params().prop_flat_map(|p| (Just(p), state(p.gamma))), share in 0.01f64..1.0) {
        if let Ok(le) = LocalEquilibrium::evaluate(&s, &p) {
            let m = share * s.capacity;
            let (x, y) = model::individual_policies(m, &s, le.coverage, le.investment).unwrap();
            let h = model::entropy_minimizing_generators(m, &s, x, y, le.coverage, le.investment, &p);
            let scale = 1.0 + le.generators.insurance.abs() + le.generators.financial.abs();
            prop_assert!((h.insurance - le.generators.insurance).abs() < 1e-12 * scale);
            prop_assert!((h.financial - le.generators.financial).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn drift_forms_agree((p, s) in params().prop_flat_map(|p| (Just(p), state(p.gamma)))) {
        if let Ok(le) = LocalEquilibrium::evaluate(&s, &p) {
            let q = p.sharpe();
            let r_form = s.capacity * p.r + s.risk_aversion() * le.variance;
            let direct = le.coverage * p.eta * (le.price + le.generators.insurance)
                + le.investment * p.sigma * (q + le.generators.financial)
                + s.capacity * p.r;
            prop_assert!((r_form - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn barrier_states_are_undistorted(p in params(), m in 0.05f64..5.0, t in 0.0f64..1.0) {
        let s = LocalState::new(m, 1.0 + p.gamma * t, 0.0);
        let le = LocalEquilibrium::evaluate(&s, &p).unwrap();
        prop_assert_eq!((le.clearing.g1, le.clearing.g2), (1.0, 0.0));
        prop_assert_eq!(le.generators.insurance, -le.price);
        prop_assert_eq!(le.generators.financial, -p.sharpe());
    }

    #[test]
    fn underwriting_sign_matches_factored_form((p, s) in params().prop_flat_map(|p| (Just(p), state(p.gamma)))) {
        if let Ok(le) = LocalEquilibrium::evaluate(&s, &p) {
            let f = model::f_condition(&s, le.price, le.coverage, le.investment, &p);
            let g = model::f_condition_factor(&s, &p);
            if f.abs() > 1e-9 && g.abs() > 1e-9 {
                prop_assert_eq!(f > 0.0, g > 0.0);
            }
        }
    }
}
