use podi_core::windkessel::{self, outlets, simulate, steady_state, SampledFlow, WindkesselParams, WindkesselState};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = WindkesselParams> {
    (1e1f64..1e4, 1e2f64..1e5, 1e-6f64..1e-2, 0.0f64..1e5)
        .prop_map(|(rp, rd, c, pd)| WindkesselParams::new(rp, rd, c, pd).unwrap())
}

/// End-time error of the constant-flow problem against the exact exponential.
fn constant_flow_error(params: &WindkesselParams, q: f64, p0: f64, dt: f64, t_end: f64) -> f64 {
    let tau = params.time_constant();
    let trace = simulate(params, &|_t: f64| q, dt, t_end, WindkesselState::new(p0, 0.0)).unwrap();
    let p_inf = params.p_distal + params.r_distal * q;
    let exact = p_inf + (p0 - p_inf) * (-t_end / tau).exp();
    (trace.last().unwrap().p_proximal - exact).abs()
}

proptest! {
    #[test]
    fn decay_is_unconditionally_stable(params in params_strategy(), dt in 1e-6f64..1e3, p0 in -1e5f64..1e5) {
        let params = params.with_p_distal(0.0);
        let mut state = WindkesselState::new(p0, 0.0);
        for _ in 0..20 {
            let next = windkessel::bdf1_step(&state, &params, 0.0, dt).unwrap();
            prop_assert!(next.p_proximal.abs() <= state.p_proximal.abs());
            state = next;
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point(params in params_strategy(), q in -500.0f64..500.0, dt in 1e-5f64..10.0) {
        let state = WindkesselState::steady(&params, q, 0.0);
        let next = windkessel::bdf1_step(&state, &params, q, dt).unwrap();
        let scale = state.p_proximal.abs().max(params.r_distal * q.abs()).max(1.0);
        prop_assert!((next.p_proximal - state.p_proximal).abs() <= 4.0 * f64::EPSILON * scale);
    }

    #[test]
    fn first_order_convergence(params in params_strategy(), q in 1.0f64..500.0, p0 in 0.0f64..1e5) {
        let tau = params.time_constant();
        let t_end = 5.0 * tau;
        let errors: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|m| constant_flow_error(&params, q, p0, tau / m, t_end))
            .collect();
        // skip cases where the transient is already below rounding noise
        prop_assume!(errors[2] > 1e-9 * (p0.abs() + params.r_distal * q));
        for w in errors.windows(2).take(2) {
            let ratio = w[0] / w[1];
            prop_assert!((1.8..=2.2).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn distal_pressure_superposes(
        params in params_strategy(),
        a in -1e4f64..1e4,
        amps in prop::collection::vec(0.0f64..400.0, 5..30),
    ) {
        let tau = params.time_constant();
        let signal = SampledFlow::new(0.0, tau / 7.0, amps).unwrap();
        let dt = tau / 13.0;
        let base = simulate(&params.with_p_distal(0.0), &signal, dt, 3.0 * tau, WindkesselState::new(0.0, 0.0)).unwrap();
        let lifted = simulate(&params.with_p_distal(a), &signal, dt, 3.0 * tau, WindkesselState::new(a, 0.0)).unwrap();
        prop_assert_eq!(base.len(), lifted.len());
        for (b, l) in base.iter().zip(&lifted) {
            let scale = b.p_proximal.abs() + a.abs() + 1.0;
            prop_assert!(((l.p_proximal - b.p_proximal) - a).abs() <= 1e-12 * scale);
            prop_assert!(((l.p_outlet - b.p_outlet) - a).abs() <= 1e-12 * (b.p_outlet.abs() + a.abs() + 1.0));
        }
    }
}

#[test]
fn descending_aorta_order_and_steady_state() {
    let params = outlets::DESCENDING_AORTA.with_p_distal(0.0);
    let tau = params.time_constant();
    let q = 100.0;
    let e10 = constant_flow_error(&params, q, 0.0, tau / 10.0, 5.0 * tau);
    let e20 = constant_flow_error(&params, q, 0.0, tau / 20.0, 5.0 * tau);
    let e40 = constant_flow_error(&params, q, 0.0, tau / 40.0, 5.0 * tau);
    for ratio in [e10 / e20, e20 / e40] {
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
    }
    let (_, p_k) = steady_state(&params, q);
    let analytic = (params.r_proximal + params.r_distal) * q + params.p_distal;
    assert!((p_k - analytic).abs() <= 1e-10 * analytic);
}

#[test]
fn long_horizon_reaches_steady_state() {
    let params = outlets::LEFT_SUBCLAVIAN;
    let tau = params.time_constant();
    let q = 5.0;
    let trace = simulate(
        &params,
        &|_t: f64| q,
        tau / 10.0,
        20.0 * tau,
        WindkesselState::new(0.0, 0.0),
    )
    .unwrap();
    let (_, p_k) = steady_state(&params, q);
    let last = trace.last().unwrap();
    assert!(((last.p_outlet - p_k) / p_k).abs() < 1e-3);
    assert_eq!(last.t, 20.0 * tau);
}
