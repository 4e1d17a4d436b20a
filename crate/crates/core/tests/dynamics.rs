mod common;

use proptest::prelude::*;

use sirs_etc::dynamics::{
    concrete_event_time, crossing_time, eval_d, eval_f, integrate_embedded, integrate_f, EmbeddedState, Envelope,
    IntegratorConfig, ModelParams, State,
};

fn simplex_point() -> impl Strategy<Value = State> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| if a + b <= 1.0 { State::new(a, b) } else { State::new(1.0 - a, 1.0 - b) })
}

fn level() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.17, 0.22, 0.26])
}

proptest! {
    #[test]
    fn decomposition_on_diagonal_is_the_field(x in simplex_point(), u in 0.1..0.4f64) {
        let p = ModelParams::tokyo();
        let d = eval_d(x, u, x, u, &p);
        let f = eval_f(x, u, &p);
        let g = common::field(x.s, x.i, u);
        prop_assert!((d.0 - f.0).abs() <= 1e-12 && (d.1 - f.1).abs() <= 1e-12);
        prop_assert!((f.0 - g.0).abs() <= 1e-15 && (f.1 - g.1).abs() <= 1e-15);
    }

    #[test]
    fn embedding_stays_ordered_and_contains_samples(
        s in 0.3..0.8f64, i in 0.02..0.1f64, ws in 0.0..0.02f64, wi in 0.0..0.02f64,
        u in level(), t in 0.1..5.0f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64,
    ) {
        let p = ModelParams::tokyo();
        let cfg = IntegratorConfig::default();
        let lo = State::new(s, i);
        let hi = State::new(s + ws, i + wi);
        let e = integrate_embedded(EmbeddedState::new(lo, hi), u, t, &p, &cfg).unwrap();
        prop_assert!(e.is_ordered(1e-12));
        let x = integrate_f(State::new(s + a * ws, i + b * wi), u, t, &p, &cfg).unwrap();
        prop_assert!(e.lower.s <= x.s + 1e-12 && x.s <= e.upper.s + 1e-12);
        prop_assert!(e.lower.i <= x.i + 1e-12 && x.i <= e.upper.i + 1e-12);
    }

    #[test]
    fn larger_box_gives_larger_image(
        s in 0.4..0.7f64, i in 0.03..0.08f64, w in 0.001..0.01f64, grow in 0.0..0.01f64,
        u in level(), t in 0.1..3.0f64,
    ) {
        let p = ModelParams::tokyo();
        let cfg = IntegratorConfig::default();
        let inner = EmbeddedState::new(State::new(s, i), State::new(s + w, i + w));
        let outer = EmbeddedState::new(State::new(s - grow, i - grow), State::new(s + w + grow, i + w + grow));
        let a = integrate_embedded(inner, u, t, &p, &cfg).unwrap();
        let b = integrate_embedded(outer, u, t, &p, &cfg).unwrap();
        prop_assert!(b.lower.precedes(&a.lower, 1e-12) && a.upper.precedes(&b.upper, 1e-12));
    }

    #[test]
    fn event_time_matches_dense_scan(s in 0.45..0.85f64, i in 0.03..0.1f64, u in level(), k in 1..=3u32) {
        let p = ModelParams::tokyo();
        let cfg = IntegratorConfig::default();
        let eps = 0.01 * k as f64;
        let ev = concrete_event_time(State::new(s, i), u, eps, &p, &cfg);
        let oracle = common::dense_event(s, i, u, eps, 1e-3, cfg.horizon);
        match (ev, oracle) {
            (Some(e), Some((t, s1, level))) => {
                prop_assert!((e.time - t).abs() < 1e-3, "{} vs {}", e.time, t);
                prop_assert!((e.state.s - s1).abs() < 1e-4);
                prop_assert!((e.state.i - level).abs() < 1e-8);
            }
            (None, None) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn point_embedding_crossing_is_the_event(s in 0.5..0.85f64, i in 0.03..0.08f64, u in level()) {
        let p = ModelParams::tokyo();
        let cfg = IntegratorConfig::default();
        let x = State::new(s, i);
        let target = i - 0.01;
        let ev = concrete_event_time(x, u, 0.01, &p, &cfg);
        let cross = crossing_time(EmbeddedState::point(x), u, target, Envelope::Upper, &p, &cfg);
        if let (Some(e), Some(t)) = (ev, cross) {
            if (e.state.i - target).abs() < 1e-9 {
                prop_assert!((e.time - t).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn flow_agrees_with_fine_step_reference() {
    let p = ModelParams::tokyo();
    let cfg = IntegratorConfig::default();
    for (s, i, u, t) in [(0.8, 0.07, 0.26, 10.0), (0.5, 0.07, 0.17, 50.0), (0.6, 0.05, 0.22, 123.45)] {
        let x = integrate_f(State::new(s, i), u, t, &p, &cfg).unwrap();
        let (a, b) = common::flow(s, i, u, t, 1e-3);
        assert!((x.s - a).abs() < 1e-9 && (x.i - b).abs() < 1e-9, "{x:?} vs ({a}, {b})");
    }
}

#[test]
fn rejects_bad_durations() {
    let p = ModelParams::tokyo();
    let cfg = IntegratorConfig::default();
    assert!(integrate_f(State::new(0.5, 0.05), 0.2, -1.0, &p, &cfg).is_err());
    assert!(integrate_f(State::new(0.5, 0.05), 0.2, f64::NAN, &p, &cfg).is_err());
}
