mod common;

use proptest::prelude::*;

use ppde_core::path::{metric_d, metric_dstar, SampledPath, TimedPath};

const T: f64 = 1.0;

proptest! {
    #[test]
    fn metrics_are_symmetric(a in common::timed(T), b in common::timed(T)) {
        prop_assert_eq!(metric_d(&a, &b, T).unwrap(), metric_d(&b, &a, T).unwrap());
        prop_assert_eq!(metric_dstar(&a, &b, T).unwrap(), metric_dstar(&b, &a, T).unwrap());
    }

    #[test]
    fn metrics_vanish_on_the_diagonal(a in common::timed(T)) {
        prop_assert_eq!(metric_d(&a, &a, T).unwrap(), 0.0);
        prop_assert_eq!(metric_dstar(&a, &a, T).unwrap(), 0.0);
    }

    #[test]
    fn dstar_triangle(a in common::timed(T), b in common::timed(T), c in common::timed(T)) {
        let ac = metric_dstar(&a, &c, T).unwrap();
        let via = metric_dstar(&a, &b, T).unwrap() + metric_dstar(&b, &c, T).unwrap();
        prop_assert!(ac <= via + 1e-12, "{} > {}", ac, via);
    }

    #[test]
    fn d_dominates_dstar_on_unit_horizons(a in common::timed(T), b in common::timed(T)) {
        prop_assert!(metric_d(&a, &b, T).unwrap() >= metric_dstar(&a, &b, T).unwrap());
    }

    #[test]
    fn concat_agrees_with_stop_before_t(w in common::path(T), next in common::path(0.5), u in 0.0f64..=1.0) {
        let t = u * T;
        let joined = w.concat(t, &next).unwrap();
        prop_assert!(joined.stop(t).unwrap().same_function(&w.stop(t).unwrap(), 0.0));
    }

    #[test]
    fn concat_ignores_the_first_path_after_t(w in common::path(T), next in common::path(0.5), u in 0.0f64..=1.0) {
        let t = u * T;
        let a = w.stop(t).unwrap().concat(t, &next).unwrap();
        let b = w.concat(t, &next).unwrap();
        prop_assert!(a.same_function(&b, 0.0));
    }

    #[test]
    fn concat_follows_the_increments(w in common::path(T), next in common::path(0.5), u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let t = u * T;
        let s = v * 0.5;
        let joined = w.concat(t, &next).unwrap();
        let expected = w.eval_scalar(t) + (next.eval_scalar(s) - next.eval_scalar(0.0));
        prop_assert!((joined.eval_scalar(t + s) - expected).abs() <= 1e-12);
    }

    #[test]
    fn stopping_twice_on_knots(w in common::path(T), i in 0usize..8, j in 0usize..8) {
        let (i, j) = (i % w.len(), j % w.len());
        let (t, s) = (w.grid()[i], w.grid()[j]);
        let twice = w.stop(t).unwrap().stop(s).unwrap();
        prop_assert!(twice.same_function(&w.stop(s.min(t)).unwrap(), 0.0));
    }

    #[test]
    fn stopping_twice_anywhere(w in common::path(T), u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let twice = w.stop(u).unwrap().stop(v).unwrap();
        prop_assert!(twice.same_function(&w.stop(u.min(v)).unwrap(), 1e-12));
    }
}

#[test]
fn d_weight_breaks_the_triangle_inequality() {
    // The growth weight is paid in full on the long edge but only partly on the
    // two short ones: d(a, c) = 1 + 2M while d(a, b) + d(b, c) = 1 + M.
    let m = 5.0;
    let flat = |x: f64, t: f64| TimedPath::new(t, SampledPath::constant(&[x], T).unwrap()).unwrap();
    let (a, b, c) = (flat(0.0, 0.0), flat(0.0, 1.0), flat(m, 1.0));
    let ac = metric_d(&a, &c, T).unwrap();
    let via = metric_d(&a, &b, T).unwrap() + metric_d(&b, &c, T).unwrap();
    assert_eq!((ac, via), (1.0 + 2.0 * m, 1.0 + m));
    assert!(metric_dstar(&a, &c, T).unwrap() <= metric_dstar(&a, &b, T).unwrap() + metric_dstar(&b, &c, T).unwrap());
}
