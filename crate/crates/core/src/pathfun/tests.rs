use super::*;
use crate::numeric::{ks_critical, ks_statistic};
use crate::{GaussianStream, StepSchedule};
use approx::assert_relative_eq;
use proptest::prelude::*;

#[test]
fn bridge_samples_follow_the_cdf() {
    let (x, y, lam, gam) = (0.3, -0.1, 0.8, 0.5);
    let mut s = GaussianStream::new(11, 3);
    let n = 100_000;
    let mut zs: Vec<f64> = (0..n)
        .map(|_| bridge_sup_sample(x, y, lam, gam, s.uniform()).unwrap())
        .collect();
    let d = ks_statistic(&mut zs, |z| bridge_sup_cdf(x, y, lam, gam, z));
    assert!(d < ks_critical(n, 0.01), "KS distance {d}");
}

#[test]
fn bridge_round_trip_on_random_inputs() {
    let mut s = GaussianStream::new(5, 0);
    for _ in 0..10_000 {
        let x = 2.0 * s.uniform() - 1.0;
        let y = 2.0 * s.uniform() - 1.0;
        let lam = 0.5 + 1.5 * s.uniform();
        let gam = 0.1 + 0.9 * s.uniform();
        let u = s.uniform();
        let z = bridge_sup_sample(x, y, lam, gam, u).unwrap();
        let back = bridge_sup_cdf(x, y, lam, gam, z);
        assert!((back - u).abs() < 1e-12, "u = {u}, back = {back}");
    }
}

proptest! {
    #[test]
    fn bridge_sample_dominates_endpoints(
        x in -50.0f64..50.0, y in -50.0f64..50.0,
        lam in 1e-3f64..10.0, gam in 1e-4f64..5.0, u in 1e-12f64..(1.0 - 1e-12),
    ) {
        prop_assert!(bridge_sup_sample(x, y, lam, gam, u).unwrap() >= x.max(y));
    }

    #[test]
    fn sliding_max_matches_brute_force(
        sups in proptest::collection::vec(-10.0f64..10.0, 2..80),
        releases in proptest::collection::vec(0usize..4, 1..40),
    ) {
        let mut w = PathWindow::new(1, true);
        w.push_point(0.0, &[0.0]);
        for (i, &v) in sups.iter().enumerate() {
            w.push_point((i + 1) as f64, &[0.0]);
            w.push_interval_sup(v);
        }
        let mut first = 0;
        for r in releases {
            first = (first + r).min(sups.len() - 1);
            w.release_before(first);
            let expect = sups[first..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(w.sup_over(first, sups.len() - 1), Some(expect));
        }
    }

    #[test]
    fn barrier_payoff_is_monotone(
        xi_end in -0.5f64..0.5, bump in 0.0f64..0.3, peak_gap in 0.0f64..0.3, extra in 0.0f64..0.3,
    ) {
        let p = BarrierParams { s0: 100.0, r: 0.02, strike: 95.0, barrier: 130.0, horizon: 1.0 };
        let payoff = |end: f64, peak: f64| {
            let times = [0.0, 1.0];
            let vals = [0.0, end];
            barrier_payoff(&PathSpan::new(1, &times, &vals, Some(peak)), &p)
        };
        let peak = xi_end.max(0.0) + peak_gap;
        prop_assert!(payoff(xi_end, peak + extra) <= payoff(xi_end, peak));
        // raising the terminal value while keeping the same running max
        let higher = (xi_end + bump).min(peak);
        prop_assert!(payoff(higher, peak) >= payoff(xi_end, peak));
    }
}

#[test]
fn barrier_examples() {
    let p = BarrierParams {
        s0: 50.0,
        r: 0.0,
        strike: 50.0,
        barrier: 55.0,
        horizon: 1.0,
    };
    let times = [0.0, 0.5, 1.0];
    let vals = [0.0, 0.01, (52.0f64 / 50.0).ln()];
    let span = PathSpan::new(1, &times, &vals, Some((53.0f64 / 50.0).ln()));
    assert_relative_eq!(barrier_payoff(&span, &p), 2.0, epsilon = 1e-12);

    let span = PathSpan::new(1, &times, &vals, Some((56.0f64 / 50.0).ln()));
    assert_eq!(barrier_payoff(&span, &p), 0.0);

    let knocked = BarrierParams { s0: 56.0, ..p };
    let span = PathSpan::new(1, &times, &vals, Some(0.0));
    assert_eq!(barrier_payoff(&span, &knocked), 0.0);

    assert!(PathFunctional::barrier_uo_call(BarrierParams { barrier: 0.0, ..p }).is_err());
    assert!(PathFunctional::barrier_uo_call(BarrierParams { strike: -1.0, ..p }).is_err());
}

fn filled_window(sched: &StepSchedule, steps: usize, seed: u64) -> PathWindow {
    let mut w = PathWindow::new(1, true);
    let mut s = GaussianStream::new(seed, 0);
    let mut x = 0.0;
    w.push_point(0.0, &[x]);
    for n in 1..=steps {
        let h = sched.gamma(n);
        let next = x + h.sqrt() * s.normal();
        let v = crate::pathfun::bridge_sup_inverse(x, next, 1.0, h, s.uniform());
        x = next;
        w.push_point(sched.cum_time(n), &[x]);
        w.push_interval_sup(v);
    }
    w
}

#[test]
fn eval_stopped_examples() {
    let sched = StepSchedule::poly(0.1, 0.6).unwrap();
    let w = filled_window(&sched, 400, 1);
    let u = sched.cum_time(7);

    let start = PathFunctional::marginal(MarginalPoint::Start, ScalarMap::Identity, 1.0).unwrap();
    assert_eq!(eval_stopped(&start, &w, u).unwrap(), w.value(7)[0]);

    assert_eq!(eval_stopped(&PathFunctional::constant(2.5), &w, u).unwrap(), 2.5);

    let end = PathFunctional::marginal(MarginalPoint::End, ScalarMap::Square, 1.0).unwrap();
    let n_end = sched.locate(u + 1.0).index;
    assert_eq!(eval_stopped(&end, &w, u).unwrap(), w.value(n_end)[0].powi(2));

    assert!(eval_stopped(&start, &w, u + 1e-3).is_err());
    let far = PathFunctional::running_max(1e3).unwrap();
    assert!(matches!(
        eval_stopped(&far, &w, u),
        Err(crate::Error::InsufficientCoverage { .. })
    ));
}

#[test]
fn running_max_matches_dense_reference() {
    // Dense sub-sampled path; per-interval sups are exact maxima of the dense points.
    let sched = StepSchedule::poly(0.2, 0.5).unwrap();
    let sub = 16;
    let steps = 300;
    let mut s = GaussianStream::new(8, 1);
    let mut w = PathWindow::new(1, true);
    let mut dense = vec![(0.0, 0.0)];
    let mut x = 0.0;
    w.push_point(0.0, &[x]);
    for n in 1..=steps {
        let h = sched.gamma(n);
        let t0 = sched.cum_time(n - 1);
        let mut v = x;
        for j in 1..=sub {
            x += (h / sub as f64).sqrt() * s.normal();
            v = v.max(x);
            dense.push((t0 + h * j as f64 / sub as f64, x));
        }
        w.push_point(sched.cum_time(n), &[x]);
        w.push_interval_sup(v);
    }
    let horizon = 1.3;
    let f = PathFunctional::running_max(horizon).unwrap();
    for k in [0usize, 3, 40, 100] {
        let u = sched.cum_time(k);
        let n_end = sched.locate(u + horizon).index;
        let right = sched.cum_time(n_end + 1);
        let brute = dense
            .iter()
            .filter(|(t, _)| *t >= u - 1e-12 && *t <= right + 1e-12)
            .map(|&(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(eval_stopped(&f, &w, u).unwrap(), brute, "origin {k}");
    }
}

#[test]
fn eval_is_shift_consistent() {
    let sched = StepSchedule::poly(0.1, 0.6).unwrap();
    let w = filled_window(&sched, 300, 4);
    let k = 25;
    let u = sched.cum_time(k);
    let mut shifted = PathWindow::new(1, true);
    for (i, n) in (k..=w.last_index()).enumerate() {
        shifted.push_point(w.time(n) - u, w.value(n));
        if i > 0 {
            shifted.push_interval_sup(w.sup_over(n - 1, n - 1).unwrap());
        }
    }
    let p = BarrierParams {
        s0: 1.0,
        r: 0.03,
        strike: 0.9,
        barrier: 1.6,
        horizon: 0.8,
    };
    let fs = [
        PathFunctional::barrier_uo_call(p).unwrap(),
        PathFunctional::running_max(0.8).unwrap(),
        PathFunctional::marginal(MarginalPoint::End, ScalarMap::Tanh, 0.8).unwrap(),
        PathFunctional::terminal_call(1.0, 0.03, 0.9, 0.8).unwrap(),
    ];
    for f in &fs {
        let a = eval_stopped(f, &w, u).unwrap();
        let b = eval_stopped(f, &shifted, 0.0).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn functional_spec_parses_and_builds() {
    let spec: FunctionalSpec = serde_json::from_str(r#"{"name":"barrier-uo-call","K":0.9,"L":1.2}"#).unwrap();
    let f = spec.build(1.0, 1.0, 0.05).unwrap();
    assert_eq!(f.name(), "barrier-uo-call");
    assert!(f.needs_sup());
    let spec: FunctionalSpec = serde_json::from_str(r#"{"name":"marginal","which":"end","map":"atan"}"#).unwrap();
    let f = spec.build(2.0, 1.0, 0.0).unwrap();
    assert_eq!(f.horizon(), 2.0);
    assert_eq!(f.bound, std::f64::consts::FRAC_PI_2);
}
