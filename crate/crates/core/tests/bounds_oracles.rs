//! Closed-form Kato parameters and CS bounds against direct numerical
//! optimization, plus their structural properties.

use proptest::prelude::*;

use qkd_tha::concentration::{bound, optimal_ab, ParamOrigin};
use qkd_tha::cs_bounds::{g_lower, g_pm, g_upper, Sign};
use qkd_tha::{BoundKind, BoundQuery, Delta};

/// Bound at `x = prediction` written out from its definition, with `b`
/// taken on the constraint curve `b² = a² + ln(1/ε)(1 + s·4a/(3√N))²/2`.
fn bound_on_curve(kind: BoundKind, n: f64, eps: f64, x: f64, a: f64) -> f64 {
    let sn = n.sqrt();
    let f = 1.0 + kind.exponent_sign() * 4.0 * a / (3.0 * sn);
    let b = (a * a - eps.ln() * f * f / 2.0).sqrt();
    match kind {
        BoundKind::CountLower => n / (sn + 2.0 * a) * (x / sn + a - b),
        BoundKind::CountUpper => n / (sn - 2.0 * a) * (x / sn + b - a),
        BoundKind::SumLower => x - (b + a * (2.0 * x / n - 1.0)) * sn,
        BoundKind::SumUpper => x + (b + a * (2.0 * x / n - 1.0)) * sn,
    }
}

/// Best `a` by a dense scan followed by golden-section refinement. Lower
/// bounds are maximized, upper bounds minimized.
fn numeric_optimum(kind: BoundKind, n: f64, eps: f64, x: f64) -> (f64, f64) {
    let sn = n.sqrt();
    let sign = match kind {
        BoundKind::CountLower | BoundKind::SumLower => 1.0,
        _ => -1.0,
    };
    let score = |a: f64| {
        let v = sign * bound_on_curve(kind, n, eps, x, a);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let (lo, hi) = (-0.49 * sn, 0.49 * sn);
    let steps = 200_000;
    let grid = |i: usize| lo + (hi - lo) * i as f64 / steps as f64;
    let best = (0..=steps).max_by(|&i, &j| score(grid(i)).total_cmp(&score(grid(j)))).unwrap();
    let (mut a, mut b) = (grid(best.saturating_sub(1)), grid((best + 1).min(steps)));
    let r = 0.618_033_988_749_894_8;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if score(c) > score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let a_opt = 0.5 * (a + b);
    (a_opt, bound_on_curve(kind, n, eps, x, a_opt))
}

#[test]
fn closed_form_matches_numeric_optimum() {
    let (n, eps) = (1e6, 1e-10);
    for frac in [0.5, 0.2, 0.05, 0.8] {
        let x = frac * n;
        let q = BoundQuery::new(n as u64, eps, x).unwrap();
        for kind in BoundKind::ALL {
            let p = optimal_ab(kind, &q).unwrap();
            assert_eq!(p.origin, ParamOrigin::ClosedForm, "{kind:?} at S = {x}");
            let (a_num, v_num) = numeric_optimum(kind, n, eps, x);
            let v_closed = bound(kind, &q, x).unwrap();
            assert!(
                ((v_closed - v_num) / v_num).abs() < 1e-9,
                "{kind:?} at S = {x}: closed {v_closed} vs numeric {v_num}"
            );
            assert!(
                (p.a - a_num).abs() <= 1e-6 * p.a.abs().max(1.0),
                "{kind:?} at S = {x}: a = {} vs numeric {a_num}",
                p.a
            );
        }
    }
}

/// Largest or smallest `p₁` with `√(p₁p) + √((1−p₁)(1−p)) ≥ δ`, by bisection
/// on the concave overlap function, which peaks at `p₁ = p`.
fn cs_extreme(delta: f64, p: f64, upper: bool) -> f64 {
    let overlap = |p1: f64| (p1 * p).sqrt() + ((1.0 - p1) * (1.0 - p)).sqrt();
    let edge = if upper { 1.0 } else { 0.0 };
    if overlap(edge) >= delta {
        return edge;
    }
    let (mut inside, mut outside) = (p, edge);
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if overlap(mid) >= delta {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

#[test]
fn cs_bounds_match_constrained_search() {
    let d = |v| Delta::new(v).unwrap();
    let plus = g_pm(d(0.9), 0.5, Sign::Plus).unwrap();
    assert!((plus - (0.5 + 2.0 * 0.9 * (0.19f64 * 0.25).sqrt())).abs() < 1e-15);
    assert!((plus - cs_extreme(0.9, 0.5, true)).abs() < 1e-12);
    assert!((g_upper(d(0.99), 0.1).unwrap() - cs_extreme(0.99, 0.1, true)).abs() < 1e-12);
    assert!((g_lower(d(0.99), 0.9).unwrap() - cs_extreme(0.99, 0.9, false)).abs() < 1e-12);
    for &dv in &[0.3, 0.7, 0.95, 0.999_999] {
        for &p in &[0.0, 1e-6, 0.2, 0.5, 0.77, 1.0] {
            assert!((g_upper(d(dv), p).unwrap() - cs_extreme(dv, p, true)).abs() < 1e-11, "δ={dv} p={p}");
            assert!((g_lower(d(dv), p).unwrap() - cs_extreme(dv, p, false)).abs() < 1e-11, "δ={dv} p={p}");
        }
    }
}

fn query() -> impl Strategy<Value = (BoundQuery, f64)> {
    (2.0f64..13.0, -25.0f64..-0.5, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(ln, le, fp, fx)| {
        let n = 10f64.powf(ln).round() as u64;
        let nf = n as f64;
        (BoundQuery::new(n, 10f64.powf(le), fp * nf).unwrap(), fx * nf)
    })
}

proptest! {
    #[test]
    fn bounds_stay_in_range_and_ordered((q, x) in query()) {
        let nf = q.n as f64;
        let v: Vec<f64> = BoundKind::ALL.iter().map(|&k| bound(k, &q, x).unwrap()).collect();
        for &b in &v {
            prop_assert!((0.0..=nf).contains(&b));
        }
        prop_assert!(v[0] <= v[1]);
        prop_assert!(v[2] <= v[3]);
        prop_assert!(v[0] <= x && v[2] <= x && x <= v[1] && x <= v[3]);
    }

    #[test]
    fn bounds_are_monotone_in_their_argument((q, x) in query(), dx in 0.0f64..1.0) {
        let nf = q.n as f64;
        let y = (x + dx * (nf - x)).min(nf);
        for kind in BoundKind::ALL {
            prop_assert!(bound(kind, &q, x).unwrap() <= bound(kind, &q, y).unwrap() * (1.0 + 1e-12) + 1e-9);
        }
    }

    #[test]
    fn parameters_satisfy_their_constraint((q, _x) in query()) {
        for kind in BoundKind::ALL {
            let p = optimal_ab(kind, &q).unwrap();
            prop_assert!(p.b >= p.a.abs());
            let sign = kind.exponent_sign();
            let achieved = p.failure_probability(q.n, sign);
            prop_assert!(((achieved - q.epsilon) / q.epsilon).abs() <= 1e-9);
        }
    }

    #[test]
    fn cs_sandwich_and_monotone_in_delta(d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0, p in 0.0f64..=1.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (dl, dh) = (Delta::new(lo).unwrap(), Delta::new(hi).unwrap());
        let (gl, gu) = (g_lower(dh, p).unwrap(), g_upper(dh, p).unwrap());
        prop_assert!((0.0..=1.0).contains(&gl) && (0.0..=1.0).contains(&gu));
        prop_assert!(gl <= p && p <= gu);
        prop_assert!(g_upper(dl, p).unwrap() >= gu - 1e-15);
        prop_assert!(g_lower(dl, p).unwrap() <= gl + 1e-15);
    }
}
