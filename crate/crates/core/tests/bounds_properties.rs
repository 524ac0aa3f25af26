//! Touch and tail bounds against quadrature and bridge simulation.

mod common;

use proptest::prelude::*;
use qfdm::baselines::mc_bridge_hit;
use qfdm::model::{FacePair, MarketModel, PayoffSpec, ProductSpec};
use qfdm::pricer::{boundary_value_checks, cut_horizon, hit_bound, hit_horizon, tail_bound, tail_exact, Face};

fn face_strategy() -> impl Strategy<Value = Face> {
    prop_oneof![Just(Face::Lower), Just(Face::Upper)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tail_bound_dominates_quadrature(
        face in face_strategy(),
        sigma in 0.1f64..0.6,
        r_frac in 0.0f64..1.0,
        lr in 0.05f64..1.5,
        t in 0.01f64..2.0,
    ) {
        let r = r_frac * 0.5 * sigma * sigma;
        let (first, prob) = common::lognormal_tail_quadrature(r, sigma, 100.0, lr, t, face == Face::Upper);
        let b = tail_bound(face, r, sigma, 100.0, lr, t);
        prop_assert!(b.first_moment >= first * (1.0 - 1e-10));
        prop_assert!(b.probability >= prob * (1.0 - 1e-10));
        let ex = tail_exact(face, r, sigma, 100.0, lr, t);
        prop_assert!((ex.probability - prob).abs() <= 1e-10);
        prop_assert!((ex.first_moment - first).abs() <= 1e-10 * 100.0);
    }

    #[test]
    fn hit_horizon_inverts_the_bound(lr in 0.01f64..3.0, sigma in 0.05f64..1.0, log_eps in -30.0f64..-0.01) {
        let eps = log_eps.exp();
        let t = hit_horizon(lr, sigma, eps).unwrap();
        prop_assert!((hit_bound(lr, sigma, t) - eps).abs() <= 1e-12 * eps);
        // Earlier horizons give smaller bounds.
        prop_assert!(hit_bound(lr, sigma, 0.5 * t) < eps);
    }

    #[test]
    fn cut_horizon_shrinks_with_tolerance(lr in 0.05f64..2.0, sigma in 0.1f64..0.6, eps in 1e-8f64..0.4) {
        let a = cut_horizon(lr, sigma, eps).unwrap();
        let b = cut_horizon(lr, sigma, eps / 10.0).unwrap();
        prop_assert!(b < a);
    }
}

#[test]
fn touch_bound_dominates_bridge_simulation() {
    // Bridges from 0 ending below half the level; unit variance rate.
    let cases = [(0.5, 0.0, 0.2), (1.0, 0.3, 0.5), (0.8, -0.4, 0.6), (1.2, 0.1, 1.0), (0.3, 0.05, 0.05)];
    for (i, (level, end, t)) in cases.into_iter().enumerate() {
        let mc = mc_bridge_hit(level, end, t, 20_000, 32, i as u64);
        let bound = hit_bound(level, 1.0, t);
        let exact = (-2.0 * level * (level - end) / t).exp();
        assert!(mc <= bound + 1e-12, "case {i}: mc {mc} bound {bound}");
        assert!((mc - exact).abs() < 0.02, "case {i}: mc {mc} exact {exact}");
    }
}

#[test]
fn domain_errors() {
    assert!(hit_horizon(0.3, 0.2, 0.0).is_err());
    assert!(hit_horizon(0.3, 0.2, 1.0).is_err());
    assert!(cut_horizon(0.3, 0.2, 0.5).is_err());
}

#[test]
fn wide_box_passes_the_assembled_check() {
    let model = MarketModel::single(0.01, 0.2);
    let product = ProductSpec {
        maturity: 1.0,
        lower: vec![20.0],
        upper: vec![500.0],
        spot: vec![100.0],
        payoff: PayoffSpec::call(vec![1.0], 100.0),
        boundaries: vec![FacePair::knock_out()],
        payoff_bound: vec![0.0, 1.0],
        allow_discounted_linear: false,
    };
    let rep = boundary_value_checks(&model, &product, 0.08, 0.3).unwrap();
    assert_eq!(rep.faces.len(), 2);
    assert!(rep.outside_mass_exact <= rep.outside_mass_bound);
    assert!(rep.within_eps);
    assert!(rep.hit_within_horizon);
    for f in &rep.faces {
        assert!(f.tail_bound.probability >= f.tail_exact.probability);
    }
}

#[test]
fn loose_tolerance_names_the_failing_face() {
    let model = MarketModel::single(0.01, 0.2);
    let product = ProductSpec {
        maturity: 1.0,
        lower: vec![50.0],
        upper: vec![1e4],
        spot: vec![100.0],
        payoff: PayoffSpec::call(vec![1.0], 100.0),
        boundaries: vec![FacePair::knock_out()],
        payoff_bound: vec![0.0, 1.0],
        allow_discounted_linear: false,
    };
    let err = boundary_value_checks(&model, &product, 500.0, 0.3).unwrap_err().to_string();
    assert!(err.contains("Upper face of asset 1"), "{err}");
}
