//! End-to-end pipeline runs and configuration handling.

use proptest::prelude::*;
use qfdm::config::{QaeModeName, RunConfig};
use qfdm::model::{FacePair, MarketModel, PayoffSpec, ProductSpec};
use qfdm::pipeline::{run_complexity, run_pricing, Stage};
use qfdm::ErrorCategory;

fn dko(n_gr: usize) -> RunConfig {
    let product = ProductSpec {
        maturity: 1.0,
        lower: vec![70.0],
        upper: vec![140.0],
        spot: vec![100.0],
        payoff: PayoffSpec::call(vec![1.0], 100.0),
        boundaries: vec![FacePair::knock_out()],
        payoff_bound: vec![0.0, 1.0],
        allow_discounted_linear: false,
    };
    let mut cfg = RunConfig::new(MarketModel::single(0.01, 0.2), product);
    cfg.pipeline.n_gr = Some(n_gr);
    cfg
}

fn mode_strategy() -> impl Strategy<Value = QaeModeName> {
    prop_oneof![
        Just(QaeModeName::Exact),
        Just(QaeModeName::BiasPlus),
        Just(QaeModeName::BiasMinus),
        Just(QaeModeName::Sampled),
        Just(QaeModeName::Adverse),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_json(
        eps in proptest::option::of(1e-6f64..1.0),
        eps_rel in 1e-4f64..0.5,
        n_exp in proptest::option::of(1u32..12),
        k in proptest::option::of(1usize..20),
        mode in mode_strategy(),
        seed in any::<u64>(),
        sigma in 0.1f64..0.6,
    ) {
        let mut cfg = dko(64);
        cfg.model.sigmas = vec![sigma];
        cfg.pipeline.eps = eps;
        cfg.pipeline.eps_rel = eps_rel;
        cfg.pipeline.n_gr = n_exp.map(|e| 1usize << e);
        cfg.pipeline.k = k;
        cfg.pipeline.qae_mode = mode;
        cfg.pipeline.seed = seed;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn small_knock_out_run_is_consistent() {
    let rep = run_pricing(&dko(64)).unwrap();
    let base = rep.v0_baseline.unwrap().value;
    assert!((rep.v0_classical - base).abs() / base < 0.05);
    assert!((rep.omega - rep.v0_classical).abs() <= 1e-8 * rep.v0_classical);
    assert!(rep.diagnostics.berry_rel_gap < 1e-6);
    assert_eq!(rep.diagnostics.grid_points, 64);
    assert_eq!(rep.error_budget.eps, 0.01 * base);
    let sp = rep.diagnostics.stateprep.unwrap();
    assert!((sp.amplitude_norm - 1.0).abs() < 1e-12);
}

#[test]
fn same_seed_gives_identical_reports() {
    let mut cfg = dko(32);
    cfg.pipeline.qae_mode = QaeModeName::Sampled;
    cfg.pipeline.seed = 42;
    let a = run_pricing(&cfg).unwrap();
    let b = run_pricing(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    cfg.pipeline.seed = 43;
    let c = run_pricing(&cfg).unwrap();
    assert_ne!(a.omega, c.omega);
}

#[test]
fn readout_error_stays_inside_its_bound_for_every_mode() {
    for mode in [QaeModeName::BiasPlus, QaeModeName::BiasMinus, QaeModeName::Sampled, QaeModeName::Adverse] {
        let mut cfg = dko(64);
        cfg.pipeline.qae_mode = mode;
        let rep = run_pricing(&cfg).unwrap();
        assert!(rep.error_budget.omega_vs_classical <= rep.error_budget.readout_bound, "{mode:?}");
    }
}

#[test]
fn oversized_grid_is_a_capacity_error() {
    let mut cfg = dko(64);
    cfg.pipeline.max_grid_points = 32;
    let err = run_pricing(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Gridding);
    assert_eq!(err.error.category(), ErrorCategory::Capacity);
    assert!(err.to_string().starts_with("[gridding]"), "{err}");
}

#[test]
fn invalid_model_is_reported_by_the_config_stage() {
    let mut cfg = dko(64);
    cfg.model.r = 0.5;
    let err = run_pricing(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert_eq!(err.error.category(), ErrorCategory::Validation);
}

#[test]
fn malformed_json_reports_position() {
    let err = RunConfig::from_json("{\n  \"model\": ").unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unknown_pipeline_field_is_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&dko(64).to_json()).unwrap();
    v["pipeline"]["n_grid"] = 64.into();
    assert!(RunConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn complexity_follows_tolerance_scaling() {
    let mut a = dko(64);
    a.pipeline.eps = Some(1e-2);
    a.pipeline.t_ter = Some(0.5);
    let mut b = a.clone();
    b.pipeline.eps = Some(1e-3);
    let ca = run_complexity(&a).unwrap().complexity;
    let cb = run_complexity(&b).unwrap().complexity;
    assert!((cb.c_state / ca.c_state - 10.0).abs() < 1e-9);
    assert!((cb.d_total / ca.d_total - 100.0).abs() < 1e-7);
}
