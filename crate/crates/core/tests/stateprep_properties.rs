//! Swept amplitudes against the normalized readout weights.

use proptest::prelude::*;
use qfdm::gridding::Grid;
use qfdm::model::MarketModel;
use qfdm::stateprep::{swept_amplitudes, build_p_vector, compare_stateprep, CellConvention, GaussianSpec};

fn spec_for(model: &MarketModel, width: f64, delta_min: f64) -> GaussianSpec {
    let t = (width / (model.sigma_max() * delta_min)).powi(2);
    GaussianSpec::at_time(model, &vec![100.0; model.dim()], t).unwrap()
}

fn grid(d: usize, width: f64, n_gr: usize) -> Grid {
    let centre = 100f64.ln();
    Grid::new(vec![centre - 0.45 * width; d], vec![centre + 0.55 * width; d], n_gr).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn one_asset_amplitudes_match_weights(sigma in 0.15f64..0.5, delta in 10.0f64..16.0, n_exp in 6u32..=8) {
        let model = MarketModel::single(0.01, sigma);
        let width = 1.8;
        let g = grid(1, width, 1 << n_exp);
        let spec = spec_for(&model, width, delta);
        let cmp = compare_stateprep(&g, &spec, CellConvention::Centered).unwrap();
        prop_assert!(cmp.l2 < 1e-2, "L2 {}", cmp.l2);
        prop_assert!((cmp.amplitude_norm - 1.0).abs() < 1e-12);
        let pv = build_p_vector(&g, &spec).unwrap();
        prop_assert!(pv.p2_rel_gap < 0.05, "P² gap {}", pv.p2_rel_gap);
    }

    #[test]
    fn two_asset_amplitudes_match_weights(s1 in 0.15f64..0.4, ratio in 0.8f64..1.25, rho in -0.6f64..0.6, delta in 10.0f64..12.8) {
        // Keeps every axis inside Δ 10..16; larger Δ under-resolves at 64 points.
        let model = MarketModel::pair(0.01, s1, s1 * ratio, rho);
        let width = 1.8;
        let g = grid(2, width, 64);
        let spec = spec_for(&model, width, delta);
        let cmp = compare_stateprep(&g, &spec, CellConvention::Centered).unwrap();
        prop_assert!(cmp.l2 < 1e-2, "L2 {}", cmp.l2);
        prop_assert!((cmp.amplitude_norm - 1.0).abs() < 1e-12);
        let pv = build_p_vector(&g, &spec).unwrap();
        prop_assert!(pv.p2_rel_gap < 0.05, "P² gap {}", pv.p2_rel_gap);
    }

    #[test]
    fn amplitudes_are_nonnegative_and_normalized(sigma in 0.1f64..0.6, t in 0.05f64..2.0, n_exp in 2u32..=7) {
        let model = MarketModel::single(0.0, sigma);
        let g = grid(1, 2.0, 1 << n_exp);
        let spec = GaussianSpec::at_time(&model, &[100.0], t).unwrap();
        let amps = swept_amplitudes(&g, &spec, CellConvention::Centered).unwrap();
        let norm: f64 = amps.values.iter().map(|a| a * a).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert!(amps.values.iter().all(|a| *a >= 0.0));
    }
}

#[test]
fn resolution_improves_agreement() {
    let model = MarketModel::single(0.01, 0.2);
    let spec = spec_for(&model, 1.8, 12.0);
    let coarse = compare_stateprep(&grid(1, 1.8, 32), &spec, CellConvention::Centered).unwrap();
    let fine = compare_stateprep(&grid(1, 1.8, 256), &spec, CellConvention::Centered).unwrap();
    assert!(fine.l2 < coarse.l2);
}
