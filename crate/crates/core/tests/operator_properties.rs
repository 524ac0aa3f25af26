//! Properties of the assembled operator against a dense Kronecker oracle.

mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qfdm::gridding::Grid;
use qfdm::model::MarketModel;
use qfdm::operator::{assemble_f, f_norm_bound, log_norm};

/// Valid one- to three-asset models: `r < σ_min²/2` and a positive-definite
/// correlation built from a random Cholesky factor.
fn model_strategy(d: usize) -> impl Strategy<Value = MarketModel> {
    (
        prop::collection::vec(0.15f64..0.5, d),
        0.0f64..0.9,
        prop::collection::vec(-1.0f64..1.0, d * d),
    )
        .prop_map(move |(sigmas, r_frac, raw)| {
            let smin = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
            let r = r_frac * 0.5 * smin * smin;
            let mut l = DMatrix::from_fn(d, d, |i, j| if j <= i { raw[i * d + j] } else { 0.0 });
            for i in 0..d {
                l[(i, i)] = 1.0 + l[(i, i)].abs();
            }
            let cov = &l * l.transpose();
            let rho = (0..d)
                .map(|i| (0..d).map(|j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).collect())
                .collect();
            MarketModel::new(r, sigmas, rho)
        })
}

fn grid(d: usize, n_gr: usize, width: f64) -> Grid {
    Grid::new(vec![4.6 - width; d], vec![4.6 + width; d], n_gr).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn log_norm_is_negative(model in (1usize..=3).prop_flat_map(model_strategy), width in 0.3f64..1.5) {
        let d = model.dim();
        let f = assemble_f(&grid(d, [32, 8, 4][d - 1], width), &model).unwrap();
        prop_assert!(log_norm(&f).unwrap().value < 0.0);
    }

    #[test]
    fn sparsity_per_row(model in (1usize..=3).prop_flat_map(model_strategy), n_exp in 1u32..=3) {
        let d = model.dim();
        let n_gr = 2usize.pow(n_exp + if d == 1 { 2 } else { 0 });
        let f = assemble_f(&grid(d, n_gr, 1.0), &model).unwrap();
        for r in 0..f.nrows() {
            prop_assert!(f.row_nnz(r) <= 2 * d * d + 1);
        }
    }

    #[test]
    fn matches_kronecker_oracle(model in (1usize..=2).prop_flat_map(model_strategy), n_exp in 1u32..=4, width in 0.2f64..2.0) {
        let d = model.dim();
        let g = grid(d, 2usize.pow(n_exp), width);
        let dense = common::dense_operator(&g, &model);
        let f = assemble_f(&g, &model).unwrap().to_dense();
        let scale = dense.amax();
        prop_assert!((f - &dense).amax() <= 1e-14 * scale);
    }

    #[test]
    fn norm_bound_dominates_spectral_norm(model in (1usize..=2).prop_flat_map(model_strategy), n_exp in 1u32..=4) {
        let d = model.dim();
        let g = grid(d, 2usize.pow(n_exp), 1.0);
        let two_norm = common::dense_operator(&g, &model).singular_values().max();
        prop_assert!(two_norm <= f_norm_bound(&g, &model));
    }

    #[test]
    fn drift_part_is_antisymmetric(model in (1usize..=2).prop_flat_map(model_strategy)) {
        let d = model.dim();
        let g = grid(d, 8, 1.0);
        let f = common::dense_operator(&g, &model);
        let zero_drift = MarketModel::new(0.0, model.sigmas.clone(), model.rho.clone());
        // Removing r changes only the drift, so (F - F_0) keeps its antisymmetric
        // first-difference form.
        let diff = f - common::dense_operator(&g, &zero_drift);
        prop_assert!((&diff + diff.transpose()).amax() <= 1e-12 * diff.amax().max(1.0));
    }
}

#[test]
fn scalar_operator_entries() {
    let model = MarketModel::single(0.01, 0.2);
    let g = grid(1, 4, 1.0);
    let f = assemble_f(&g, &model).unwrap();
    let h = g.h()[0];
    let a = 0.02 / (h * h);
    let b = (0.01 - 0.02) / (2.0 * h);
    assert_relative_eq!(f.get(1, 1), -2.0 * a, max_relative = 1e-15);
    assert_relative_eq!(f.get(1, 2), a + b, max_relative = 1e-15);
    assert_relative_eq!(f.get(1, 0), a - b, max_relative = 1e-15);
    assert_eq!(f.get(0, 3), 0.0);
}
