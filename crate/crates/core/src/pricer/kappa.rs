//! Condition number of the eigenvector matrix diagonalizing `F`.

use ndarray::Array2;
use ndarray_linalg::{Eig, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridding::Grid;
use crate::model::MarketModel;
use crate::operator::{build_d_matrices, Coefficients, FdmSystem};
use crate::sparse::CsrMatrix;

/// Largest `N` for which the eigendecomposition is done densely.
pub const DENSE_KAPPA_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSource {
    /// Dense eigendecomposition of the full operator.
    Dense,
    /// Product of one-dimensional factors (uncorrelated assets).
    AxisProduct,
    /// Given by the caller.
    Supplied,
    /// Not computable here; 1 is used and the report says so.
    Assumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub value: f64,
    pub source: KappaSource,
}

/// `‖V‖‖V⁻¹‖` for the eigenvector matrix of a dense operator.
pub fn eigvec_condition(f: &CsrMatrix) -> Result<f64> {
    let n = f.nrows();
    if n > DENSE_KAPPA_CAP {
        return Err(Error::Capacity { what: "dense eigendecomposition dimension", requested: n, cap: DENSE_KAPPA_CAP });
    }
    let mut a = Array2::<f64>::zeros((n, n));
    for (r, c, v) in f.triplets() {
        a[(r, c)] = v;
    }
    let (_, vecs) = a.eig().map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e}")))?;
    let (_, s, _) = vecs.svd(false, false).map_err(|e| Error::Numeric(format!("SVD failed: {e}")))?;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) {
        return Err(Error::Numeric("operator is not diagonalizable to working precision".into()));
    }
    Ok(smax / smin)
}

/// Chooses between a supplied value, the dense route, the axis product for
/// diagonal `ρ`, and the flagged fallback.
pub fn kappa_v(fdm: &FdmSystem, model: &MarketModel, supplied: Option<f64>) -> Result<KappaEstimate> {
    if let Some(v) = supplied {
        if !(v >= 1.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("κ_V must be ≥ 1, got {v}")));
        }
        return Ok(KappaEstimate { value: v, source: KappaSource::Supplied });
    }
    if fdm.len() <= DENSE_KAPPA_CAP {
        return Ok(KappaEstimate { value: eigvec_condition(&fdm.f)?, source: KappaSource::Dense });
    }
    let d = model.dim();
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || model.rho[i][j] == 0.0));
    if diagonal && fdm.grid.n_gr() <= DENSE_KAPPA_CAP {
        return Ok(KappaEstimate { value: axis_product(&fdm.grid, model)?, source: KappaSource::AxisProduct });
    }
    Ok(KappaEstimate { value: 1.0, source: KappaSource::Assumed })
}

/// With `ρ = I`, `F = Σ_i I ⊗ F_i ⊗ I` is diagonalized by `V_1 ⊗ … ⊗ V_d`,
/// whose 2-norm condition number is the product of the factors'.
fn axis_product(grid: &Grid, model: &MarketModel) -> Result<f64> {
    let coef = Coefficients::new(grid, model)?;
    let (d1, d2) = build_d_matrices(grid.n_gr())?;
    let mut kappa = 1.0;
    for i in 0..grid.dim() {
        let fi = d2.scale(coef.diffusion[i]).add_scaled(&d1, coef.drift[i])?;
        kappa *= eigvec_condition(&fi)?;
    }
    Ok(kappa)
}
