//! Finite-difference operator `F`, boundary vector `C` and payoff vector.
//!
//! In log coordinates the discounted value obeys a constant-coefficient
//! diffusion. Central differences on the interior grid give
//!
//! ```text
//! F = Σ_i a_i D2_i + Σ_{i<j} c_ij D1_i D1_j + Σ_i b_i D1_i
//! a_i = σ_i²/(2h_i²),  c_ij = σ_iσ_jρ_ij/(4h_ih_j),  b_i = (r - σ_i²/2)/(2h_i)
//! ```
//!
//! where `D1_i`, `D2_i` act along axis `i` only. The first two sums are
//! symmetric, the drift sum is antisymmetric.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridding::Grid;
use crate::model::{MarketModel, ProductSpec};
use crate::sparse::CsrMatrix;

/// Largest dimension for which dense eigensolves are attempted.
pub const DENSE_EIG_CAP: usize = 2048;

/// The `n×n` first- and second-difference stencils.
pub fn build_d_matrices(n: usize) -> Result<(CsrMatrix, CsrMatrix)> {
    if n < 2 {
        return Err(Error::InvalidInput("difference matrices need n ≥ 2".into()));
    }
    let mut d1 = Vec::with_capacity(2 * n);
    let mut d2 = Vec::with_capacity(3 * n);
    for i in 0..n {
        d2.push((i, i, -2.0));
        if i + 1 < n {
            d1.push((i, i + 1, 1.0));
            d1.push((i + 1, i, -1.0));
            d2.push((i, i + 1, 1.0));
            d2.push((i + 1, i, 1.0));
        }
    }
    Ok((CsrMatrix::from_triplets(n, n, d1)?, CsrMatrix::from_triplets(n, n, d2)?))
}

/// Stencil coefficients for a grid/model pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub diffusion: Vec<f64>,
    pub drift: Vec<f64>,
    /// Upper-triangular `c_ij` (zero on and below the diagonal).
    pub cross: Vec<Vec<f64>>,
}

impl Coefficients {
    pub fn new(grid: &Grid, model: &MarketModel) -> Result<Self> {
        let d = grid.dim();
        if model.dim() != d {
            return Err(Error::InvalidInput("grid and model dimensions differ".into()));
        }
        let h = grid.h();
        let s = &model.sigmas;
        let diffusion = (0..d).map(|i| s[i] * s[i] / (2.0 * h[i] * h[i])).collect();
        let drift = (0..d).map(|i| model.log_drift(i) / (2.0 * h[i])).collect();
        let mut cross = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i + 1..d {
                cross[i][j] = s[i] * s[j] * model.rho[i][j] / (4.0 * h[i] * h[j]);
            }
        }
        Ok(Self {
            diffusion,
            drift,
            cross,
        })
    }
}

/// Assembly switches. `flip_second_difference` negates the second-difference
/// stencil; it exists only so the verification suites can prove they catch a
/// broken operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    #[serde(default)]
    pub flip_second_difference: bool,
}

/// Symmetric (`second`) and antisymmetric (`first`) parts of `F`.
#[derive(Debug, Clone)]
pub struct OperatorParts {
    pub second: CsrMatrix,
    pub first: CsrMatrix,
}

impl OperatorParts {
    pub fn total(&self) -> CsrMatrix {
        self.second
            .add_scaled(&self.first, 1.0)
            .expect("parts share a shape")
    }
}

pub fn assemble_f_parts(grid: &Grid, model: &MarketModel, opts: AssemblyOptions) -> Result<OperatorParts> {
    let co = Coefficients::new(grid, model)?;
    let d = grid.dim();
    let n = grid.n_gr();
    let len = grid.len();
    let sign2 = if opts.flip_second_difference { -1.0 } else { 1.0 };
    let mut t2 = Vec::with_capacity(len * (1 + 2 * d + 2 * d * d));
    let mut t1 = Vec::with_capacity(len * 2 * d);
    let mut ks = vec![0usize; d];
    for row in 0..len {
        grid.decompose(row, &mut ks);
        for i in 0..d {
            let st = grid.stride(i);
            let a = co.diffusion[i];
            t2.push((row, row, -2.0 * a * sign2));
            if ks[i] > 0 {
                t2.push((row, row - st, a * sign2));
                t1.push((row, row - st, -co.drift[i]));
            }
            if ks[i] + 1 < n {
                t2.push((row, row + st, a * sign2));
                t1.push((row, row + st, co.drift[i]));
            }
            for j in i + 1..d {
                let c = co.cross[i][j];
                if c == 0.0 {
                    continue;
                }
                let sj = grid.stride(j);
                for di in [-1isize, 1] {
                    for dj in [-1isize, 1] {
                        let ki = ks[i] as isize + di;
                        let kj = ks[j] as isize + dj;
                        if ki < 0 || kj < 0 || ki >= n as isize || kj >= n as isize {
                            continue;
                        }
                        let col = row as isize + di * st as isize + dj * sj as isize;
                        t2.push((row, col as usize, c * (di * dj) as f64));
                    }
                }
            }
        }
    }
    Ok(OperatorParts {
        second: CsrMatrix::from_triplets(len, len, t2)?,
        first: CsrMatrix::from_triplets(len, len, t1)?,
    })
}

/// `F = F_2nd + F_1st`.
pub fn assemble_f(grid: &Grid, model: &MarketModel) -> Result<CsrMatrix> {
    Ok(assemble_f_parts(grid, model, AssemblyOptions::default())?.total())
}

/// Boundary vector. Face values are evaluated at the projection of each
/// grid point onto the face; corner points receive every firing term.
pub fn assemble_c(grid: &Grid, model: &MarketModel, product: &ProductSpec) -> Result<Vec<f64>> {
    let co = Coefficients::new(grid, model)?;
    let d = grid.dim();
    let n = grid.n_gr();
    let mut out = vec![0.0; grid.len()];
    let mut ks = vec![0usize; d];
    let mut s = vec![0.0; d];
    let mut lb = vec![0.0; d];
    let mut ub = vec![0.0; d];
    for (row, c) in out.iter_mut().enumerate() {
        grid.decompose(row, &mut ks);
        if ks.iter().all(|&k| k > 0 && k + 1 < n) {
            continue;
        }
        for i in 0..d {
            s[i] = grid.coord(i, ks[i] as isize).exp();
        }
        for i in 0..d {
            lb[i] = if ks[i] == 0 { product.face_value(i, false, &s)? } else { 0.0 };
            ub[i] = if ks[i] == n - 1 { product.face_value(i, true, &s)? } else { 0.0 };
        }
        let mut acc = 0.0;
        for i in 0..d {
            acc += co.diffusion[i] * (lb[i] + ub[i]);
            acc += co.drift[i] * (ub[i] - lb[i]);
            for j in i + 1..d {
                acc += co.cross[i][j] * (-lb[i] - lb[j] + ub[i] + ub[j]);
            }
        }
        *c = acc;
    }
    Ok(out)
}

/// Payoff sampled at the grid points.
pub fn assemble_payoff_vector(grid: &Grid, product: &ProductSpec) -> Result<Vec<f64>> {
    let d = grid.dim();
    let mut x = vec![0.0; d];
    (0..grid.len())
        .map(|off| {
            grid.point(off, &mut x);
            let s: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            product.payoff.eval(&s)
        })
        .collect()
}

/// `Σ 2σ_i²/h_i² + Σ_{i<j} σ_iσ_j/(h_ih_j) + Σ |r - σ_i²/2|/h_i`
pub fn f_norm_bound(grid: &Grid, model: &MarketModel) -> f64 {
    let h = grid.h();
    let s = &model.sigmas;
    let d = grid.dim();
    let mut b = 0.0;
    for i in 0..d {
        b += 2.0 * s[i] * s[i] / (h[i] * h[i]);
        b += model.log_drift(i).abs() / h[i];
        for j in i + 1..d {
            b += s[i] * s[j] / (h[i] * h[j]);
        }
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogNormMethod {
    Dense,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNorm {
    pub value: f64,
    pub method: LogNormMethod,
}

/// `μ(F) = λ_max((F + Fᵀ)/2)`: dense symmetric eigensolve up to
/// [`DENSE_EIG_CAP`], otherwise a Lanczos estimate.
pub fn log_norm(f: &CsrMatrix) -> Result<LogNorm> {
    let n = f.nrows();
    let sym = f.add_scaled(&f.transpose(), 1.0)?.scale(0.5);
    if n <= DENSE_EIG_CAP {
        let eig = SymmetricEigen::new(sym.to_dense());
        let value = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        return Ok(LogNorm { value, method: LogNormMethod::Dense });
    }
    Ok(LogNorm {
        value: lanczos_max(&sym, 300),
        method: LogNormMethod::Estimate,
    })
}

/// Dense `μ` with an explicit cap; used where the caller wants a capacity
/// error instead of an estimate.
pub fn log_norm_dense(f: &CsrMatrix) -> Result<f64> {
    if f.nrows() > DENSE_EIG_CAP {
        return Err(Error::Capacity {
            what: "dense eigensolve dimension",
            requested: f.nrows(),
            cap: DENSE_EIG_CAP,
        });
    }
    Ok(log_norm(f)?.value)
}

/// Largest eigenvalue of a symmetric matrix by Lanczos with full
/// reorthogonalization and a fixed iteration cap.
pub fn lanczos_max(a: &CsrMatrix, max_iter: usize) -> f64 {
    let n = a.nrows();
    let steps = max_iter.min(n);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(steps);
    // deterministic, non-degenerate start vector
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for _ in 0..steps {
        let mut w = a.matvec(&v);
        let al: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        alpha.push(al);
        q.push(v.clone());
        for qi in &q {
            let p: f64 = w.iter().zip(qi).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(qi).for_each(|(wi, qv)| *wi -= p * qv);
        }
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b < 1e-12 * al.abs().max(1.0) {
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(t).eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
}

/// Discretized problem: operator, boundary vector, initial vector.
#[derive(Debug, Clone)]
pub struct FdmSystem {
    pub grid: Grid,
    pub f: CsrMatrix,
    pub c: Vec<f64>,
    pub f_pay: Vec<f64>,
    pub norm_bound: f64,
}

impl FdmSystem {
    pub fn build(grid: Grid, model: &MarketModel, product: &ProductSpec) -> Result<Self> {
        Self::build_with(grid, model, product, AssemblyOptions::default())
    }

    pub fn build_with(grid: Grid, model: &MarketModel, product: &ProductSpec, opts: AssemblyOptions) -> Result<Self> {
        let f = assemble_f_parts(&grid, model, opts)?.total();
        let c = assemble_c(&grid, model, product)?;
        let f_pay = assemble_payoff_vector(&grid, product)?;
        let norm_bound = f_norm_bound(&grid, model);
        Ok(Self {
            grid,
            f,
            c,
            f_pay,
            norm_bound,
        })
    }

    /// Wraps an arbitrary operator (tests and scalar surrogates).
    pub fn from_parts(grid: Grid, f: CsrMatrix, c: Vec<f64>, f_pay: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if f.nrows() != n || f.ncols() != n || c.len() != n || f_pay.len() != n {
            return Err(Error::InvalidInput("operator parts do not match grid size".into()));
        }
        let norm_bound = f.norm_inf().max(f.transpose().norm_inf());
        Ok(Self {
            grid,
            f,
            c,
            f_pay,
            norm_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn has_boundary_source(&self) -> bool {
        self.c.iter().any(|v| *v != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn difference_matrices_n3() {
        let (d1, d2) = build_d_matrices(3).unwrap();
        let e2 = [[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]];
        let e1 = [[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, -1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d2.get(i, j), e2[i][j]);
                assert_eq!(d1.get(i, j), e1[i][j]);
            }
        }
        let sv = d1.to_dense().singular_values().max();
        assert_abs_diff_eq!(sv, 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn norm_bound_scalar_example() {
        let grid = Grid::new(vec![0.0], vec![0.1 * 5.0], 4).unwrap();
        assert_abs_diff_eq!(grid.h()[0], 0.1, epsilon = 1e-15);
        let b = f_norm_bound(&grid, &MarketModel::single(0.01, 0.2));
        assert_abs_diff_eq!(b, 8.1, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_operator_entries() {
        let model = MarketModel::single(0.01, 0.2);
        let grid = Grid::new(vec![3.0], vec![6.0], 4).unwrap();
        let f = assemble_f(&grid, &model).unwrap();
        let h = grid.h()[0];
        let a = 0.04 / (2.0 * h * h);
        let b = (0.01 - 0.02) / (2.0 * h);
        for i in 0..4 {
            assert_abs_diff_eq!(f.get(i, i), -2.0 * a, epsilon = 1e-12);
            if i + 1 < 4 {
                assert_abs_diff_eq!(f.get(i, i + 1), a + b, epsilon = 1e-12);
                assert_abs_diff_eq!(f.get(i + 1, i), a - b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn log_norm_one_dimensional_closed_form() {
        let model = MarketModel::single(0.01, 0.2);
        for n in [4usize, 16, 64] {
            let grid = Grid::new(vec![3.0], vec![6.0], n).unwrap();
            let f = assemble_f(&grid, &model).unwrap();
            let h = grid.h()[0];
            let expect = 0.04 / (2.0 * h * h) * (-2.0 + 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos());
            let mu = log_norm(&f).unwrap();
            assert!(mu.value < 0.0);
            assert_abs_diff_eq!(mu.value, expect, epsilon = 1e-9 * expect.abs());
        }
    }

    #[test]
    fn drift_part_has_zero_log_norm() {
        let model = MarketModel::pair(0.01, 0.2, 0.3, 0.4);
        let grid = Grid::new(vec![3.0, 3.0], vec![6.0, 6.0], 8).unwrap();
        let parts = assemble_f_parts(&grid, &model, AssemblyOptions::default()).unwrap();
        let mu = log_norm(&parts.first).unwrap().value;
        assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lanczos_matches_dense() {
        let model = MarketModel::pair(0.01, 0.2, 0.3, 0.4);
        let grid = Grid::new(vec![3.0, 3.0], vec![6.0, 6.0], 8).unwrap();
        let f = assemble_f(&grid, &model).unwrap();
        let sym = f.add_scaled(&f.transpose(), 1.0).unwrap().scale(0.5);
        let dense = log_norm(&f).unwrap().value;
        let est = lanczos_max(&sym, 64);
        assert_abs_diff_eq!(dense, est, epsilon = 1e-8 * dense.abs());
    }

    #[test]
    fn flipped_stencil_breaks_stability() {
        let model = MarketModel::single(0.01, 0.2);
        let grid = Grid::new(vec![3.0], vec![6.0], 8).unwrap();
        let opts = AssemblyOptions { flip_second_difference: true };
        let f = assemble_f_parts(&grid, &model, opts).unwrap().total();
        assert!(log_norm(&f).unwrap().value > 0.0);
    }
}
