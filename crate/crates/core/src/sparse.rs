//! Compressed-row sparse matrices with the handful of kernels the pipeline
//! needs: products, triangular solves, restarted GMRES and triplet export.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that cancel to exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &trips {
            if r >= nrows {
                return Err(Error::Index { index: r, size: nrows });
            }
            if c >= ncols {
                return Err(Error::Index { index: c, size: ncols });
            }
        }
        trips.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values = Vec::with_capacity(trips.len());
        let mut rows = Vec::with_capacity(trips.len());
        let mut i = 0;
        while i < trips.len() {
            let (r, c, mut v) = trips[i];
            i += 1;
            while i < trips.len() && trips[i].0 == r && trips[i].1 == c {
                v += trips[i].2;
                i += 1;
            }
            if v != 0.0 {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(columns, values)` of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn col_nnz(&self) -> Vec<usize> {
        let mut out = vec![0; self.ncols];
        for &c in &self.col_idx {
            out[c] += 1;
        }
        out
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(j) => vals[j],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let trips = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, trips).expect("indices valid by construction")
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.drop_zeros();
        out
    }

    /// `A + s B`
    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::InvalidInput("matrix shapes differ".into()));
        }
        let mut trips: Vec<_> = self.triplets().collect();
        trips.extend(other.triplets().map(|(r, c, v)| (r, c, s * v)));
        Self::from_triplets(self.nrows, self.ncols, trips)
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let trips: Vec<_> = self.triplets().collect();
        *self = Self::from_triplets(self.nrows, self.ncols, trips).expect("valid");
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.nrows).all(|r| self.row(r).0.last().is_none_or(|&c| c <= r))
    }

    /// Forward substitution; requires a lower-triangular matrix with a
    /// nonzero diagonal.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.nrows != self.ncols || b.len() != self.nrows {
            return Err(Error::InvalidInput("triangular solve needs a square system".into()));
        }
        let mut x = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = b[r];
            let mut diag = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c < r {
                    acc -= v * x[c];
                } else if c == r {
                    diag = v;
                } else {
                    return Err(Error::InvalidInput(format!(
                        "row {r} has an entry above the diagonal"
                    )));
                }
            }
            if diag == 0.0 {
                return Err(Error::Numeric(format!("singular factor: zero pivot in row {r}")));
            }
            x[r] = acc / diag;
        }
        Ok(x)
    }

    /// Direct solve: forward substitution for lower-triangular systems,
    /// dense LU for small general ones.
    pub fn solve_direct(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.is_lower_triangular() {
            return self.solve_lower(b);
        }
        if self.nrows > 4096 {
            return Err(Error::Capacity {
                what: "dense LU rows",
                requested: self.nrows,
                cap: 4096,
            });
        }
        let lu = self.to_dense().lu();
        let rhs = nalgebra::DVector::from_column_slice(b);
        lu.solve(&rhs)
            .map(|x| x.as_slice().to_vec())
            .ok_or_else(|| Error::Numeric("singular factorization".into()))
    }

    /// Writes `row col value` lines (0-based indices).
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iter: 20_000,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES(m) with modified Gram-Schmidt and Givens rotations.
pub fn gmres(a: &CsrMatrix, b: &[f64], opts: GmresOptions) -> Result<GmresOutcome> {
    let n = a.nrows();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, rel_residual: 0.0 });
    }
    let m = opts.restart.max(1);
    let mut iters = 0;
    let mut r = vec![0.0; n];
    loop {
        a.matvec_into(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        if beta / bnorm <= opts.rel_tol {
            return Ok(GmresOutcome { x, iterations: iters, rel_residual: beta / bnorm });
        }
        if iters >= opts.max_iter {
            return Err(Error::Numeric(format!(
                "GMRES did not converge: residual {} after {iters} iterations",
                beta / bnorm
            )));
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = a.matvec(&basis[j]);
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][j] = h;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h * vi);
            }
            let hn = norm(&w);
            hess[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let rho = hess[j][j].hypot(hess[j + 1][j]);
            cs[j] = hess[j][j] / rho;
            sn[j] = hess[j + 1][j] / rho;
            hess[j][j] = rho;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iters += 1;
            if g[j + 1].abs() / bnorm <= opts.rel_tol || hn == 0.0 || iters >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| hess[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[k]).for_each(|(xi, vi)| *xi += yk * vi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 4.0), (1, 0, -1.0), (1, 1, 3.0), (2, 1, 2.0), (2, 2, 5.0), (2, 2, 0.0), (0, 2, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, -1.0), (1, 0, 2.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(sample().nnz(), 5);
    }

    #[test]
    fn lower_solve_and_gmres_agree() {
        let a = sample();
        let b = [1.0, 2.0, 3.0];
        let x1 = a.solve_direct(&b).unwrap();
        let x2 = gmres(&a, &b, GmresOptions::default()).unwrap().x;
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-10);
        }
        let r = a.matvec(&x1);
        for (p, q) in r.iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let a = sample();
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.transpose().get(0, 1), -1.0);
    }

    #[test]
    fn triplet_export_lists_every_entry() {
        let mut buf = Vec::new();
        sample().write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("1 0 -1e0"));
    }
}
