//! Gaussian weights for the expectation readout and an emulation of the
//! bit-by-bit rotation sweep that loads them as amplitudes.
//!
//! Under the risk-neutral measure `x(t) = ln S(t)` is Gaussian with mean
//! `ln S_0 + (r - σ²/2)t` and covariance `σ_iσ_jρ_ij t`. The readout vector
//! is `p_k = φ̃(t, x^(k))·Πh_i`. Its normalized square is, up to
//! discretization, the Gaussian with half the covariance, which is the
//! distribution the rotation sweep prepares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dist::gaussian_interval;
use crate::error::{Error, Result};
use crate::gridding::Grid;
use crate::model::{quad_form, MarketModel};

#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    cov_det: f64,
    /// Horizon the spec was built for.
    pub t: f64,
    /// `det ρ` of the underlying correlation.
    pub rho_det: f64,
    pub sigmas: Vec<f64>,
}

impl GaussianSpec {
    /// Law of `ln S(t)` started from `spot`.
    pub fn at_time(model: &MarketModel, spot: &[f64], t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {t}")));
        }
        let d = model.dim();
        if spot.len() != d {
            return Err(Error::InvalidInput("spot length does not match model".into()));
        }
        let rho_det = model.correlation_factor()?.det();
        let mean = DVector::from_fn(d, |i, _| spot[i].ln() + model.log_drift(i) * t);
        Self::from_moments(mean, model.covariance() * t, t, rho_det, model.sigmas.clone())
    }

    fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>, t: f64, rho_det: f64, sigmas: Vec<f64>) -> Result<Self> {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Validation("covariance not positive-definite".into()))?;
        let cov_det = chol.l().diagonal().iter().map(|v| v * v).product();
        let cov_inv = chol.inverse();
        Ok(Self {
            mean,
            cov,
            cov_inv,
            cov_det,
            t,
            rho_det,
            sigmas,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Same mean, covariance halved.
    pub fn halved(&self) -> Self {
        Self::from_moments(self.mean.clone(), &self.cov * 0.5, self.t, self.rho_det, self.sigmas.clone())
            .expect("halving keeps positive-definiteness")
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let dx = DVector::from_fn(d, |i, _| x[i] - self.mean[i]);
        let q = quad_form(&self.cov_inv, &dx);
        (-0.5 * q).exp() / ((2.0 * PI).powf(d as f64 / 2.0) * self.cov_det.sqrt())
    }
}

/// Multivariate normal density (free-function form).
pub fn density_phi_tilde(spec: &GaussianSpec, x: &[f64]) -> f64 {
    spec.density(x)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilityVector {
    pub p: Vec<f64>,
    /// `P = ‖p‖`
    pub norm: f64,
    /// `Σ p_k²`
    pub p2_exact: f64,
    /// `ΠΔ_i / ((4π)^{d/2} N_gr √det ρ)`
    pub p2_closed_form: f64,
    /// `|exact - closed| / exact`
    pub p2_rel_gap: f64,
    /// `Σ p_k` (captured probability mass)
    pub mass: f64,
}

pub fn build_p_vector(grid: &Grid, spec: &GaussianSpec) -> Result<ProbabilityVector> {
    if grid.dim() != spec.dim() {
        return Err(Error::InvalidInput("grid and Gaussian dimensions differ".into()));
    }
    let vol = grid.cell_volume();
    let mut x = vec![0.0; grid.dim()];
    let p: Vec<f64> = (0..grid.len())
        .map(|off| {
            grid.point(off, &mut x);
            spec.density(&x) * vol
        })
        .collect();
    let p2_exact: f64 = p.iter().map(|v| v * v).sum();
    let mass = p.iter().sum();
    let d = grid.dim();
    let delta_prod: f64 = (0..d)
        .map(|i| (grid.upper_log()[i] - grid.lower_log()[i]) / (spec.sigmas[i] * spec.t.sqrt()))
        .product();
    let p2_closed_form =
        delta_prod / ((4.0 * PI).powf(d as f64 / 2.0) * grid.len() as f64 * spec.rho_det.sqrt());
    if !(p2_exact > 0.0) {
        return Err(Error::Degenerate(
            "readout weights vanish on the grid (distribution far outside the box)".into(),
        ));
    }
    Ok(ProbabilityVector {
        norm: p2_exact.sqrt(),
        p2_rel_gap: (p2_exact - p2_closed_form).abs() / p2_exact,
        p,
        p2_exact,
        p2_closed_form,
        mass,
    })
}

/// Where the sweep's cells sit relative to the grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellConvention {
    /// `[x^(k) - h/2, x^(k) + h/2]`
    #[default]
    Centered,
    /// `[x^(k), x^(k+1)]`
    LeftAligned,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Amplitudes {
    pub values: Vec<f64>,
    /// Rotations whose split masses both underflowed (set to an even split).
    pub underflow_rotations: usize,
    pub rotations: usize,
}

/// Conditional law of axis `i` given axes `< i`: `mean + β·(x_{<i} - μ_{<i})`
/// with variance `var`, after integrating out axes `> i`.
struct Conditional {
    beta: Vec<f64>,
    var: f64,
}

fn conditionals(spec: &GaussianSpec) -> Vec<Conditional> {
    let d = spec.dim();
    (0..d)
        .map(|i| {
            if i == 0 {
                return Conditional { beta: vec![], var: spec.cov[(0, 0)] };
            }
            let s11 = spec.cov.view((0, 0), (i, i)).into_owned();
            let s12 = spec.cov.view((0, i), (i, 1)).into_owned();
            let inv = s11.cholesky().expect("leading minor of a PD matrix").inverse();
            let beta = &inv * &s12;
            let var = spec.cov[(i, i)] - (s12.transpose() * &beta)[(0, 0)];
            Conditional { beta: beta.iter().cloned().collect(), var }
        })
        .collect()
}

/// Emulates the rotation sweep: axis by axis, qubit by qubit, each rotation
/// splits the current cell range in half with weight `f` equal to the
/// conditional mass of the left half over the whole range. Earlier axes are
/// conditioned at their grid coordinates.
pub fn swept_amplitudes(grid: &Grid, spec: &GaussianSpec, cells: CellConvention) -> Result<Amplitudes> {
    if grid.dim() != spec.dim() {
        return Err(Error::InvalidInput("grid and Gaussian dimensions differ".into()));
    }
    let phi = spec.halved();
    let conds = conditionals(&phi);
    let d = grid.dim();
    let n = grid.n_gr();
    let edges: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let h = grid.h()[i];
            (0..=n)
                .map(|k| match cells {
                    CellConvention::Centered => grid.lower_log()[i] + (k as f64 + 0.5) * h,
                    CellConvention::LeftAligned => grid.coord(i, k as isize),
                })
                .collect()
        })
        .collect();
    let mut out = Amplitudes { values: vec![0.0; grid.len()], underflow_rotations: 0, rotations: 0 };
    let mut prefix = vec![0.0; d];
    let mut axis_amp = vec![0.0; n];
    sweep_axis(grid, &phi, &conds, &edges, 0, 0, 1.0, &mut prefix, &mut axis_amp, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sweep_axis(
    grid: &Grid,
    phi: &GaussianSpec,
    conds: &[Conditional],
    edges: &[Vec<f64>],
    axis: usize,
    offset: usize,
    amp: f64,
    prefix: &mut [f64],
    scratch: &mut [f64],
    out: &mut Amplitudes,
) {
    let d = grid.dim();
    let n = grid.n_gr();
    let c = &conds[axis];
    let mean = phi.mean[axis]
        + c.beta.iter().enumerate().map(|(j, b)| b * (prefix[j] - phi.mean[j])).sum::<f64>();
    let sd = c.var.sqrt();
    let e = &edges[axis];
    let mut local = vec![0.0; n];
    split(e, mean, sd, 0, n, 1.0, &mut local, out);
    let stride = grid.stride(axis);
    for (k, a) in local.iter().enumerate() {
        let amp_k = amp * a;
        if axis + 1 == d {
            out.values[offset + k * stride] = amp_k;
        } else {
            prefix[axis] = grid.coord(axis, k as isize);
            sweep_axis(grid, phi, conds, edges, axis + 1, offset + k * stride, amp_k, prefix, scratch, out);
        }
    }
}

fn split(e: &[f64], mean: f64, sd: f64, lo: usize, hi: usize, amp: f64, out: &mut [f64], acc: &mut Amplitudes) {
    if hi - lo == 1 {
        out[lo] = amp;
        return;
    }
    let mid = (lo + hi) / 2;
    let left = gaussian_interval(mean, sd, e[lo], e[mid]);
    let right = gaussian_interval(mean, sd, e[mid], e[hi]);
    acc.rotations += 1;
    let f = if left < 1e-300 && right < 1e-300 {
        acc.underflow_rotations += 1;
        0.5
    } else {
        left / (left + right)
    };
    split(e, mean, sd, lo, mid, amp * f.sqrt(), out, acc);
    split(e, mean, sd, mid, hi, amp * (1.0 - f).sqrt(), out, acc);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateprepComparison {
    pub l2: f64,
    pub linf: f64,
    pub amplitude_norm: f64,
    pub underflow_rotations: usize,
}

/// Deviation between the normalized readout vector `p/P` and the swept
/// amplitudes.
pub fn compare_stateprep(grid: &Grid, spec: &GaussianSpec, cells: CellConvention) -> Result<StateprepComparison> {
    let pv = build_p_vector(grid, spec)?;
    let amps = swept_amplitudes(grid, spec, cells)?;
    let mut l2 = 0.0;
    let mut linf = 0.0f64;
    for (a, p) in amps.values.iter().zip(&pv.p) {
        let dlt = (a - p / pv.norm).abs();
        l2 += dlt * dlt;
        linf = linf.max(dlt);
    }
    Ok(StateprepComparison {
        l2: l2.sqrt(),
        linf,
        amplitude_norm: amps.values.iter().map(|v| v * v).sum::<f64>().sqrt(),
        underflow_rotations: amps.underflow_rotations,
    })
}
