//! Log-price grid and the parameter-selection rules for the terminal time
//! `t_ter` and the spacing bounds `h̃_i`.
//!
//! The grid is interior: with `n` points per axis the spacing is
//! `h_i = (u_i - l_i)/(n + 1)` and the boundary values live at `l_i` and
//! `u_i`, one step outside the first and last grid points.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{MarketModel, ProductSpec};

/// Default cap on stored system rows `N_gr·(q+1)`.
pub const DEFAULT_ROW_CAP: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    n_gr: usize,
    m_gr: u32,
    lower_log: Vec<f64>,
    upper_log: Vec<f64>,
    h: Vec<f64>,
    len: usize,
}

impl Grid {
    /// Builds a grid on the log box `[l_i, u_i]` with `n_gr` interior points
    /// per axis. `n_gr` must be a power of two, at least 2.
    pub fn new(lower_log: Vec<f64>, upper_log: Vec<f64>, n_gr: usize) -> Result<Self> {
        let d = lower_log.len();
        if d == 0 || upper_log.len() != d {
            return Err(Error::InvalidInput("grid bounds must have equal nonzero length".into()));
        }
        if n_gr < 2 || !n_gr.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "n_gr must be a power of two ≥ 2, got {n_gr}"
            )));
        }
        if lower_log.iter().zip(&upper_log).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidInput("grid needs l_i < u_i on every axis".into()));
        }
        let len = checked_pow(n_gr, d).ok_or(Error::Capacity {
            what: "grid points",
            requested: usize::MAX,
            cap: usize::MAX,
        })?;
        let h = lower_log
            .iter()
            .zip(&upper_log)
            .map(|(l, u)| (u - l) / (n_gr as f64 + 1.0))
            .collect();
        Ok(Self {
            d,
            n_gr,
            m_gr: n_gr.trailing_zeros(),
            lower_log,
            upper_log,
            h,
            len,
        })
    }

    /// Grid on the product's box `[ln L_i, ln U_i]`.
    pub fn for_product(product: &ProductSpec, n_gr: usize) -> Result<Self> {
        Self::new(
            product.lower.iter().map(|v| v.ln()).collect(),
            product.upper.iter().map(|v| v.ln()).collect(),
            n_gr,
        )
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn n_gr(&self) -> usize {
        self.n_gr
    }
    pub fn m_gr(&self) -> u32 {
        self.m_gr
    }
    /// `N_gr = n_gr^d`
    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn h(&self) -> &[f64] {
        &self.h
    }
    pub fn lower_log(&self) -> &[f64] {
        &self.lower_log
    }
    pub fn upper_log(&self) -> &[f64] {
        &self.upper_log
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// `x_i^(k) = l_i + (k+1) h_i`; `k = -1` and `k = n_gr` give the box edges.
    pub fn coord(&self, axis: usize, k: isize) -> f64 {
        if k < 0 {
            self.lower_log[axis]
        } else if k as usize >= self.n_gr {
            self.upper_log[axis]
        } else {
            self.lower_log[axis] + (k as f64 + 1.0) * self.h[axis]
        }
    }

    /// All grid coordinates along one axis.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n_gr).map(|k| self.coord(axis, k as isize)).collect()
    }

    /// Stride of axis `i` in the flat 0-based offset (axis 0 is most significant).
    pub fn stride(&self, axis: usize) -> usize {
        self.n_gr.pow((self.d - 1 - axis) as u32)
    }

    /// 0-based storage offset of a multi-index.
    pub fn offset(&self, ks: &[usize]) -> Result<usize> {
        if ks.len() != self.d {
            return Err(Error::InvalidInput(format!(
                "multi-index has {} entries, grid has dimension {}",
                ks.len(),
                self.d
            )));
        }
        let mut off = 0;
        for &k in ks {
            if k >= self.n_gr {
                return Err(Error::Index {
                    index: k,
                    size: self.n_gr,
                });
            }
            off = off * self.n_gr + k;
        }
        Ok(off)
    }

    /// 1-based flat index `k = Σ n^{d-i} k_i + 1`.
    pub fn flat_index(&self, ks: &[usize]) -> Result<usize> {
        Ok(self.offset(ks)? + 1)
    }

    /// Inverse of [`Grid::flat_index`].
    pub fn multi_index(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.len {
            return Err(Error::Index {
                index: k,
                size: self.len,
            });
        }
        let mut out = vec![0; self.d];
        self.decompose(k - 1, &mut out);
        Ok(out)
    }

    /// Writes the multi-index of 0-based offset `off` into `out`.
    pub fn decompose(&self, mut off: usize, out: &mut [usize]) {
        for i in (0..self.d).rev() {
            out[i] = off % self.n_gr;
            off /= self.n_gr;
        }
    }

    /// Log coordinates of the point at 0-based offset `off`.
    pub fn point(&self, off: usize, out: &mut [f64]) {
        let mut ks = vec![0; self.d];
        self.decompose(off, &mut ks);
        for i in 0..self.d {
            out[i] = self.coord(i, ks[i] as isize);
        }
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Bounds on derivatives of the discounted value: third (`zeta`), fourth
/// (`xi`) and second derivatives of the density-weighted value (`eta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessBounds {
    pub zeta: f64,
    pub xi: f64,
    pub eta: f64,
}

impl SmoothnessBounds {
    pub fn validate(&self) -> Result<()> {
        if self.zeta > 0.0 && self.xi > 0.0 && self.eta > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput("smoothness bounds must all be positive".into()))
        }
    }
}

impl Default for SmoothnessBounds {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            xi: 1.0,
            eta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalTime {
    pub t_ter: f64,
    /// `T - t_ter`
    pub tau_ter: f64,
    /// `Δ_i = (u_i - l_i)/(σ_i √t_ter)`
    pub delta: Vec<f64>,
}

impl TerminalTime {
    /// Wraps an explicitly chosen `t_ter` (override path).
    pub fn from_t_ter(model: &MarketModel, product: &ProductSpec, t_ter: f64) -> Result<Self> {
        if !(t_ter > 0.0 && t_ter < product.maturity) {
            return Err(Error::Precondition(format!(
                "t_ter = {t_ter} must lie in (0, T = {})",
                product.maturity
            )));
        }
        let delta = (0..model.dim())
            .map(|i| {
                (product.upper[i] / product.lower[i]).ln() / (model.sigmas[i] * t_ter.sqrt())
            })
            .collect();
        Ok(Self {
            t_ter,
            tau_ter: product.maturity - t_ter,
            delta,
        })
    }

    pub fn delta_product(&self) -> f64 {
        self.delta.iter().product()
    }
}

/// `Ã = max{A_i √(U_i S_i0), A_0}`
pub fn a_tilde(product: &ProductSpec) -> f64 {
    let (a0, a) = product.bound_coefficients();
    (0..product.dim())
        .map(|i| a[i] * (product.upper[i] * product.spot[i]).sqrt())
        .fold(a0, f64::max)
}

/// Checks both tolerance preconditions of the terminal-time rule.
pub fn check_eps_conditions(model: &MarketModel, product: &ProductSpec, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    let d = model.dim() as f64;
    let (a0, a) = product.bound_coefficients();
    let lhs = (a_tilde(product) * d * (d + 1.0) / eps).ln();
    for i in 0..model.dim() {
        let s2 = model.sigmas[i] * model.sigmas[i];
        let c = 0.4 * (1.0 - 2.0 * model.r / s2);
        let up = c * (product.upper[i] / product.spot[i]).ln();
        let lo = c * (product.spot[i] / product.lower[i]).ln();
        if !(lhs > up.max(lo)) {
            return Err(Error::Precondition(format!(
                "eps condition 1 fails on asset {}: ln(Ã d(d+1)/ε) = {lhs} ≤ {}",
                i + 1,
                up.max(lo)
            )));
        }
    }
    let scale = (0..model.dim())
        .map(|i| a[i] * product.spot[i])
        .fold(a0, f64::max);
    if !(eps < 2.0 * d * (d + 1.0) * scale) {
        return Err(Error::Precondition(format!(
            "eps condition 2 fails: ε = {eps} ≥ 2d(d+1)·max(A_0, A_i S_i0) = {}",
            2.0 * d * (d + 1.0) * scale
        )));
    }
    Ok(())
}

/// Terminal time: the largest `t` such that barrier touches and boundary
/// tails before `t` contribute at most `O(ε)`.
pub fn compute_t_ter(model: &MarketModel, product: &ProductSpec, eps: f64) -> Result<TerminalTime> {
    check_eps_conditions(model, product, eps)?;
    let d = model.dim() as f64;
    let log_term = (2.0 * a_tilde(product) * d * (d + 1.0) / eps).ln();
    let mut t = f64::INFINITY;
    for i in 0..model.dim() {
        let s2 = model.sigmas[i] * model.sigmas[i];
        for ratio in [product.upper[i] / product.spot[i], product.spot[i] / product.lower[i]] {
            t = t.min(2.0 * ratio.ln().powi(2) / (25.0 * s2 * log_term));
        }
    }
    if !(t < product.maturity) {
        return Err(Error::Precondition(format!(
            "terminal time {t} is not below maturity {}: box too wide for this maturity",
            product.maturity
        )));
    }
    TerminalTime::from_t_ter(model, product, t)
}

/// The three spacing candidates on one axis and their minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpacing {
    pub fourth_derivative_term: f64,
    pub third_derivative_term: f64,
    pub quadrature_term: f64,
    pub h_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingChoice {
    pub axes: Vec<AxisSpacing>,
    pub n_gr: usize,
    pub grid: Grid,
}

/// Spacing bounds `h̃_i` and the smallest shared power-of-two `n_gr` that
/// satisfies them. `max_points` caps `N_gr`.
pub fn compute_h_bounds(
    model: &MarketModel,
    product: &ProductSpec,
    smoothness: &SmoothnessBounds,
    tt: &TerminalTime,
    eps: f64,
    max_points: usize,
) -> Result<SpacingChoice> {
    smoothness.validate()?;
    let d = model.dim();
    let df = d as f64;
    let det = model.correlation_factor()?.det();
    let t = product.maturity;
    let pre = (4.0 * PI).powf(df / 8.0) * det.powf(0.125) / tt.delta_product().powf(0.25);
    let widths: f64 = (0..d)
        .map(|i| (product.upper[i] / product.lower[i]).ln())
        .product();
    let quad = (24.0 * eps / (df * smoothness.eta)).sqrt() / widths.sqrt();
    let axes: Vec<AxisSpacing> = (0..d)
        .map(|i| {
            let s = model.sigmas[i];
            let a = pre / (df * s) * (eps / (2.0 * smoothness.xi * t)).sqrt();
            let b = pre / s * (eps / (smoothness.zeta * df * t)).sqrt();
            AxisSpacing {
                fourth_derivative_term: a,
                third_derivative_term: b,
                quadrature_term: quad,
                h_tilde: a.min(b).min(quad),
            }
        })
        .collect();
    let h_tilde: Vec<f64> = axes.iter().map(|a| a.h_tilde).collect();
    let n_gr = smallest_power_of_two(product, &h_tilde, d, max_points)?;
    let grid = Grid::for_product(product, n_gr)?;
    Ok(SpacingChoice { axes, n_gr, grid })
}

/// Spacing bound from the FDM truncation analysis alone:
/// `min{(1/dσ_i)√(3ε/2ξT), (1/σ_i)√(3ε/ζdT)}`.
pub fn spacing_bounds(model: &MarketModel, smoothness: &SmoothnessBounds, maturity: f64, eps: f64) -> Vec<f64> {
    let d = model.dim() as f64;
    model
        .sigmas
        .iter()
        .map(|&s| {
            let a = (3.0 * eps / (2.0 * smoothness.xi * maturity)).sqrt() / (d * s);
            let b = (3.0 * eps / (smoothness.zeta * d * maturity)).sqrt() / s;
            a.min(b)
        })
        .collect()
}

/// Smallest power of two `n` with `(u_i - l_i)/(n+1) < h_i` on every axis.
pub fn smallest_power_of_two(
    product: &ProductSpec,
    h_bound: &[f64],
    d: usize,
    max_points: usize,
) -> Result<usize> {
    let mut need = 2.0f64;
    for i in 0..d {
        let w = (product.upper[i] / product.lower[i]).ln();
        // (n+1) > w/h  ⇔  n ≥ ⌊w/h⌋
        need = need.max((w / h_bound[i]).floor());
    }
    if !need.is_finite() || need > (1u64 << 40) as f64 {
        return Err(Error::Capacity {
            what: "grid points per axis",
            requested: usize::MAX,
            cap: max_points,
        });
    }
    let n = (need as usize).next_power_of_two().max(2);
    let total = checked_pow(n, d).unwrap_or(usize::MAX);
    if total > max_points {
        return Err(Error::Capacity {
            what: "grid points",
            requested: total,
            cap: max_points,
        });
    }
    Ok(n)
}

/// Estimates smoothness bounds from sampled solution snapshots on a coarse
/// grid by finite differences. `snapshots` holds `(τ, Ỹ(τ))` pairs; `density`
/// evaluates `φ̃(t, x)` at log coordinates. A safety factor multiplies every
/// estimate.
pub fn probe_smoothness(
    grid: &Grid,
    snapshots: &[(f64, Vec<f64>)],
    maturity: f64,
    density: impl Fn(f64, &[f64]) -> f64,
    safety: f64,
) -> Result<SmoothnessBounds> {
    let d = grid.dim();
    let n = grid.n_gr();
    if n < 5 {
        return Err(Error::InvalidInput("smoothness probe needs n_gr ≥ 8".into()));
    }
    let mut zeta = 0.0f64;
    let mut xi = 0.0f64;
    let mut eta = 0.0f64;
    let mut ks = vec![0usize; d];
    let mut x = vec![0.0; d];
    for (tau, y) in snapshots {
        if y.len() != grid.len() {
            return Err(Error::InvalidInput("snapshot length does not match grid".into()));
        }
        let t = maturity - tau;
        let weighted: Vec<f64> = if t > 0.0 {
            (0..grid.len())
                .map(|off| {
                    grid.point(off, &mut x);
                    density(t, &x) * y[off]
                })
                .collect()
        } else {
            Vec::new()
        };
        for off in 0..grid.len() {
            grid.decompose(off, &mut ks);
            for i in 0..d {
                let h = grid.h()[i];
                let st = grid.stride(i);
                let k = ks[i];
                if k >= 2 && k + 2 < n {
                    let v = |o: isize| y[(off as isize + o * st as isize) as usize];
                    let d3 = (v(2) - 2.0 * v(1) + 2.0 * v(-1) - v(-2)) / (2.0 * h.powi(3));
                    let d4 = (v(2) - 4.0 * v(1) + 6.0 * v(0) - 4.0 * v(-1) + v(-2)) / h.powi(4);
                    zeta = zeta.max(d3.abs());
                    xi = xi.max(d4.abs());
                }
                if !weighted.is_empty() && k >= 1 && k + 1 < n {
                    let w = |o: isize| weighted[(off as isize + o * st as isize) as usize];
                    eta = eta.max(((w(1) - 2.0 * w(0) + w(-1)) / (h * h)).abs());
                }
            }
        }
    }
    let floor = f64::MIN_POSITIVE.sqrt();
    Ok(SmoothnessBounds {
        zeta: (zeta * safety).max(floor),
        xi: (xi * safety).max(floor),
        eta: (eta * safety).max(floor),
    })
}
