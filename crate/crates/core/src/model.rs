//! Market model, contract description and precondition checks.
//!
//! The market is a correlated multi-asset Black-Scholes model with constant
//! rate and volatilities. Prices are transformed to log coordinates
//! `x_i = ln S_i` and discounted values `Y = e^{rτ} V` downstream; this module
//! only owns the raw inputs and their validation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    /// Continuously compounded risk-free rate (1/year).
    pub r: f64,
    /// Volatilities σ_1..σ_d (1/√year).
    pub sigmas: Vec<f64>,
    /// d×d correlation matrix.
    pub rho: Vec<Vec<f64>>,
}

/// Cholesky factor of the correlation matrix, shared by every consumer that
/// needs `det ρ`, `ρ⁻¹` or correlated normal draws.
#[derive(Debug, Clone)]
pub struct CorrelationFactor {
    lower: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

impl CorrelationFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    /// Lower-triangular `L` with `ρ = L Lᵀ`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Writes `L z` into `out`; turns iid standard normals into correlated ones.
    pub fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.lower[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }
}

impl MarketModel {
    pub fn new(r: f64, sigmas: Vec<f64>, rho: Vec<Vec<f64>>) -> Self {
        Self { r, sigmas, rho }
    }

    /// Single-asset model (ρ = [[1]]).
    pub fn single(r: f64, sigma: f64) -> Self {
        Self::new(r, vec![sigma], vec![vec![1.0]])
    }

    /// Two assets with correlation `rho12`.
    pub fn pair(r: f64, s1: f64, s2: f64, rho12: f64) -> Self {
        Self::new(r, vec![s1, s2], vec![vec![1.0, rho12], vec![rho12, 1.0]])
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Log-price drift `r - σ_i²/2`.
    pub fn log_drift(&self, i: usize) -> f64 {
        self.r - 0.5 * self.sigmas[i] * self.sigmas[i]
    }

    pub fn rho_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if self.rho.len() != d || self.rho.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidInput(format!(
                "correlation matrix must be {d}x{d}"
            )));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| self.rho[i][j]))
    }

    /// Factorizes ρ. Fails when ρ is not symmetric positive-definite.
    pub fn correlation_factor(&self) -> Result<CorrelationFactor> {
        let rho = self.rho_matrix()?;
        let d = self.dim();
        for i in 0..d {
            for j in 0..i {
                if (rho[(i, j)] - rho[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Validation(
                        "correlation matrix is not symmetric".into(),
                    ));
                }
            }
        }
        let chol = rho.clone().cholesky().ok_or_else(|| {
            Error::Validation("correlation not positive-definite".into())
        })?;
        let lower = chol.l();
        let det = lower.diagonal().iter().map(|v| v * v).product::<f64>();
        let inverse = chol.inverse();
        Ok(CorrelationFactor {
            lower,
            inverse,
            det,
        })
    }

    /// Covariance `σ_i σ_j ρ_ij` per unit time.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.sigmas[i] * self.sigmas[j] * self.rho[i][j])
    }
}

/// Terminal payoff. Linear-type kinds act on the basket level `Σ w_i S_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffSpec {
    /// `max(Σ w_i S_i - K, 0)`
    Call { weights: Vec<f64>, strike: f64 },
    /// `max(K - Σ w_i S_i, 0)`
    Put { weights: Vec<f64>, strike: f64 },
    /// `cash` if `Σ w_i S_i > K`, else 0.
    CashOrNothing {
        weights: Vec<f64>,
        strike: f64,
        cash: f64,
    },
    /// `min(max(Σ w_i S_i - K, 0), cap)`
    CappedCall {
        weights: Vec<f64>,
        strike: f64,
        cap: f64,
    },
    /// Piecewise-linear table in the basket level.
    Table {
        weights: Vec<f64>,
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    /// Identically zero (useful for tests and padding checks).
    Zero,
}

impl PayoffSpec {
    pub fn call(weights: Vec<f64>, strike: f64) -> Self {
        PayoffSpec::Call { weights, strike }
    }

    pub fn put(weights: Vec<f64>, strike: f64) -> Self {
        PayoffSpec::Put { weights, strike }
    }

    fn weights(&self) -> Option<&[f64]> {
        match self {
            PayoffSpec::Call { weights, .. }
            | PayoffSpec::Put { weights, .. }
            | PayoffSpec::CashOrNothing { weights, .. }
            | PayoffSpec::CappedCall { weights, .. }
            | PayoffSpec::Table { weights, .. } => Some(weights),
            PayoffSpec::Zero => None,
        }
    }

    fn basket(&self, s: &[f64]) -> f64 {
        self.weights()
            .map(|w| w.iter().zip(s).map(|(w, s)| w * s).sum())
            .unwrap_or(0.0)
    }

    /// Evaluates the payoff at price vector `s`.
    pub fn eval(&self, s: &[f64]) -> Result<f64> {
        if let Some(w) = self.weights() {
            if w.len() != s.len() {
                return Err(Error::InvalidInput(format!(
                    "payoff has {} weights but price vector has {} entries",
                    w.len(),
                    s.len()
                )));
            }
        }
        let b = self.basket(s);
        Ok(match self {
            PayoffSpec::Call { strike, .. } => (b - strike).max(0.0),
            PayoffSpec::Put { strike, .. } => (strike - b).max(0.0),
            PayoffSpec::CashOrNothing { strike, cash, .. } => {
                if b > *strike {
                    *cash
                } else {
                    0.0
                }
            }
            PayoffSpec::CappedCall { strike, cap, .. } => (b - strike).max(0.0).min(*cap),
            PayoffSpec::Table { knots, values, .. } => interpolate(knots, values, b)?,
            PayoffSpec::Zero => 0.0,
        })
    }

    /// `(a_0, a_1..a_d)` such that the in-the-money branch is `a_0 + Σ a_i S_i`.
    pub fn linear_coefficients(&self) -> Option<(f64, Vec<f64>)> {
        match self {
            PayoffSpec::Call { weights, strike } => Some((-strike, weights.clone())),
            PayoffSpec::Put { weights, strike } => {
                Some((*strike, weights.iter().map(|w| -w).collect()))
            }
            _ => None,
        }
    }
}

/// Evaluates the payoff (free-function form).
pub fn payoff_eval(payoff: &PayoffSpec, s: &[f64]) -> Result<f64> {
    if s.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput(
            "price vector must be componentwise positive".into(),
        ));
    }
    payoff.eval(s)
}

fn interpolate(knots: &[f64], values: &[f64], x: f64) -> Result<f64> {
    if knots.len() < 2 || knots.len() != values.len() {
        return Err(Error::InvalidInput(
            "payoff table needs at least two knots and one value per knot".into(),
        ));
    }
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if !(lo..=hi).contains(&x) {
        return Err(Error::Domain { value: x, lo, hi });
    }
    let j = knots.partition_point(|&k| k <= x).clamp(1, knots.len() - 1);
    let (x0, x1) = (knots[j - 1], knots[j]);
    let w = (x - x0) / (x1 - x0);
    Ok(values[j - 1] * (1.0 - w) + values[j] * w)
}

/// Boundary condition on one face of the box, expressed in the discounted
/// value `Y = e^{rτ} V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Knock-out barrier: `Y = 0`.
    KnockOut,
    /// Far in-the-money face: `V = e^{-r(T-t)}(a_0 + Σ_j a_j S_j)` with the
    /// face coordinate pinned to the barrier. Coefficients default to the
    /// payoff's linear branch.
    DiscountedLinear {
        #[serde(default)]
        offset: Option<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// `Y = value` (e.g. a capped or digital payoff deep in the money).
    Constant { value: f64 },
}

impl BoundaryKind {
    pub fn discounted_linear() -> Self {
        BoundaryKind::DiscountedLinear {
            offset: None,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacePair {
    pub lower: BoundaryKind,
    pub upper: BoundaryKind,
}

impl FacePair {
    pub fn knock_out() -> Self {
        Self {
            lower: BoundaryKind::KnockOut,
            upper: BoundaryKind::KnockOut,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpec {
    /// Maturity T (years).
    pub maturity: f64,
    /// Lower box edges L_i.
    pub lower: Vec<f64>,
    /// Upper box edges U_i.
    pub upper: Vec<f64>,
    /// Spot S_{i,0}.
    pub spot: Vec<f64>,
    pub payoff: PayoffSpec,
    /// One pair of faces per asset.
    pub boundaries: Vec<FacePair>,
    /// Linear payoff bound coefficients `A_0, A_1..A_d`.
    pub payoff_bound: Vec<f64>,
    /// Accept discounted-linear faces, whose true far-in-the-money value is
    /// only approximately constant in `Y`.
    #[serde(default)]
    pub allow_discounted_linear: bool,
}

impl ProductSpec {
    pub fn dim(&self) -> usize {
        self.spot.len()
    }

    /// `(A_0, [A_1..A_d])`
    pub fn bound_coefficients(&self) -> (f64, &[f64]) {
        (self.payoff_bound[0], &self.payoff_bound[1..])
    }

    /// Resolves the `Y` value of a face at the given price vector (the
    /// face coordinate of `s` is overwritten with the barrier level).
    pub fn face_value(&self, axis: usize, upper: bool, s: &[f64]) -> Result<f64> {
        let pair = &self.boundaries[axis];
        let face = if upper { &pair.upper } else { &pair.lower };
        let level = if upper {
            self.upper[axis]
        } else {
            self.lower[axis]
        };
        match face {
            BoundaryKind::KnockOut => Ok(0.0),
            BoundaryKind::Constant { value } => Ok(*value),
            BoundaryKind::DiscountedLinear { offset, weights } => {
                if !self.allow_discounted_linear {
                    return Err(Error::Assumption(format!(
                        "discounted-linear face on axis {} is time-dependent in general; \
                         set allow_discounted_linear to accept the constant-Y approximation",
                        axis + 1
                    )));
                }
                let (a0, a) = match (offset, weights) {
                    (Some(a0), Some(w)) => (*a0, w.clone()),
                    _ => {
                        let (d0, dw) = self.payoff.linear_coefficients().ok_or_else(|| {
                            Error::InvalidInput(
                                "discounted-linear face needs explicit coefficients for this payoff"
                                    .into(),
                            )
                        })?;
                        (offset.unwrap_or(d0), weights.clone().unwrap_or(dw))
                    }
                };
                if a.len() != s.len() {
                    return Err(Error::InvalidInput(
                        "discounted-linear weights have wrong length".into(),
                    ));
                }
                let mut v = a0;
                for (j, (&aj, &sj)) in a.iter().zip(s).enumerate() {
                    v += aj * if j == axis { level } else { sj };
                }
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::Validation(self.violations.join("; ")))
        }
    }
}

/// Lists every violated precondition of the pricing problem.
pub fn validate_model(model: &MarketModel, product: &ProductSpec) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let d = model.dim();
    let v = &mut rep.violations;

    if d == 0 {
        v.push("model has no assets".into());
        return rep;
    }
    if product.dim() != d
        || product.lower.len() != d
        || product.upper.len() != d
        || product.boundaries.len() != d
    {
        v.push(format!("product dimensions do not match model dimension {d}"));
        return rep;
    }
    if !(model.r > 0.0) {
        v.push("r > 0 fails".into());
    }
    for (i, &s) in model.sigmas.iter().enumerate() {
        if !(s > 0.0) {
            v.push(format!("sigma_{} > 0 fails", i + 1));
        } else if !(model.r < 0.5 * s * s) {
            v.push(format!("r < σ²/2 fails for asset {}", i + 1));
        }
    }
    match model.rho_matrix() {
        Err(e) => v.push(e.to_string()),
        Ok(rho) => {
            for i in 0..d {
                if (rho[(i, i)] - 1.0).abs() > 1e-12 {
                    v.push(format!("correlation diagonal entry {} is not 1", i + 1));
                }
            }
            if let Err(e) = model.correlation_factor() {
                v.push(match e {
                    Error::Validation(m) => m,
                    other => other.to_string(),
                });
            }
        }
    }
    if !(product.maturity > 0.0) {
        v.push("maturity T > 0 fails".into());
    }
    for i in 0..d {
        let (l, s, u) = (product.lower[i], product.spot[i], product.upper[i]);
        if !(0.0 < l && l < s && s < u) {
            v.push(format!("0 < L < S0 < U fails for asset {}", i + 1));
        }
    }
    if product.payoff_bound.len() != d + 1 {
        v.push(format!(
            "payoff bound needs {} coefficients (A_0..A_d)",
            d + 1
        ));
    } else if product.payoff_bound.iter().any(|a| *a < 0.0) {
        v.push("payoff bound coefficients must be nonnegative".into());
    } else if v.is_empty() {
        if let Some(msg) = sample_payoff_bound(product) {
            v.push(msg);
        }
    }
    for (i, pair) in product.boundaries.iter().enumerate() {
        for (face, kind) in [("lower", &pair.lower), ("upper", &pair.upper)] {
            if matches!(kind, BoundaryKind::DiscountedLinear { .. }) {
                let msg = format!(
                    "{face} face of asset {} is discounted-linear: exact far-ITM values are \
                     time-dependent, the solver freezes them at their Y-frame constant",
                    i + 1
                );
                if product.allow_discounted_linear {
                    rep.warnings.push(msg);
                } else {
                    rep.violations.push(format!(
                        "{msg} (not allowed; set allow_discounted_linear)"
                    ));
                }
            }
        }
    }
    rep
}

fn sample_payoff_bound(product: &ProductSpec) -> Option<String> {
    let d = product.dim();
    let per_axis = match d {
        1 => 65,
        2 => 17,
        3 => 7,
        _ => 3,
    };
    let (a0, a) = product.bound_coefficients();
    let total = (per_axis as usize).pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut s = vec![0.0; d];
    for _ in 0..total {
        for i in 0..d {
            let w = idx[i] as f64 / (per_axis - 1) as f64;
            s[i] = product.lower[i] + w * (product.upper[i] - product.lower[i]);
        }
        let bound = a0 + a.iter().zip(&s).map(|(a, s)| a * s).sum::<f64>();
        match product.payoff.eval(&s) {
            Ok(f) if f > bound + 1e-9 * bound.abs().max(1.0) => {
                return Some(format!(
                    "payoff bound A_0 + Σ A_i S_i fails at S = {s:?} ({f} > {bound})"
                ));
            }
            Err(e) => return Some(format!("payoff not evaluable on the box: {e}")),
            _ => {}
        }
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < per_axis {
                break;
            }
            idx[i] = 0;
        }
    }
    None
}

/// Quadratic form `(x)ᵀ A⁻¹ (x)` helper shared with the density code.
pub(crate) fn quad_form(inv: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * inv * x)[(0, 0)]
}
