//! γ selection, readout tolerances and the two-estimate readout.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::berry::BlockSolution;
use crate::error::{Error, Result};
use crate::qae::{self, AmplitudeEstimate, QaeMode};
use crate::stateprep::ProbabilityVector;

/// `γ = Ȳ`, the root mean square of the reference values.
pub fn choose_gamma(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Degenerate("empty reference vector".into()));
    }
    let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    if !(ms > 0.0) {
        return Err(Error::Degenerate(
            "reference solution is identically zero; γ padding needs Ȳ > 0".into(),
        ));
    }
    Ok(ms.sqrt())
}

/// Inputs to the tolerance rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceInputs {
    pub eps: f64,
    pub g: f64,
    pub dim: usize,
    pub rho_det: f64,
    /// `Π Δ_i`
    pub delta_product: f64,
    /// Scale standing in for `V_0`.
    pub v0_scale: f64,
    /// Scale standing in for `V̄(t_ter)`.
    pub vbar_scale: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps_psi: f64,
}

impl Tolerances {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 > 0.0 && eps2 > 0.0 && eps1.is_finite() && eps2.is_finite()) {
            return Err(Error::InvalidInput(format!("readout tolerances must be positive, got {eps1}, {eps2}")));
        }
        Ok(Self { eps1, eps2, eps_psi: eps1.max(eps2) })
    }
}

/// `ε₁ = c₁(2π)^{d/2}√det ρ·ε/(g ΠΔ V̄)`, `ε₂ = c₂ε/(g V₀)`, `ε_Ψ = max`.
pub fn tolerance_plan(inp: &ToleranceInputs) -> Result<Tolerances> {
    let all = [inp.eps, inp.g, inp.rho_det, inp.delta_product, inp.v0_scale, inp.vbar_scale, inp.c1, inp.c2];
    if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("tolerance plan needs positive finite inputs, got {inp:?}")));
    }
    let eps1 = inp.c1 * (2.0 * PI).powf(inp.dim as f64 / 2.0) * inp.rho_det.sqrt() * inp.eps
        / (inp.g * inp.delta_product * inp.vbar_scale);
    let eps2 = inp.c2 * inp.eps / (inp.g * inp.v0_scale);
    Tolerances::new(eps1, eps2)
}

/// Estimator behaviour for the two amplitude estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModes {
    pub e1: QaeMode,
    pub e2: QaeMode,
}

impl ReadoutModes {
    /// The same mode for both estimates; sampled runs use `seed` and `seed + 1`.
    pub fn uniform(mode: QaeMode) -> Self {
        match mode {
            QaeMode::Sampled { seed } => Self {
                e1: QaeMode::Sampled { seed },
                e2: QaeMode::Sampled { seed: seed.wrapping_add(1) },
            },
            m => Self { e1: m, e2: m },
        }
    }

    /// Biases that push `ω` furthest from the truth: `E₁` up, `E₂` down for
    /// positive `p·Ỹ`.
    pub fn adverse(positive: bool) -> Self {
        if positive {
            Self { e1: QaeMode::BiasPlus, e2: QaeMode::BiasMinus }
        } else {
            Self { e1: QaeMode::BiasMinus, e2: QaeMode::BiasMinus }
        }
    }
}

/// Everything the readout produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub omega: f64,
    /// `e^{-rT} p·x_m` from the solved block system.
    pub v0_berry: f64,
    pub e1_truth: f64,
    pub e2_truth: f64,
    pub e1: AmplitudeEstimate,
    pub e2: AmplitudeEstimate,
    pub z: f64,
    /// `P = ‖p‖`
    pub p_norm: f64,
    pub p_dot_x: f64,
    pub gamma: f64,
    /// Right-hand side of the readout error bound with the measured `P, Z, p, γ`.
    pub error_bound: f64,
    pub queries: u64,
}

/// Evaluates the two amplitudes exactly, perturbs them through the
/// estimation contract and forms `ω = e^{-rT} γ √N P E₁ / E₂`.
pub fn price_readout(
    sol: &BlockSolution,
    pvec: &ProbabilityVector,
    r: f64,
    maturity: f64,
    tol: &Tolerances,
    modes: ReadoutModes,
) -> Result<Readout> {
    let gamma = sol
        .gamma
        .filter(|g| *g > 0.0)
        .ok_or_else(|| Error::Precondition("readout needs the γ-padded system".into()))?;
    if pvec.p.len() != sol.n {
        return Err(Error::InvalidInput("probability vector and solution sizes differ".into()));
    }
    let n = sol.n as f64;
    let p1 = (sol.params.p + 1) as f64;
    let z = sol.z_squared().sqrt();
    let p_norm = pvec.norm;
    let p_dot_x: f64 = pvec.p.iter().zip(&sol.x_m).map(|(a, b)| a * b).sum();
    let e1_truth = p1.sqrt() * p_dot_x / (p_norm * z);
    let e2_truth = gamma * (p1 * n).sqrt() / z;
    let e1 = qae::estimate(e1_truth, tol.eps1, modes.e1)?;
    let e2 = qae::estimate(e2_truth, tol.eps2, modes.e2)?;
    if e2.value < 10.0 * tol.eps2 {
        return Err(Error::Numeric(format!(
            "ill-conditioned readout: E2 = {} below 10·ε₂ = {}",
            e2.value,
            10.0 * tol.eps2
        )));
    }
    let disc = (-r * maturity).exp();
    let omega = disc * gamma * n.sqrt() * p_norm * e1.value / e2.value;
    let error_bound = disc * p_norm * z / p1.sqrt() * (tol.eps_psi + tol.eps1)
        + disc * p_dot_x.abs() * z / (gamma * (p1 * n).sqrt()) * (tol.eps_psi + tol.eps2);
    Ok(Readout {
        omega,
        v0_berry: disc * p_dot_x,
        e1_truth,
        e2_truth,
        queries: e1.queries + e2.queries,
        e1,
        e2,
        z,
        p_norm,
        p_dot_x,
        gamma,
        error_bound,
    })
}
