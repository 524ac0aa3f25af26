//! Query-count formulas for the state-preparation stage (`𝒞`) and the
//! full pricer (`𝒟`). Values are the expressions inside `O(·)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gridding::SmoothnessBounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    pub dim: usize,
    pub sigma_max: f64,
    pub tau_ter: f64,
    pub eps: f64,
    pub g: f64,
    pub kappa_v: f64,
    pub vbar: f64,
    pub v0: f64,
    /// `Δ_i`
    pub delta: Vec<f64>,
    pub rho_det: f64,
    /// Log-box widths `u_i - l_i`.
    pub widths: Vec<f64>,
    pub smoothness: SmoothnessBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    /// `√ΠΔ d² Ξ σ²_max τ_ter / ((4π)^{d/4} det ρ^{1/4})`
    pub smooth_branch: f64,
    /// `d η Π(u_i - l_i)`
    pub box_branch: f64,
    /// `max{ΠΔ V̄ / ((2π)^{d/2} √det ρ), V₀}`
    pub value_factor: f64,
    pub c_state: f64,
    pub d_total: f64,
}

pub fn complexity_estimate(inp: &ComplexityInputs) -> Result<Complexity> {
    let d = inp.dim;
    if inp.delta.len() != d || inp.widths.len() != d || d == 0 {
        return Err(Error::InvalidInput("complexity inputs must have one entry per asset".into()));
    }
    let scalars = [inp.sigma_max, inp.tau_ter, inp.eps, inp.g, inp.kappa_v, inp.rho_det];
    if scalars.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(inp.vbar >= 0.0 && inp.v0 >= 0.0) {
        return Err(Error::InvalidInput(format!("complexity inputs must be positive: {inp:?}")));
    }
    let df = d as f64;
    let delta_prod: f64 = inp.delta.iter().product();
    let xi_big = inp.smoothness.xi.max(inp.smoothness.zeta / df);
    let s2t = inp.sigma_max * inp.sigma_max * inp.tau_ter;
    let smooth_branch = delta_prod.sqrt() * df * df * xi_big * s2t
        / ((4.0 * PI).powf(df / 4.0) * inp.rho_det.powf(0.25));
    let box_branch = df * inp.smoothness.eta * inp.widths.iter().product::<f64>();
    let branch = smooth_branch.max(box_branch);
    let tail = inp.kappa_v * df.powi(4) * s2t;
    let value_factor =
        (delta_prod * inp.vbar / ((2.0 * PI).powf(df / 2.0) * inp.rho_det.sqrt())).max(inp.v0);
    Ok(Complexity {
        smooth_branch,
        box_branch,
        value_factor,
        c_state: branch * tail / inp.eps,
        d_total: branch * value_factor * inp.g * tail / (inp.eps * inp.eps),
    })
}
