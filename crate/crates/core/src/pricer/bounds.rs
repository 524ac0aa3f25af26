//! Barrier-touch and tail-mass bounds that justify reading the price out at
//! `t_ter` from a Gaussian over a finite box.
//!
//! All levels enter through `lr = |ln(H/S₀)|`.

use serde::{Deserialize, Serialize};

use crate::dist::norm_sf;
use crate::error::{Error, Result};
use crate::gridding::a_tilde;
use crate::model::{MarketModel, ProductSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Lower,
    Upper,
}

/// Touch probability bound `exp(-lr²/(σ²t))` for a bridge ending below the
/// geometric midpoint `√(S₀H)`.
pub fn hit_bound(lr: f64, sigma: f64, t: f64) -> f64 {
    (-(lr * lr) / (sigma * sigma * t)).exp()
}

/// Horizon at which [`hit_bound`] equals `eps`.
pub fn hit_horizon(lr: f64, sigma: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("hit horizon needs 0 < ε < 1, got {eps}")));
    }
    Ok(lr * lr / (sigma * sigma * (1.0 / eps).ln()))
}

/// `8 lr² / (25 σ² ln(1/(2ε)))`
pub fn cut_horizon(lr: f64, sigma: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Precondition(format!("tail horizon needs 0 < ε < 1/2, got {eps}")));
    }
    Ok(8.0 * lr * lr / (25.0 * sigma * sigma * (1.0 / (2.0 * eps)).ln()))
}

/// `ln(1/(2ε)) > (4/5)(1 ± 2r/σ²) lr`, `+` for the upper face.
pub fn cut_condition(face: Face, r: f64, sigma: f64, lr: f64, eps: f64) -> (f64, f64) {
    let sign = match face {
        Face::Upper => 1.0,
        Face::Lower => -1.0,
    };
    let lhs = (1.0 / (2.0 * eps)).ln();
    let rhs = 0.8 * (1.0 + sign * 2.0 * r / (sigma * sigma)) * lr;
    (lhs, rhs)
}

/// `∫ s φ ds` and `∫ φ ds` over the tail beyond a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMass {
    pub first_moment: f64,
    pub probability: f64,
}

fn half_gauss(c: f64, s: f64, t: f64) -> f64 {
    0.5 * (-(c * c) / (2.0 * s * s * t)).exp()
}

/// Closed-form upper bounds on the tail beyond `H = S₀e^{±lr}` at time `t`.
/// Where the centring offset is not positive the bound is the full mass.
pub fn tail_bound(face: Face, r: f64, sigma: f64, s0: f64, lr: f64, t: f64) -> TailMass {
    let fwd = s0 * (r * t).exp();
    let s2 = sigma * sigma;
    let (c_first, c_prob) = match face {
        Face::Upper => (lr - (r + s2 / 2.0) * t, lr - (r - s2 / 2.0) * t),
        Face::Lower => (lr + (r + s2 / 2.0) * t, lr + (r - s2 / 2.0) * t),
    };
    TailMass {
        first_moment: if c_first > 0.0 { fwd * half_gauss(c_first, sigma, t) } else { fwd },
        probability: if c_prob > 0.0 { half_gauss(c_prob, sigma, t) } else { 1.0 },
    }
}

/// Exact lognormal tail masses, for comparison with [`tail_bound`].
pub fn tail_exact(face: Face, r: f64, sigma: f64, s0: f64, lr: f64, t: f64) -> TailMass {
    let fwd = s0 * (r * t).exp();
    let s2 = sigma * sigma;
    let sd = sigma * t.sqrt();
    let (c_first, c_prob) = match face {
        Face::Upper => (lr - (r + s2 / 2.0) * t, lr - (r - s2 / 2.0) * t),
        Face::Lower => (lr + (r + s2 / 2.0) * t, lr + (r - s2 / 2.0) * t),
    };
    TailMass {
        first_moment: fwd * norm_sf(c_first / sd),
        probability: norm_sf(c_prob / sd),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceReport {
    pub asset: usize,
    pub face: Face,
    /// Barrier level `U_i` or `L_i`.
    pub barrier: f64,
    /// Touch bound at `t_ter` for paths ending inside the half box.
    pub hit_bound: f64,
    /// Horizon where the touch bound reaches `ε/(2d)`.
    pub hit_horizon: f64,
    /// Half-box level `√(U_i S_i0)` or `√(L_i S_i0)`.
    pub half_level: f64,
    pub cut_lhs: f64,
    pub cut_rhs: f64,
    /// Tail horizon at the half-box level with the per-piece tolerance.
    pub cut_horizon: f64,
    pub tail_bound: TailMass,
    pub tail_exact: TailMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eps: f64,
    pub t_ter: f64,
    /// `ε / (2 Ã d (d+1))`
    pub eps_piece: f64,
    pub faces: Vec<FaceReport>,
    /// Bound on the discounted value mass outside the half box, from the
    /// closed-form tail bounds.
    pub outside_mass_bound: f64,
    /// The same sum with exact tail masses.
    pub outside_mass_exact: f64,
    pub within_eps: bool,
    pub hit_within_horizon: bool,
}

/// Evaluates every face at `t_ter` and assembles the outside-mass bound.
/// Fails naming the face when a tail precondition does not hold.
pub fn boundary_value_checks(model: &MarketModel, product: &ProductSpec, eps: f64, t_ter: f64) -> Result<BoundReport> {
    let d = model.dim();
    if !(eps > 0.0 && t_ter > 0.0) {
        return Err(Error::Precondition("bound checks need positive ε and t_ter".into()));
    }
    let df = d as f64;
    let eps_piece = eps / (2.0 * a_tilde(product) * df * (df + 1.0));
    let r = model.r;
    let mut faces = Vec::with_capacity(2 * d);
    for i in 0..d {
        let s = model.sigmas[i];
        let s0 = product.spot[i];
        for face in [Face::Lower, Face::Upper] {
            let barrier = match face {
                Face::Lower => product.lower[i],
                Face::Upper => product.upper[i],
            };
            let lr = (barrier / s0).ln().abs();
            let (cut_lhs, cut_rhs) = cut_condition(face, r, s, lr / 2.0, eps_piece);
            if !(cut_lhs > cut_rhs) {
                return Err(Error::Precondition(format!(
                    "tail condition fails on the {face:?} face of asset {}: ln(1/2ε') = {cut_lhs} ≤ {cut_rhs}",
                    i + 1
                )));
            }
            faces.push(FaceReport {
                asset: i,
                face,
                barrier,
                hit_bound: hit_bound(lr, s, t_ter),
                hit_horizon: hit_horizon(lr, s, (eps / (2.0 * df)).min(0.5))?,
                half_level: (barrier * s0).sqrt(),
                cut_lhs,
                cut_rhs,
                cut_horizon: cut_horizon(lr / 2.0, s, eps_piece)?,
                tail_bound: tail_bound(face, r, s, s0, lr / 2.0, t_ter),
                tail_exact: tail_exact(face, r, s, s0, lr / 2.0, t_ter),
            });
        }
    }
    let (a0, a) = product.bound_coefficients();
    let assemble = |pick: fn(&FaceReport) -> TailMass| {
        let disc = (-r * t_ter).exp();
        let prob: Vec<f64> = (0..d)
            .map(|j| pick(&faces[2 * j]).probability + pick(&faces[2 * j + 1]).probability)
            .collect();
        let mut total = a0 * disc * prob.iter().sum::<f64>();
        for i in 0..d {
            let own = disc * (pick(&faces[2 * i]).first_moment + pick(&faces[2 * i + 1]).first_moment);
            let cross: f64 = (0..d).filter(|&j| j != i).map(|j| prob[j]).sum();
            total += a[i] * (own + faces[2 * i + 1].half_level * cross);
        }
        total
    };
    let outside_mass_bound = assemble(|f| f.tail_bound);
    let outside_mass_exact = assemble(|f| f.tail_exact);
    let hit_within_horizon = faces.iter().all(|f| t_ter <= f.hit_horizon);
    Ok(BoundReport {
        eps,
        t_ter,
        eps_piece,
        within_eps: outside_mass_bound <= eps,
        hit_within_horizon,
        faces,
        outside_mass_bound,
        outside_mass_exact,
    })
}
