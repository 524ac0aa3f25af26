//! Amplitude-estimation contract: an estimate within `ε` of the true
//! amplitude for `⌈c/ε⌉` oracle queries. No interference simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaeMode {
    /// Return the truth.
    Exact,
    /// Return `truth + ε`.
    BiasPlus,
    /// Return `truth - ε`.
    BiasMinus,
    /// Return `truth + U(-ε, ε)` drawn from a seeded generator.
    Sampled { seed: u64 },
}

impl QaeMode {
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name {
            "exact" => Ok(QaeMode::Exact),
            "bias+" | "bias_plus" => Ok(QaeMode::BiasPlus),
            "bias-" | "bias_minus" => Ok(QaeMode::BiasMinus),
            "sampled" => Ok(QaeMode::Sampled { seed }),
            other => Err(Error::InvalidInput(format!(
                "unknown QAE mode '{other}' (expected exact, bias+, bias-, sampled)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEstimate {
    pub value: f64,
    pub tolerance: f64,
    pub queries: u64,
    pub mode: QaeMode,
}

/// Query-count constant `c` in `⌈c/ε⌉`.
pub const QUERY_CONSTANT: f64 = 1.0;

pub fn query_count(eps: f64) -> u64 {
    (QUERY_CONSTANT / eps).ceil() as u64
}

pub fn estimate(truth: f64, eps: f64, mode: QaeMode) -> Result<AmplitudeEstimate> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("QAE tolerance must be positive, got {eps}")));
    }
    let value = match mode {
        QaeMode::Exact => truth,
        QaeMode::BiasPlus => truth + eps,
        QaeMode::BiasMinus => truth - eps,
        QaeMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            truth + rng.random_range(-eps..=eps)
        }
    };
    Ok(AmplitudeEstimate { value, tolerance: eps, queries: query_count(eps), mode })
}
