//! Run configuration: model, product, pipeline overrides and output paths.
//!
//! Every field outside `model` and `product` has a default, so a minimal
//! config file holds only those two objects.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::McConfig;
use crate::berry::SolveMethod;
use crate::error::{Error, Result};
use crate::gridding::{SmoothnessBounds, DEFAULT_ROW_CAP};
use crate::model::{validate_model, MarketModel, ProductSpec, ValidationReport};
use crate::operator::AssemblyOptions;
use crate::pricer::{ReadoutModes, ReferenceMethod};
use crate::qae::QaeMode;
use crate::stateprep::CellConvention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QaeModeName {
    #[default]
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "bias+")]
    BiasPlus,
    #[serde(rename = "bias-")]
    BiasMinus,
    #[serde(rename = "sampled")]
    Sampled,
    /// Biases chosen to push `ω` away from the truth.
    #[serde(rename = "adverse")]
    Adverse,
}

impl QaeModeName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "bias+" => Ok(Self::BiasPlus),
            "bias-" => Ok(Self::BiasMinus),
            "sampled" => Ok(Self::Sampled),
            "adverse" => Ok(Self::Adverse),
            other => Err(Error::InvalidInput(format!(
                "unknown QAE mode '{other}' (expected exact, bias+, bias-, sampled, adverse)"
            ))),
        }
    }

    /// Estimator modes for the two readout amplitudes. `positive` is the
    /// sign of `p·x_m`, used only by the adverse mode.
    pub fn readout_modes(self, seed: u64, positive: bool) -> ReadoutModes {
        match self {
            Self::Exact => ReadoutModes::uniform(QaeMode::Exact),
            Self::BiasPlus => ReadoutModes::uniform(QaeMode::BiasPlus),
            Self::BiasMinus => ReadoutModes::uniform(QaeMode::BiasMinus),
            Self::Sampled => ReadoutModes::uniform(QaeMode::Sampled { seed }),
            Self::Adverse => ReadoutModes::adverse(positive),
        }
    }
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Absolute tolerance. When absent, `eps_rel` times the value scale is used.
    pub eps: Option<f64>,
    pub eps_rel: f64,
    pub n_gr: Option<usize>,
    pub t_ter: Option<f64>,
    pub gamma: Option<f64>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub qae_mode: QaeModeName,
    pub seed: u64,
    pub kappa_v: Option<f64>,
    pub smoothness: SmoothnessBounds,
    pub max_grid_points: usize,
    pub solver: SolveMethod,
    pub row_cap: usize,
    pub reference: ReferenceMethod,
    pub cells: CellConvention,
    /// Compare the swept amplitudes with `p/P` (costs one extra sweep).
    pub stateprep_check: bool,
    #[serde(skip_serializing_if = "is_default")]
    pub fault: AssemblyOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            eps: None,
            eps_rel: 0.01,
            n_gr: None,
            t_ter: None,
            gamma: None,
            m: None,
            k: None,
            p: None,
            eps1: None,
            eps2: None,
            c1: 1.0,
            c2: 1.0,
            qae_mode: QaeModeName::Exact,
            seed: 0,
            kappa_v: None,
            smoothness: SmoothnessBounds::default(),
            max_grid_points: 1 << 22,
            solver: SolveMethod::Auto,
            row_cap: DEFAULT_ROW_CAP,
            reference: ReferenceMethod::Auto,
            cells: CellConvention::Centered,
            stateprep_check: true,
            fault: AssemblyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Use a closed form when the product has one.
    pub analytic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<McConfig>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { analytic: true, monte_carlo: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: MarketModel,
    pub product: ProductSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Model and product with every other section at its default.
    pub fn new(model: MarketModel, product: ProductSpec) -> Self {
        Self {
            model,
            product,
            pipeline: PipelineConfig::default(),
            baseline: BaselineConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Parses JSON; errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::InvalidInput(format!("config parse error at line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Schema-level checks plus model/product validation. Violations become
    /// one validation error; warnings are returned.
    pub fn validate(&self) -> Result<ValidationReport> {
        let p = &self.pipeline;
        let mut issues = Vec::new();
        let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0 && x.is_finite());
        if !positive(p.eps) {
            issues.push("pipeline.eps must be positive".to_string());
        }
        if !(p.eps_rel > 0.0 && p.eps_rel.is_finite()) {
            issues.push("pipeline.eps_rel must be positive".into());
        }
        for (name, v) in [("gamma", p.gamma), ("eps1", p.eps1), ("eps2", p.eps2), ("t_ter", p.t_ter), ("kappa_v", p.kappa_v)] {
            if !positive(v) {
                issues.push(format!("pipeline.{name} must be positive"));
            }
        }
        if !(p.c1 > 0.0 && p.c2 > 0.0) {
            issues.push("pipeline.c1 and pipeline.c2 must be positive".into());
        }
        if let Some(n) = p.n_gr {
            if n < 2 || !n.is_power_of_two() {
                issues.push(format!("pipeline.n_gr = {n} must be a power of two ≥ 2"));
            }
        }
        for (name, v) in [("m", p.m), ("k", p.k), ("p", p.p)] {
            if v == Some(0) {
                issues.push(format!("pipeline.{name} must be ≥ 1"));
            }
        }
        if let Some(mc) = &self.baseline.monte_carlo {
            if mc.paths == 0 || mc.steps == 0 {
                issues.push("baseline.monte_carlo needs paths ≥ 1 and steps ≥ 1".into());
            }
        }
        if let Err(e) = p.smoothness.validate() {
            issues.push(e.to_string());
        }
        let rep = validate_model(&self.model, &self.product);
        issues.extend(rep.violations.iter().cloned());
        if !issues.is_empty() {
            return Err(Error::Validation(issues.join("; ")));
        }
        Ok(rep)
    }
}
