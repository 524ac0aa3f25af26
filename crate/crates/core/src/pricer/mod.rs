//! End-to-end pricing: classical reference, γ choice, readout tolerances,
//! the two-estimate readout, error budget and query-count formulas.

mod bounds;
mod complexity;
mod kappa;
mod readout;
mod reference;

pub use bounds::{
    boundary_value_checks, cut_condition, cut_horizon, hit_bound, hit_horizon, tail_bound, tail_exact, BoundReport,
    Face, FaceReport, TailMass,
};
pub use complexity::{complexity_estimate, Complexity, ComplexityInputs};
pub use kappa::{eigvec_condition, kappa_v, KappaEstimate, KappaSource, DENSE_KAPPA_CAP};
pub use readout::{choose_gamma, price_readout, tolerance_plan, Readout, ReadoutModes, ToleranceInputs, Tolerances};
pub use reference::{
    closed_form_solution, reference_solve, ReferenceMethod, ReferenceOptions, ReferenceSolution, BLOWUP_FACTOR,
};

use serde::{Deserialize, Serialize};

use crate::berry::{BerryParams, SolveMethod};
use crate::config::RunConfig;
use crate::operator::LogNorm;
use crate::qae::AmplitudeEstimate;
use crate::stateprep::StateprepComparison;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    BlackScholes,
    DoubleKnockOut,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineValue {
    pub method: BaselineMethod,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps: f64,
    /// Truncation to the box and readout at `t_ter`: `2ε`.
    pub truncation_term: f64,
    /// Spatial discretization: `4ε`.
    pub discretization_term: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps_psi: f64,
    /// Readout bound evaluated with the run's `P, Z, p, γ`.
    pub readout_bound: f64,
    pub omega_vs_classical: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t_ter: f64,
    pub tau_ter: f64,
    pub delta: Vec<f64>,
    pub n_gr: usize,
    pub grid_points: usize,
    pub h: Vec<f64>,
    pub f_norm_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_norm: Option<LogNorm>,
    pub reference_method: ReferenceMethod,
    pub g: f64,
    pub kappa_v: KappaEstimate,
    pub y_norm: f64,
    pub y_bar: f64,
    pub gamma: f64,
    pub berry: BerryParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_param: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_raw: Option<usize>,
    pub solve_method: SolveMethod,
    /// `‖x_m - Ỹ_ref‖ / ‖Ỹ_ref‖`
    pub berry_rel_gap: f64,
    pub repetition_gap: f64,
    pub gamma_gap: f64,
    pub garbage_norm_sq: f64,
    pub z: f64,
    pub p_norm: f64,
    pub p2_exact: f64,
    pub p2_closed_form: f64,
    pub p_mass: f64,
    pub e1_truth: f64,
    pub e2_truth: f64,
    pub e1: AmplitudeEstimate,
    pub e2: AmplitudeEstimate,
    pub readout_queries: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stateprep: Option<StateprepComparison>,
}

/// Result of one pricing run, with the resolved configuration embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingReport {
    pub config: RunConfig,
    pub omega: f64,
    /// `e^{-rT} p·Ỹ(τ_ter)` from the reference solve.
    pub v0_classical: f64,
    /// `e^{-rT} p·x_m` from the block system.
    pub v0_berry: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0_baseline: Option<BaselineValue>,
    pub error_budget: ErrorBudget,
    pub complexity: Complexity,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundReport>,
    pub warnings: Vec<String>,
}
