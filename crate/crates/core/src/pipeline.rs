//! validate → grid → operator → reference → block system → state prep →
//! readout → report.

use serde::{Deserialize, Serialize};

use crate::baselines::{barrier_double_knockout, bs_vanilla, mc_price, OptionKind};
use crate::berry::{self, choose_params, BerryParams, ParamInputs};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gridding::{compute_h_bounds, compute_t_ter, Grid, TerminalTime};
use crate::model::{BoundaryKind, MarketModel, PayoffSpec, ProductSpec};
use crate::operator::{log_norm, FdmSystem, LogNorm};
use crate::pricer::{
    boundary_value_checks, choose_gamma, complexity_estimate, kappa_v, price_readout, reference_solve,
    tolerance_plan, BaselineMethod, BaselineValue, Complexity, ComplexityInputs, Diagnostics, ErrorBudget,
    KappaEstimate, KappaSource, PricingReport, ReferenceOptions, ReferenceSolution, ToleranceInputs,
    Tolerances,
};
use crate::stateprep::{build_p_vector, compare_stateprep, GaussianSpec, ProbabilityVector};

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Closed-form value when one exists: one asset, a call or put on a single
/// positive weight, and either two knock-out faces or none.
pub fn analytic_baseline(model: &MarketModel, product: &ProductSpec) -> Result<Option<BaselineValue>> {
    if model.dim() != 1 {
        return Ok(None);
    }
    let (w, strike, kind) = match &product.payoff {
        PayoffSpec::Call { weights, strike } => (weights[0], *strike, OptionKind::Call),
        PayoffSpec::Put { weights, strike } => (weights[0], *strike, OptionKind::Put),
        _ => return Ok(None),
    };
    if !(w > 0.0) {
        return Ok(None);
    }
    let faces = &product.boundaries[0];
    let ko = |b: &BoundaryKind| matches!(b, BoundaryKind::KnockOut);
    let (r, s, s0, t, k) = (model.r, model.sigmas[0], product.spot[0], product.maturity, strike / w);
    let (value, method) = match (ko(&faces.lower), ko(&faces.upper)) {
        (true, true) => (
            barrier_double_knockout(r, s, s0, k, product.lower[0], product.upper[0], t, kind)?,
            BaselineMethod::DoubleKnockOut,
        ),
        (false, false) => (bs_vanilla(r, s, s0, k, t, kind)?, BaselineMethod::BlackScholes),
        _ => return Ok(None),
    };
    Ok(Some(BaselineValue { method, value: w * value, std_error: None }))
}

/// `A_0 e^{-rT} + Σ A_i S_i0`, an upper bound on the price.
fn payoff_bound_value(model: &MarketModel, product: &ProductSpec) -> f64 {
    let (a0, a) = product.bound_coefficients();
    a0 * (-model.r * product.maturity).exp() + a.iter().zip(&product.spot).map(|(a, s)| a * s).sum::<f64>()
}

/// Pipeline stage, named after the module that does the work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Baselines,
    Gridding,
    Operator,
    Pricer,
    Berry,
    Stateprep,
    Qae,
}

impl Stage {
    pub fn module(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Baselines => "baselines",
            Stage::Gridding => "gridding",
            Stage::Operator => "operator",
            Stage::Pricer => "pricer",
            Stage::Berry => "berry",
            Stage::Stateprep => "stateprep",
            Stage::Qae => "qae",
        }
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("[{}] {error}", stage.module())]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

trait At<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> At<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Everything up to and including the classical reference value.
pub struct Prepared {
    pub eps: f64,
    pub tt: TerminalTime,
    pub fdm: FdmSystem,
    pub log_norm: LogNorm,
    pub reference: ReferenceSolution,
    pub kappa: KappaEstimate,
    pub baseline: Option<BaselineValue>,
    pub spec: GaussianSpec,
    pub pvec: ProbabilityVector,
    pub v0_classical: f64,
    /// `V₀` scale for tolerances and complexity.
    pub v0_scale: f64,
    /// `e^{-rτ_ter} Ȳ`
    pub vbar: f64,
    pub rho_det: f64,
    pub warnings: Vec<String>,
}

fn check_points(n_gr: usize, d: usize, cap: usize) -> Result<()> {
    let total = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(n_gr)).unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::Capacity { what: "grid points", requested: total, cap });
    }
    Ok(())
}

pub fn prepare(cfg: &RunConfig) -> std::result::Result<Prepared, StageError> {
    let validation = cfg.validate().at(Stage::Config)?;
    let mut warnings = validation.warnings.clone();
    let (model, product, pc) = (&cfg.model, &cfg.product, &cfg.pipeline);

    let mut baseline = if cfg.baseline.analytic { analytic_baseline(model, product).at(Stage::Baselines)? } else { None };
    if baseline.is_none() {
        if let Some(mc) = &cfg.baseline.monte_carlo {
            let res = mc_price(model, product, mc).at(Stage::Baselines)?;
            baseline = Some(BaselineValue {
                method: BaselineMethod::MonteCarlo,
                value: res.price,
                std_error: Some(res.std_error),
            });
        }
    }

    let eps = match pc.eps {
        Some(e) => e,
        None => {
            let scale = match baseline.filter(|b| b.value > 0.0) {
                Some(b) => b.value,
                None => {
                    warnings.push("no baseline value: eps scaled by the payoff bound".into());
                    payoff_bound_value(model, product)
                }
            };
            pc.eps_rel * scale
        }
    };

    let tt = match pc.t_ter {
        Some(t) => TerminalTime::from_t_ter(model, product, t),
        None => compute_t_ter(model, product, eps),
    }
    .at(Stage::Gridding)?;
    let grid = match pc.n_gr {
        Some(n) => check_points(n, model.dim(), pc.max_grid_points).and_then(|_| Grid::for_product(product, n)),
        None => compute_h_bounds(model, product, &pc.smoothness, &tt, eps, pc.max_grid_points).map(|c| c.grid),
    }
    .at(Stage::Gridding)?;
    let fdm = FdmSystem::build_with(grid, model, product, pc.fault).at(Stage::Operator)?;
    let reference = reference_solve(&fdm, tt.tau_ter, &ReferenceOptions { method: pc.reference, ..Default::default() })
        .at(Stage::Pricer)?;
    let ln = log_norm(&fdm.f).at(Stage::Operator)?;
    if ln.value >= 0.0 {
        warnings.push(format!("logarithmic norm μ(F) = {} is not negative", ln.value));
    }

    let kappa = kappa_v(&fdm, model, pc.kappa_v).at(Stage::Pricer)?;
    if kappa.source == KappaSource::Assumed {
        warnings.push("κ_V not computable at this size; 1 assumed (supply pipeline.kappa_v)".into());
    }

    let spec = GaussianSpec::at_time(model, &product.spot, tt.t_ter).at(Stage::Stateprep)?;
    let pvec = build_p_vector(&fdm.grid, &spec).at(Stage::Stateprep)?;
    let disc = (-model.r * product.maturity).exp();
    let v0_classical = disc * pvec.p.iter().zip(&reference.y).map(|(a, b)| a * b).sum::<f64>();
    let v0_scale = if v0_classical.abs() > 0.0 { v0_classical.abs() } else { eps / pc.eps_rel };
    let vbar = (-model.r * tt.tau_ter).exp() * reference.y_bar;
    let rho_det = model.correlation_factor().at(Stage::Config)?.det();
    Ok(Prepared {
        eps,
        tt,
        fdm,
        log_norm: ln,
        reference,
        kappa,
        baseline,
        spec,
        pvec,
        v0_classical,
        v0_scale,
        vbar,
        rho_det,
        warnings,
    })
}

fn complexity_of(cfg: &RunConfig, pr: &Prepared) -> Result<Complexity> {
    let d = cfg.model.dim();
    complexity_estimate(&ComplexityInputs {
        dim: d,
        sigma_max: cfg.model.sigma_max(),
        tau_ter: pr.tt.tau_ter,
        eps: pr.eps,
        g: pr.reference.g,
        kappa_v: pr.kappa.value,
        vbar: pr.vbar,
        v0: pr.v0_scale,
        delta: pr.tt.delta.clone(),
        rho_det: pr.rho_det,
        widths: (0..d).map(|i| pr.fdm.grid.upper_log()[i] - pr.fdm.grid.lower_log()[i]).collect(),
        smoothness: cfg.pipeline.smoothness,
    })
}

/// Query-count formulas with the reference-derived `g`, `κ_V`, `V̄`, `V₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub config: RunConfig,
    pub eps: f64,
    pub t_ter: f64,
    pub n_gr: usize,
    pub g: f64,
    pub kappa_v: KappaEstimate,
    pub vbar: f64,
    pub v0_classical: f64,
    pub complexity: Complexity,
    pub warnings: Vec<String>,
}

pub fn run_complexity(cfg: &RunConfig) -> std::result::Result<ComplexityReport, StageError> {
    let pr = prepare(cfg)?;
    let complexity = complexity_of(cfg, &pr).at(Stage::Pricer)?;
    Ok(ComplexityReport {
        config: cfg.clone(),
        eps: pr.eps,
        t_ter: pr.tt.t_ter,
        n_gr: pr.fdm.grid.n_gr(),
        g: pr.reference.g,
        kappa_v: pr.kappa,
        vbar: pr.vbar,
        v0_classical: pr.v0_classical,
        complexity,
        warnings: pr.warnings,
    })
}

/// Runs the whole pipeline for one configuration.
pub fn run_pricing(cfg: &RunConfig) -> std::result::Result<PricingReport, StageError> {
    let pr = prepare(cfg)?;
    let (model, product, pc) = (&cfg.model, &cfg.product, &cfg.pipeline);
    let mut warnings = pr.warnings.clone();
    let (eps, tt, fdm, reference) = (pr.eps, &pr.tt, &pr.fdm, &pr.reference);

    let gamma = match pc.gamma {
        Some(g) => g,
        None => choose_gamma(&reference.y).at(Stage::Pricer)?,
    };
    let auto = choose_params(
        fdm,
        &ParamInputs {
            tau_ter: tt.tau_ter,
            maturity: product.maturity,
            eps,
            g: reference.g,
            kappa_v: pr.kappa.value,
            y_norm: reference.y_norm,
        },
    );
    let (params, omega_param, k_raw) = match (auto, pc.k) {
        (Ok(c), _) => {
            let p = pc.p.unwrap_or(c.params.p);
            let m = pc.m.unwrap_or(if pc.p.is_some() { p } else { c.params.m });
            let params = BerryParams::new(m, pc.k.unwrap_or(c.params.k), p, tt.tau_ter).at(Stage::Berry)?;
            (params, Some(c.omega), Some(c.k_raw))
        }
        (Err(_), Some(k)) => {
            let p = pc.p.unwrap_or_else(|| berry::p_from_norm(tt.tau_ter, fdm.norm_bound));
            (BerryParams::new(pc.m.unwrap_or(p), k, p, tt.tau_ter).at(Stage::Berry)?, None, None)
        }
        (Err(e), None) => return Err(StageError { stage: Stage::Berry, error: e }),
    };
    let sol = berry::solve(fdm, &params, Some(gamma), pc.solver, pc.row_cap).at(Stage::Berry)?;
    let diff: Vec<f64> = sol.x_m.iter().zip(&reference.y).map(|(a, b)| a - b).collect();
    let berry_rel_gap = l2(&diff) / reference.y_norm.max(f64::MIN_POSITIVE);

    let stateprep = if pc.stateprep_check {
        Some(compare_stateprep(&fdm.grid, &pr.spec, pc.cells).at(Stage::Stateprep)?)
    } else {
        None
    };

    let planned = tolerance_plan(&ToleranceInputs {
        eps,
        g: reference.g,
        dim: model.dim(),
        rho_det: pr.rho_det,
        delta_product: tt.delta_product(),
        v0_scale: pr.v0_scale,
        vbar_scale: pr.vbar.max(f64::MIN_POSITIVE),
        c1: pc.c1,
        c2: pc.c2,
    })
    .at(Stage::Pricer)?;
    let tol = Tolerances::new(pc.eps1.unwrap_or(planned.eps1), pc.eps2.unwrap_or(planned.eps2)).at(Stage::Qae)?;
    let readout = price_readout(
        &sol,
        &pr.pvec,
        model.r,
        product.maturity,
        &tol,
        pc.qae_mode.readout_modes(pc.seed, pr.pvec.p.iter().zip(&sol.x_m).map(|(a, b)| a * b).sum::<f64>() >= 0.0),
    )
    .at(Stage::Qae)?;

    let complexity = complexity_of(cfg, &pr).at(Stage::Pricer)?;
    let bounds = match boundary_value_checks(model, product, eps, tt.t_ter) {
        Ok(b) => Some(b),
        Err(e) => {
            warnings.push(format!("boundary checks skipped: {e}"));
            None
        }
    };

    let v0_classical = pr.v0_classical;
    let scalars = [readout.omega, v0_classical, readout.v0_berry, readout.z, reference.g, pr.kappa.value];
    if scalars.iter().any(|v| !v.is_finite()) {
        return Err(StageError {
            stage: Stage::Pricer,
            error: Error::Numeric(format!("non-finite pricing output: {scalars:?}")),
        });
    }
    let baseline = pr.baseline;
    Ok(PricingReport {
        config: cfg.clone(),
        omega: readout.omega,
        v0_classical,
        v0_berry: readout.v0_berry,
        v0_baseline: baseline,
        error_budget: ErrorBudget {
            eps,
            truncation_term: 2.0 * eps,
            discretization_term: 4.0 * eps,
            eps1: tol.eps1,
            eps2: tol.eps2,
            eps_psi: tol.eps_psi,
            readout_bound: readout.error_bound,
            omega_vs_classical: (readout.omega - v0_classical).abs(),
            classical_vs_baseline: baseline.map(|b| (v0_classical - b.value).abs()),
        },
        complexity,
        diagnostics: Diagnostics {
            t_ter: tt.t_ter,
            tau_ter: tt.tau_ter,
            delta: tt.delta.clone(),
            n_gr: fdm.grid.n_gr(),
            grid_points: fdm.len(),
            h: fdm.grid.h().to_vec(),
            f_norm_bound: fdm.norm_bound,
            log_norm: Some(pr.log_norm),
            reference_method: reference.method,
            g: reference.g,
            kappa_v: pr.kappa,
            y_norm: reference.y_norm,
            y_bar: reference.y_bar,
            gamma,
            berry: params,
            omega_param,
            k_raw,
            solve_method: sol.method,
            berry_rel_gap,
            repetition_gap: sol.repetition_gap,
            gamma_gap: sol.gamma_gap,
            garbage_norm_sq: sol.garbage_norm_sq,
            z: readout.z,
            p_norm: readout.p_norm,
            p2_exact: pr.pvec.p2_exact,
            p2_closed_form: pr.pvec.p2_closed_form,
            p_mass: pr.pvec.mass,
            e1_truth: readout.e1_truth,
            e2_truth: readout.e2_truth,
            e1: readout.e1,
            e2: readout.e2,
            readout_queries: readout.queries,
            stateprep,
        },
        bounds,
        warnings,
    })
}
