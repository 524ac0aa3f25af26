//! Built-in property suites run by `qfdm verify`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::berry::{self, BerryParams, SolveMethod};
use crate::error::{Error, Result};
use crate::gridding::Grid;
use crate::model::{FacePair, MarketModel, PayoffSpec, ProductSpec};
use crate::operator::{assemble_f, assemble_f_parts, log_norm, AssemblyOptions, FdmSystem};
use crate::qae::{self, QaeMode};
use crate::stateprep::{compare_stateprep, build_p_vector, CellConvention, GaussianSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    LogNorm,
    Sparsity,
    NormBound,
    BlockRepetition,
    Stateprep,
    Qae,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::LogNorm, Suite::Sparsity, Suite::NormBound, Suite::BlockRepetition, Suite::Stateprep, Suite::Qae];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LogNorm => "log-norm",
            Suite::Sparsity => "sparsity",
            Suite::NormBound => "norm-bound",
            Suite::BlockRepetition => "block-repetition",
            Suite::Stateprep => "stateprep",
            Suite::Qae => "qae",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidInput(format!("unknown suite '{name}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random models for the log-norm suite.
    pub models: usize,
    pub fault: AssemblyOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 2024, models: 100, fault: AssemblyOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Tally {
    checks: usize,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self { checks: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(msg());
        }
    }

    fn fail(&mut self, msg: String) {
        self.checks += 1;
        self.failures.push(msg);
    }

    fn finish(self, suite: Suite) -> SuiteResult {
        SuiteResult { suite, checks: self.checks, failures: self.failures }
    }
}

/// Random model satisfying the validation rules: `r < σ_min²/2` and a
/// positive-definite correlation matrix.
pub fn random_model(rng: &mut impl Rng, d: usize) -> MarketModel {
    let sigmas: Vec<f64> = (0..d).map(|_| rng.random_range(0.15..0.5)).collect();
    let smin = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let r = rng.random_range(0.001..0.95) * smin * smin / 2.0;
    loop {
        let mut rho = vec![vec![1.0; d]; d];
        for i in 0..d {
            for j in i + 1..d {
                let v = rng.random_range(-0.8..0.8);
                rho[i][j] = v;
                rho[j][i] = v;
            }
        }
        let m = MarketModel::new(r, sigmas.clone(), rho);
        if m.correlation_factor().is_ok() {
            return m;
        }
    }
}

fn random_grid(rng: &mut impl Rng, d: usize, n_gr: usize) -> Result<Grid> {
    let lower: Vec<f64> = (0..d).map(|_| rng.random_range(-1.2..-0.1)).collect();
    let upper: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.2)).collect();
    Grid::new(lower, upper, n_gr)
}

fn knock_out_product(d: usize, lo: f64, hi: f64) -> ProductSpec {
    ProductSpec {
        maturity: 1.0,
        lower: vec![lo; d],
        upper: vec![hi; d],
        spot: vec![100.0; d],
        payoff: PayoffSpec::call(vec![1.0 / d as f64; d], 100.0),
        boundaries: vec![FacePair::knock_out(); d],
        payoff_bound: std::iter::once(0.0).chain(std::iter::repeat_n(1.0 / d as f64, d)).collect(),
        allow_discounted_linear: false,
    }
}

fn log_norm_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut t = Tally::new();
    for i in 0..opts.models {
        let d = 1 + i % 3;
        let n_gr = [64, 16, 8][d - 1];
        let model = random_model(&mut rng, d);
        let grid = random_grid(&mut rng, d, n_gr)?;
        let f = assemble_f_parts(&grid, &model, opts.fault)?.total();
        let mu = log_norm(&f)?.value;
        t.check(mu < 0.0, || format!("model {i} (d={d}): μ(F) = {mu:e} ≥ 0"));
    }
    Ok(t.finish(Suite::LogNorm))
}

fn sparsity_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5a5a);
    let mut t = Tally::new();
    for d in 1..=4 {
        let model = random_model(&mut rng, d);
        for n_gr in [2, 4, 8, 16] {
            let grid = random_grid(&mut rng, d, n_gr)?;
            let f = assemble_f_parts(&grid, &model, opts.fault)?.total();
            let cap = 2 * d * d + 1;
            let worst = (0..f.nrows()).map(|r| f.row_nnz(r)).max().unwrap_or(0);
            t.check(worst <= cap, || format!("d={d}, n_gr={n_gr}: a row has {worst} > {cap} nonzeros"));
        }
    }
    Ok(t.finish(Suite::Sparsity))
}

fn norm_bound_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xa5a5);
    let mut t = Tally::new();
    for d in 1..=2 {
        for n_gr in [2, 4, 8, 16] {
            let model = random_model(&mut rng, d);
            let grid = random_grid(&mut rng, d, n_gr)?;
            let f = assemble_f_parts(&grid, &model, opts.fault)?.total();
            let dense: DMatrix<f64> = f.to_dense();
            let two_norm = dense.singular_values().max();
            let bound = crate::operator::f_norm_bound(&grid, &model);
            t.check(two_norm <= bound * (1.0 + 1e-12), || {
                format!("d={d}, n_gr={n_gr}: ‖F‖ = {two_norm} exceeds bound {bound}")
            });
        }
    }
    Ok(t.finish(Suite::NormBound))
}

fn block_repetition_suite(_opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut t = Tally::new();
    let model = MarketModel::single(0.01, 0.2);
    let product = knock_out_product(1, 70.0, 140.0);
    let grid = Grid::for_product(&product, 16)?;
    let fdm = FdmSystem::build(grid, &model, &product)?;
    let tau = 0.25;
    let p = berry::p_from_norm(tau, fdm.norm_bound);
    for (k, gamma) in [(4, 0.0), (6, 1.5), (8, 30.0)] {
        let params = BerryParams::new(p, k, p, tau)?;
        match berry::solve(&fdm, &params, Some(gamma), SolveMethod::Direct, usize::MAX) {
            Ok(sol) => {
                t.check(sol.repetition_gap <= berry::REPETITION_TOL, || {
                    format!("k={k}: solution copies differ by {:e}", sol.repetition_gap)
                });
                t.check(sol.gamma_gap == 0.0, || format!("k={k}: padding blocks deviate by {:e}", sol.gamma_gap));
                let streamed = berry::solve_structured(&fdm, &params, Some(gamma), false)?;
                let gap = sol
                    .x_m
                    .iter()
                    .zip(&streamed.x_m)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let scale = sol.x_m.iter().map(|v| v.abs()).fold(0.0, f64::max);
                t.check(gap <= 1e-10 * scale, || format!("k={k}: direct and streamed solves differ by {gap:e}"));
            }
            Err(e) => t.fail(format!("k={k}: {e}")),
        }
    }
    Ok(t.finish(Suite::BlockRepetition))
}

fn stateprep_suite(_opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut t = Tally::new();
    let cases = [
        (MarketModel::single(0.01, 0.2), knock_out_product(1, 40.0, 250.0), 0.58, 64),
        (MarketModel::pair(0.01, 0.2, 0.3, 0.4), knock_out_product(2, 40.0, 250.0), 0.37, 64),
    ];
    for (model, product, t_eval, n_gr) in cases {
        let d = model.dim();
        let grid = Grid::for_product(&product, n_gr)?;
        let spec = GaussianSpec::at_time(&model, &product.spot, t_eval)?;
        let cmp = compare_stateprep(&grid, &spec, CellConvention::Centered)?;
        let pv = build_p_vector(&grid, &spec)?;
        t.check(cmp.l2 < 1e-2, || format!("d={d}: amplitude L2 deviation {:e}", cmp.l2));
        t.check((cmp.amplitude_norm - 1.0).abs() < 1e-12, || {
            format!("d={d}: amplitude norm {}", cmp.amplitude_norm)
        });
        t.check(pv.p2_rel_gap < 0.05, || format!("d={d}: P² closed form off by {:.3}%", 100.0 * pv.p2_rel_gap));
    }
    Ok(t.finish(Suite::Stateprep))
}

fn qae_suite(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x0ae);
    let mut t = Tally::new();
    for i in 0..100u64 {
        let truth: f64 = rng.random_range(0.0..1.0);
        for eps in [0.1, 0.01, 1e-3, 1e-4] {
            for mode in [QaeMode::Exact, QaeMode::BiasPlus, QaeMode::BiasMinus, QaeMode::Sampled { seed: i }] {
                let est = qae::estimate(truth, eps, mode)?;
                t.check((est.value - truth).abs() <= eps * (1.0 + 1e-12), || {
                    format!("{mode:?} at ε={eps}: error {}", (est.value - truth).abs())
                });
                t.check(est.queries == (1.0 / eps).ceil() as u64, || {
                    format!("ε={eps}: {} queries", est.queries)
                });
            }
        }
    }
    Ok(t.finish(Suite::Qae))
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteResult> {
    match suite {
        Suite::LogNorm => log_norm_suite(opts),
        Suite::Sparsity => sparsity_suite(opts),
        Suite::NormBound => norm_bound_suite(opts),
        Suite::BlockRepetition => block_repetition_suite(opts),
        Suite::Stateprep => stateprep_suite(opts),
        Suite::Qae => qae_suite(opts),
    }
}

pub fn run_all(opts: &VerifyOptions) -> Result<Vec<SuiteResult>> {
    Suite::ALL.iter().map(|s| run_suite(*s, opts)).collect()
}

/// Dense spectral norm helper for callers outside this module.
pub fn dense_two_norm(grid: &Grid, model: &MarketModel) -> Result<f64> {
    Ok(assemble_f(grid, model)?.to_dense().singular_values().max())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let opts = VerifyOptions { models: 12, ..Default::default() };
        for r in run_all(&opts).unwrap() {
            assert!(r.passed(), "{:?}", r);
            assert!(r.checks > 0);
        }
    }

    #[test]
    fn flipped_stencil_fails_log_norm() {
        let opts = VerifyOptions {
            models: 6,
            fault: AssemblyOptions { flip_second_difference: true },
            ..Default::default()
        };
        assert!(!run_suite(Suite::LogNorm, &opts).unwrap().passed());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("nope").is_err());
    }
}
