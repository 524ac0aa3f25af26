//! Truncated-Taylor block linear system for `dY/dτ = F Y + C`.
//!
//! Block `0` holds the initial vector. Each of the `m` time steps spends
//! `k+1` blocks: the Taylor terms `(F h_t)^j/j!·(…)` built one multiplication
//! at a time, then a summing block that becomes the next step's start. After
//! the last step the solution is copied `p` more times. The modified system
//! appends `p+1` blocks equal to `γ·𝟙`.
//!
//! Every block depends only on earlier blocks, so the matrix is block
//! lower-triangular and a forward substitution is an exact direct solve.

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::gridding::DEFAULT_ROW_CAP;
use crate::operator::FdmSystem;
use crate::sparse::{gmres, CsrMatrix, GmresOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryParams {
    /// Time steps.
    pub m: usize,
    /// Taylor order.
    pub k: usize,
    /// Extra copies of the final state.
    pub p: usize,
    /// Integration horizon.
    pub tau: f64,
}

impl BerryParams {
    pub fn new(m: usize, k: usize, p: usize, tau: f64) -> Result<Self> {
        if m == 0 || k == 0 || p == 0 {
            return Err(Error::Parameter(format!("m, k, p must be ≥ 1 (got {m}, {k}, {p})")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Parameter(format!("integration horizon must be positive, got {tau}")));
        }
        Ok(Self { m, k, p, tau })
    }

    pub fn h_t(&self) -> f64 {
        self.tau / self.m as f64
    }

    /// Index of the first solution block, `m(k+1)`.
    pub fn solution_start(&self) -> usize {
        self.m * (self.k + 1)
    }

    /// `q` of the plain system (`m(k+1)+p`).
    pub fn q_plain(&self) -> usize {
        self.solution_start() + self.p
    }

    /// `q` of the padded system (`m(k+1)+2p+1`).
    pub fn q_modified(&self) -> usize {
        self.q_plain() + self.p + 1
    }

    pub fn blocks(&self, modified: bool) -> usize {
        1 + if modified { self.q_modified() } else { self.q_plain() }
    }

    pub fn label(&self, j: usize) -> BlockLabel {
        let s = self.solution_start();
        if j < s {
            BlockLabel::Garbage
        } else if j <= s + self.p {
            BlockLabel::Solution
        } else {
            BlockLabel::Gamma
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLabel {
    Garbage,
    Solution,
    Gamma,
}

/// Inputs to the parameter rule beyond the operator itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamInputs {
    pub tau_ter: f64,
    pub maturity: f64,
    pub eps: f64,
    /// Trajectory growth `max_τ ‖Ỹ(τ)‖ / ‖Ỹ(τ_ter)‖`.
    pub g: f64,
    pub kappa_v: f64,
    /// `‖Ỹ(τ_ter)‖` from the reference solve.
    pub y_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamChoice {
    pub params: BerryParams,
    pub omega: f64,
    /// Taylor order before clamping to ≥ 2.
    pub k_raw: usize,
}

/// `p = ⌈τ‖F‖⌉` (with the analytic bound for `‖F‖`), `m = p`, and
/// `k = ⌊2 ln Ω / ln ln Ω⌋` clamped to at least 2.
pub fn choose_params(fdm: &FdmSystem, inp: &ParamInputs) -> Result<ParamChoice> {
    if !(inp.g > 0.0 && inp.kappa_v > 0.0) {
        return Err(Error::Parameter("g and κ_V estimates must be positive".into()));
    }
    if !(inp.eps > 0.0 && inp.y_norm > 0.0) {
        return Err(Error::Parameter("eps and ‖Ỹ(τ_ter)‖ must be positive".into()));
    }
    let p = p_from_norm(inp.tau_ter, fdm.norm_bound);
    let f_norm = l2(&fdm.f_pay);
    let c_norm = l2(&fdm.c);
    let omega = 70.0 * inp.g * inp.kappa_v * (p as f64).powf(1.5) * (f_norm + inp.maturity * c_norm)
        / (inp.eps * inp.y_norm);
    let k_raw = taylor_order(omega)?;
    Ok(ParamChoice {
        params: BerryParams::new(p, k_raw.max(2), p, inp.tau_ter)?,
        omega,
        k_raw,
    })
}

/// `⌈τ‖F‖⌉`, at least 1.
pub fn p_from_norm(tau: f64, norm: f64) -> usize {
    ((tau * norm).ceil() as usize).max(1)
}

/// `⌊2 ln Ω / ln ln Ω⌋`
pub fn taylor_order(omega: f64) -> Result<usize> {
    if !(omega > std::f64::consts::E) {
        return Err(Error::Parameter(format!(
            "Ω = {omega} ≤ e leaves ln ln Ω undefined; tighten eps or supply larger g/κ_V"
        )));
    }
    let l = omega.ln();
    Ok((2.0 * l / l.ln()).floor() as usize)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Materialized block system.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub params: BerryParams,
    pub n: usize,
    pub gamma: Option<f64>,
}

impl BlockSystem {
    pub fn blocks(&self) -> usize {
        self.params.blocks(self.gamma.is_some())
    }
}

fn check_rows(n: usize, blocks: usize, cap: usize) -> Result<()> {
    let rows = n.checked_mul(blocks).unwrap_or(usize::MAX);
    if rows > cap {
        return Err(Error::Capacity {
            what: "block system rows",
            requested: rows,
            cap,
        });
    }
    Ok(())
}

/// Plain system `C_{m,k,p}(F h_t) X = e_0⊗f + h_t Σ_i e_{i(k+1)+1}⊗C`.
pub fn build_plain_system(fdm: &FdmSystem, params: &BerryParams) -> Result<BlockSystem> {
    assemble(fdm, params, None, DEFAULT_ROW_CAP)
}

/// Padded system with `p+1` trailing identity blocks and right-hand side `γ·𝟙`.
pub fn build_modified_system(fdm: &FdmSystem, params: &BerryParams, gamma: f64) -> Result<BlockSystem> {
    if !(gamma >= 0.0) {
        return Err(Error::Parameter(format!("γ must be nonnegative, got {gamma}")));
    }
    assemble(fdm, params, Some(gamma), DEFAULT_ROW_CAP)
}

pub fn assemble(fdm: &FdmSystem, params: &BerryParams, gamma: Option<f64>, cap: usize) -> Result<BlockSystem> {
    let n = fdm.len();
    let blocks = params.blocks(gamma.is_some());
    check_rows(n, blocks, cap)?;
    let (m, k, p) = (params.m, params.k, params.p);
    let ht = params.h_t();
    let rows = n * blocks;
    let mut trips = Vec::with_capacity(rows + m * k * fdm.f.nnz() + m * (k + 1) * n + p * n);
    for r in 0..rows {
        trips.push((r, r, 1.0));
    }
    let mut rhs = vec![0.0; rows];
    rhs[..n].copy_from_slice(&fdm.f_pay);
    for i in 0..m {
        let base = i * (k + 1);
        for j in 1..=k {
            let (row_b, col_b) = ((base + j) * n, (base + j - 1) * n);
            let s = -ht / j as f64;
            for (r, c, v) in fdm.f.triplets() {
                trips.push((row_b + r, col_b + c, s * v));
            }
        }
        for (o, cv) in fdm.c.iter().enumerate() {
            rhs[(base + 1) * n + o] += ht * cv;
        }
        let sum_b = (base + k + 1) * n;
        for j in 0..=k {
            for o in 0..n {
                trips.push((sum_b + o, (base + j) * n + o, -1.0));
            }
        }
    }
    let s = params.solution_start();
    for j in s + 1..=s + p {
        for o in 0..n {
            trips.push((j * n + o, (j - 1) * n + o, -1.0));
        }
    }
    if let Some(g) = gamma {
        rhs[(s + p + 1) * n..].iter_mut().for_each(|v| *v = g);
    }
    Ok(BlockSystem {
        matrix: CsrMatrix::from_triplets(rows, rows, trips)?,
        rhs,
        params: *params,
        n,
        gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Sparse forward substitution on the materialized system.
    Direct,
    /// Restarted GMRES on the materialized system (tolerance 1e-10).
    Iterative,
    /// Block recurrence without materializing the matrix.
    Structured,
    /// `Direct` while the system fits the row cap, else `Structured`.
    Auto,
}

/// Block-partitioned solution.
#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub params: BerryParams,
    pub n: usize,
    pub gamma: Option<f64>,
    /// Every block, when the route stores them.
    pub blocks: Option<Vec<Vec<f64>>>,
    /// Final state `x_m` (first solution block).
    pub x_m: Vec<f64>,
    /// `Σ_{j < m(k+1)} ‖X_j‖²`
    pub garbage_norm_sq: f64,
    /// Max relative pairwise gap among solution copies.
    pub repetition_gap: f64,
    /// Max absolute deviation of padding blocks from `γ`.
    pub gamma_gap: f64,
    pub method: SolveMethod,
}

impl BlockSolution {
    pub fn label(&self, j: usize) -> BlockLabel {
        self.params.label(j)
    }

    /// `Z² = ⟨gar|gar⟩ + (p+1)‖x_m‖² + (p+1)Nγ²`
    pub fn z_squared(&self) -> f64 {
        let p1 = (self.params.p + 1) as f64;
        let g = self.gamma.unwrap_or(0.0);
        self.garbage_norm_sq + p1 * l2(&self.x_m).powi(2) + p1 * self.n as f64 * g * g
    }
}

/// Relative tolerance on agreement of the repeated solution blocks.
pub const REPETITION_TOL: f64 = 1e-8;

/// Solves a materialized system and partitions the result.
pub fn solve_and_extract(sys: &BlockSystem, method: SolveMethod) -> Result<BlockSolution> {
    let x = match method {
        SolveMethod::Direct | SolveMethod::Auto => sys.matrix.solve_direct(&sys.rhs)?,
        SolveMethod::Iterative => {
            let out = gmres(&sys.matrix, &sys.rhs, GmresOptions::default())?;
            out.x
        }
        SolveMethod::Structured => {
            return Err(Error::InvalidInput(
                "structured route works from the operator; use solve_structured".into(),
            ))
        }
    };
    let n = sys.n;
    let blocks: Vec<Vec<f64>> = x.chunks(n).map(|c| c.to_vec()).collect();
    partition(blocks, sys.params, sys.gamma, method)
}

fn partition(blocks: Vec<Vec<f64>>, params: BerryParams, gamma: Option<f64>, method: SolveMethod) -> Result<BlockSolution> {
    let n = blocks[0].len();
    let s = params.solution_start();
    let garbage_norm_sq = blocks[..s].iter().map(|b| l2(b).powi(2)).sum();
    let x_m = blocks[s].clone();
    let scale = l2(&x_m).max(f64::MIN_POSITIVE);
    let repetition_gap = blocks[s..=s + params.p]
        .iter()
        .map(|b| b.iter().zip(&x_m).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() / scale)
        .fold(0.0, f64::max);
    let gamma_gap = match gamma {
        Some(g) => blocks[s + params.p + 1..]
            .iter()
            .flat_map(|b| b.iter().map(move |v| (v - g).abs()))
            .fold(0.0, f64::max),
        None => 0.0,
    };
    let tol = if method == SolveMethod::Iterative { 1e-6 } else { REPETITION_TOL };
    if repetition_gap > tol {
        return Err(Error::Numeric(format!(
            "solution blocks disagree: relative gap {repetition_gap:e}"
        )));
    }
    Ok(BlockSolution {
        params,
        n,
        gamma,
        blocks: Some(blocks),
        x_m,
        garbage_norm_sq,
        repetition_gap,
        gamma_gap,
        method,
    })
}

/// Forward substitution through the block recurrence using only the
/// operator; memory is `O(N)` regardless of `m`, `k`, `p`. With
/// `keep_blocks` every block is also stored.
pub fn solve_structured(fdm: &FdmSystem, params: &BerryParams, gamma: Option<f64>, keep_blocks: bool) -> Result<BlockSolution> {
    let n = fdm.len();
    let ht = params.h_t();
    let mut stored: Vec<Vec<f64>> = Vec::new();
    let mut start = fdm.f_pay.clone();
    let mut garbage = 0.0;
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut sum = vec![0.0; n];
    for _ in 0..params.m {
        garbage += l2(&start).powi(2);
        if keep_blocks {
            stored.push(start.clone());
        }
        sum.copy_from_slice(&start);
        term.copy_from_slice(&start);
        for j in 1..=params.k {
            fdm.f.matvec_into(&term, &mut next);
            let s = ht / j as f64;
            for o in 0..n {
                next[o] *= s;
            }
            if j == 1 {
                for o in 0..n {
                    next[o] += ht * fdm.c[o];
                }
            }
            std::mem::swap(&mut term, &mut next);
            for o in 0..n {
                sum[o] += term[o];
            }
            garbage += l2(&term).powi(2);
            if keep_blocks {
                stored.push(term.clone());
            }
        }
        std::mem::swap(&mut start, &mut sum);
        if !start.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("block recurrence overflowed".into()));
        }
    }
    if keep_blocks {
        for _ in 0..=params.p {
            stored.push(start.clone());
        }
        if let Some(g) = gamma {
            for _ in 0..=params.p {
                stored.push(vec![g; n]);
            }
        }
        let mut sol = partition(stored, *params, gamma, SolveMethod::Structured)?;
        sol.garbage_norm_sq = garbage;
        return Ok(sol);
    }
    Ok(BlockSolution {
        params: *params,
        n,
        gamma,
        blocks: None,
        x_m: start,
        garbage_norm_sq: garbage,
        repetition_gap: 0.0,
        gamma_gap: 0.0,
        method: SolveMethod::Structured,
    })
}

/// Final state kept as an unevaluated sum `hi + lo` of two `f64` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub hi: Vec<f64>,
    pub lo: Vec<f64>,
}

impl ExtendedState {
    pub fn to_f64(&self) -> Vec<f64> {
        self.hi.iter().zip(&self.lo).map(|(h, l)| h + l).collect()
    }

    /// `‖self - other‖ / ‖other‖` with the differences formed before rounding.
    pub fn rel_distance(&self, other: &ExtendedState) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.hi.len() {
            let a = TwoFloat::new_add(self.hi[i], self.lo[i]);
            let b = TwoFloat::new_add(other.hi[i], other.lo[i]);
            num += f64::from(a - b).powi(2);
            den += f64::from(b).powi(2);
        }
        (num / den).sqrt()
    }
}

fn split(v: &[TwoFloat]) -> ExtendedState {
    ExtendedState {
        hi: v.iter().map(|x| x.hi()).collect(),
        lo: v.iter().map(|x| x.lo()).collect(),
    }
}

/// The block recurrence of [`solve_structured`] in double-double
/// arithmetic, returning `x_m` only. The step `τ/m` is formed in extended
/// precision so that `m` steps span `τ` exactly.
pub fn solve_structured_extended(fdm: &FdmSystem, params: &BerryParams) -> Result<ExtendedState> {
    let n = fdm.len();
    let ht = TwoFloat::from(params.tau) / params.m as f64;
    let mut start: Vec<TwoFloat> = fdm.f_pay.iter().map(|&v| TwoFloat::from(v)).collect();
    let zero = TwoFloat::from(0.0);
    let mut term = vec![zero; n];
    let mut next = vec![zero; n];
    for _ in 0..params.m {
        let mut sum = start.clone();
        term.copy_from_slice(&start);
        for j in 1..=params.k {
            let s = ht / j as f64;
            for (r, out) in next.iter_mut().enumerate() {
                let (cols, vals) = fdm.f.row(r);
                let mut acc = zero;
                for (c, v) in cols.iter().zip(vals) {
                    acc += term[*c] * *v;
                }
                if j == 1 {
                    acc += TwoFloat::from(fdm.c[r]);
                }
                *out = acc * s;
            }
            std::mem::swap(&mut term, &mut next);
            for (a, t) in sum.iter_mut().zip(&term) {
                *a += *t;
            }
        }
        start = sum;
        if !start.iter().all(|v| v.hi().is_finite()) {
            return Err(Error::Numeric("block recurrence overflowed".into()));
        }
    }
    Ok(split(&start))
}

/// Picks a route by size: materialize and solve directly while the system
/// fits `row_cap`, otherwise stream.
pub fn solve(fdm: &FdmSystem, params: &BerryParams, gamma: Option<f64>, method: SolveMethod, row_cap: usize) -> Result<BlockSolution> {
    let rows = fdm.len().saturating_mul(params.blocks(gamma.is_some()));
    match method {
        SolveMethod::Structured => solve_structured(fdm, params, gamma, false),
        SolveMethod::Auto if rows > row_cap => solve_structured(fdm, params, gamma, false),
        _ => {
            let sys = assemble(fdm, params, gamma, row_cap)?;
            solve_and_extract(&sys, method)
        }
    }
}
