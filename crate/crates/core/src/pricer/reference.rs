//! Classical reference solution of `dY/dτ = F Y + C`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::FdmSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    /// Dense exponential up to the dense cap, RK4 beyond it.
    #[default]
    Auto,
    /// Scaling-and-squaring exponential of the augmented matrix `[[F, C], [0, 0]]`.
    DenseExp,
    /// Classical fourth-order Runge-Kutta with `h‖F‖ ≤ 2.5`.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub method: ReferenceMethod,
    /// Trajectory sample points (at least 32).
    pub samples: usize,
    /// Largest `N` handled densely.
    pub dense_cap: usize,
    /// RK4 step satisfies `h·‖F‖_bound ≤ rk4_factor`.
    pub rk4_factor: f64,
    pub keep_snapshots: bool,
    /// Cap on RK4 work, counted as steps times rows.
    pub max_rk4_work: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            method: ReferenceMethod::Auto,
            samples: 32,
            dense_cap: 1024,
            rk4_factor: 2.5,
            keep_snapshots: false,
            max_rk4_work: 20_000_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    /// `Ỹ(τ)` at the requested horizon.
    pub y: Vec<f64>,
    /// Sample times, starting at 0.
    pub taus: Vec<f64>,
    /// `‖Ỹ(τ)‖` at each sample time.
    pub norms: Vec<f64>,
    /// `max_τ ‖Ỹ(τ)‖ / ‖Ỹ(τ_end)‖`
    pub g: f64,
    pub y_norm: f64,
    /// Root mean square of the final values.
    pub y_bar: f64,
    pub method: ReferenceMethod,
    /// `(τ, Ỹ(τ))` pairs when requested.
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Norm growth beyond this factor is reported as a step-size failure.
pub const BLOWUP_FACTOR: f64 = 1e6;

pub fn reference_solve(fdm: &FdmSystem, tau: f64, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("reference horizon must be positive, got {tau}")));
    }
    let samples = opts.samples.max(32);
    let method = match opts.method {
        ReferenceMethod::Auto if fdm.len() <= opts.dense_cap => ReferenceMethod::DenseExp,
        ReferenceMethod::Auto => ReferenceMethod::Rk4,
        m => m,
    };
    let dt = tau / samples as f64;
    let scale = l2(&fdm.f_pay).max(l2(&fdm.c) * tau).max(f64::MIN_POSITIVE);
    let mut y = fdm.f_pay.clone();
    let mut taus = vec![0.0];
    let mut norms = vec![l2(&y)];
    let mut snapshots = Vec::new();
    if opts.keep_snapshots {
        snapshots.push((0.0, y.clone()));
    }
    let mut advance: Box<dyn FnMut(&mut Vec<f64>)> = match method {
        ReferenceMethod::DenseExp => {
            let prop = augmented_propagator(fdm, dt)?;
            let n = fdm.len();
            Box::new(move |y: &mut Vec<f64>| {
                let mut v = DVector::zeros(n + 1);
                v.rows_mut(0, n).copy_from_slice(y);
                v[n] = 1.0;
                let w = &prop * v;
                y.copy_from_slice(w.rows(0, n).as_slice());
            })
        }
        _ => {
            let sub = ((dt * fdm.norm_bound / opts.rk4_factor).ceil() as usize).max(1);
            let work = sub.saturating_mul(samples).saturating_mul(fdm.len());
            if work > opts.max_rk4_work {
                return Err(Error::Capacity { what: "RK4 reference work", requested: work, cap: opts.max_rk4_work });
            }
            let h = dt / sub as f64;
            let mut stepper = Rk4::new(fdm);
            Box::new(move |y: &mut Vec<f64>| {
                for _ in 0..sub {
                    stepper.step(y, h);
                }
            })
        }
    };
    for s in 1..=samples {
        advance(&mut y);
        let nrm = l2(&y);
        if !nrm.is_finite() || nrm > BLOWUP_FACTOR * scale {
            return Err(Error::Numeric(format!(
                "reference solve blew up at τ = {} (norm {nrm:e}); reduce the step size",
                s as f64 * dt
            )));
        }
        taus.push(s as f64 * dt);
        norms.push(nrm);
        if opts.keep_snapshots {
            snapshots.push((s as f64 * dt, y.clone()));
        }
    }
    let y_norm = l2(&y);
    let g = if y_norm > 0.0 {
        norms.iter().cloned().fold(0.0, f64::max) / y_norm
    } else {
        f64::INFINITY
    };
    Ok(ReferenceSolution {
        y_bar: y_norm / (fdm.len() as f64).sqrt(),
        y,
        taus,
        norms,
        g,
        y_norm,
        method,
        snapshots,
    })
}

/// `exp(dt·[[F, C], [0, 0]])`
fn augmented_propagator(fdm: &FdmSystem, dt: f64) -> Result<DMatrix<f64>> {
    let n = fdm.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for (r, c, v) in fdm.f.triplets() {
        m[(r, c)] = v * dt;
    }
    for (r, c) in fdm.c.iter().enumerate() {
        m[(r, n)] = c * dt;
    }
    let e = m.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix exponential produced non-finite entries".into()));
    }
    Ok(e)
}

/// `e^{Fτ} f + (e^{Fτ} - I) F⁻¹ C` evaluated densely.
pub fn closed_form_solution(fdm: &FdmSystem, tau: f64) -> Result<Vec<f64>> {
    let n = fdm.len();
    if n > 2048 {
        return Err(Error::Capacity { what: "dense closed-form dimension", requested: n, cap: 2048 });
    }
    let f = fdm.f.to_dense();
    let e = (&f * tau).exp();
    let x0 = DVector::from_column_slice(&fdm.f_pay);
    let mut out = &e * x0;
    if fdm.has_boundary_source() {
        let c = DVector::from_column_slice(&fdm.c);
        let finv_c = f
            .lu()
            .solve(&c)
            .ok_or_else(|| Error::Numeric("F is singular; closed form unavailable".into()))?;
        out += (&e - DMatrix::identity(n, n)) * finv_c;
    }
    Ok(out.as_slice().to_vec())
}

struct Rk4<'a> {
    fdm: &'a FdmSystem,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(fdm: &'a FdmSystem) -> Self {
        let n = fdm.len();
        Self { fdm, k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    fn rhs(fdm: &FdmSystem, y: &[f64], out: &mut [f64]) {
        fdm.f.matvec_into(y, out);
        out.iter_mut().zip(&fdm.c).for_each(|(o, c)| *o += c);
    }

    fn step(&mut self, y: &mut [f64], h: f64) {
        let n = y.len();
        Self::rhs(self.fdm, y, &mut self.k[0]);
        for (stage, w) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            let (done, rest) = self.k.split_at_mut(stage);
            for i in 0..n {
                self.tmp[i] = y[i] + w * h * done[stage - 1][i];
            }
            Self::rhs(self.fdm, &self.tmp, &mut rest[0]);
        }
        for i in 0..n {
            y[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }
}
