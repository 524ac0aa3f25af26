//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the library's closed forms.

#![allow(dead_code)]

use nalgebra::DMatrix;
use qfdm::berry::ExtendedState;
use qfdm::gridding::Grid;
use qfdm::model::MarketModel;
use qfdm::operator::FdmSystem;
use twofloat::TwoFloat;

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// European call or put by quadrature over the terminal normal variate,
/// split at the strike so the kink sits on a panel edge.
pub fn vanilla_quadrature(r: f64, sigma: f64, s0: f64, strike: f64, t: f64, call: bool) -> f64 {
    let sd = sigma * t.sqrt();
    let mu = (r - 0.5 * sigma * sigma) * t;
    let s_of = |z: f64| s0 * (mu + sd * z).exp();
    let z_k = ((strike / s0).ln() - mu) / sd;
    let pay = |z: f64| {
        let s = s_of(z);
        let v = if call { s - strike } else { strike - s };
        v.max(0.0) * phi(z)
    };
    let (a, b) = if call { (z_k.max(-14.0), 14.0) } else { (-14.0, z_k.min(14.0)) };
    if a >= b {
        return 0.0;
    }
    (-r * t).exp() * simpson(pay, a, b, 20_000)
}

/// Transition density of `ln S` killed on leaving `[a, b]`, as a sine series
/// with the drift removed by a Girsanov factor.
pub fn killed_density(r: f64, sigma: f64, x0: f64, a: f64, b: f64, t: f64, y: f64) -> f64 {
    let w = b - a;
    let mu = r - 0.5 * sigma * sigma;
    let s2 = sigma * sigma;
    let girsanov = (mu * (y - x0) / s2 - mu * mu * t / (2.0 * s2)).exp();
    let mut sum = 0.0;
    for n in 1..100_000 {
        let k = n as f64 * std::f64::consts::PI / w;
        let decay = (-0.5 * s2 * k * k * t).exp();
        if decay < 1e-18 {
            break;
        }
        sum += (k * (x0 - a)).sin() * (k * (y - a)).sin() * decay;
    }
    girsanov * 2.0 / w * sum
}

/// Double knock-out call or put by quadrature of the killed density.
pub fn double_knockout_quadrature(
    r: f64,
    sigma: f64,
    s0: f64,
    strike: f64,
    lower: f64,
    upper: f64,
    t: f64,
    call: bool,
) -> f64 {
    let (a, b) = (lower.ln(), upper.ln());
    let x0 = s0.ln();
    let xk = strike.ln().clamp(a, b);
    let (lo, hi) = if call { (xk, b) } else { (a, xk) };
    if lo >= hi {
        return 0.0;
    }
    let f = |y: f64| {
        let s = y.exp();
        let v = if call { s - strike } else { strike - s };
        v.max(0.0) * killed_density(r, sigma, x0, a, b, t, y)
    };
    (-r * t).exp() * simpson(f, lo, hi, 4_000)
}

/// `(E[S_t 1{S_t beyond H}], P[S_t beyond H])` for `H = S₀e^{±lr}` by
/// quadrature. `upper` selects the side.
pub fn lognormal_tail_quadrature(r: f64, sigma: f64, s0: f64, lr: f64, t: f64, upper: bool) -> (f64, f64) {
    let sd = sigma * t.sqrt();
    let mu = (r - 0.5 * sigma * sigma) * t;
    let edge = if upper { (lr - mu) / sd } else { (-lr - mu) / sd };
    let (a, b) = if upper { (edge, edge.max(0.0) + 40.0) } else { (edge.min(0.0) - 40.0, edge) };
    let first = simpson(|z| s0 * (mu + sd * z).exp() * phi(z), a, b, 40_000);
    let prob = simpson(phi, a, b, 40_000);
    (first, prob)
}

fn kron_axis(m: &DMatrix<f64>, n: usize, d: usize, axis: usize) -> DMatrix<f64> {
    let left = DMatrix::<f64>::identity(n.pow(axis as u32), n.pow(axis as u32));
    let right_dim = n.pow((d - 1 - axis) as u32);
    let right = DMatrix::<f64>::identity(right_dim, right_dim);
    left.kronecker(m).kronecker(&right)
}

/// Dense `F` built from Kronecker products of the 1-D stencils, axis 0
/// most significant.
pub fn dense_operator(grid: &Grid, model: &MarketModel) -> DMatrix<f64> {
    let n = grid.n_gr();
    let d = grid.dim();
    let h = grid.h();
    let d1 = DMatrix::from_fn(n, n, |i, j| {
        if j == i + 1 {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        }
    });
    let d2 = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -2.0
        } else if i.abs_diff(j) == 1 {
            1.0
        } else {
            0.0
        }
    });
    let len = grid.len();
    let mut f = DMatrix::zeros(len, len);
    let s = &model.sigmas;
    for i in 0..d {
        let a = s[i] * s[i] / (2.0 * h[i] * h[i]);
        let b = (model.r - 0.5 * s[i] * s[i]) / (2.0 * h[i]);
        f += kron_axis(&d2, n, d, i) * a + kron_axis(&d1, n, d, i) * b;
        for j in i + 1..d {
            let c = s[i] * s[j] * model.rho[i][j] / (4.0 * h[i] * h[j]);
            f += kron_axis(&d1, n, d, i) * kron_axis(&d1, n, d, j) * c;
        }
    }
    f
}

/// `e^{Fτ} f + ∫₀^τ e^{Fs} C ds` in double-double arithmetic by a fixed-step
/// Taylor propagator. Each step takes `h‖F‖_∞ ≤ theta` and sums terms until
/// they fall below `1e-36` of the running sum.
pub fn taylor_reference(fdm: &FdmSystem, tau: f64, theta: f64) -> ExtendedState {
    let n = fdm.len();
    let norm = fdm.f.norm_inf();
    let steps = ((tau * norm / theta).ceil() as usize).max(1);
    let h = TwoFloat::from(tau) / steps as f64;
    let zero = TwoFloat::from(0.0);
    let mut y: Vec<TwoFloat> = fdm.f_pay.iter().map(|&v| TwoFloat::from(v)).collect();
    let mut term = vec![zero; n];
    let mut next = vec![zero; n];
    for _ in 0..steps {
        let mut sum = y.clone();
        term.copy_from_slice(&y);
        let mut l = 0usize;
        loop {
            l += 1;
            let s = h / l as f64;
            for r in 0..n {
                let (cols, vals) = fdm.f.row(r);
                let mut acc = zero;
                for (c, v) in cols.iter().zip(vals) {
                    acc += term[*c] * *v;
                }
                if l == 1 {
                    acc += TwoFloat::from(fdm.c[r]);
                }
                next[r] = acc * s;
            }
            std::mem::swap(&mut term, &mut next);
            let mut tn = 0.0;
            let mut sn = 0.0;
            for (a, t) in sum.iter_mut().zip(&term) {
                *a += *t;
                tn += f64::from(*t).powi(2);
                sn += f64::from(*a).powi(2);
            }
            if l > 4 && tn.sqrt() <= 1e-36 * sn.sqrt() {
                break;
            }
        }
        y = sum;
    }
    ExtendedState { hi: y.iter().map(|v| v.hi()).collect(), lo: y.iter().map(|v| v.lo()).collect() }
}

/// Readout error bound recomputed from the report's measured quantities.
pub fn readout_bound(
    disc: f64,
    p_norm: f64,
    z: f64,
    p: usize,
    gamma: f64,
    n: usize,
    p_dot_x: f64,
    eps1: f64,
    eps2: f64,
) -> f64 {
    let p1 = (p + 1) as f64;
    let eps_psi = eps1.max(eps2);
    disc * (p_norm * z / p1.sqrt() * (eps_psi + eps1)
        + p_dot_x.abs() * z / (gamma * (p1 * n as f64).sqrt()) * (eps_psi + eps2))
}
