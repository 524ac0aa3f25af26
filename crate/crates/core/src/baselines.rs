//! Independent price oracles: Black-Scholes closed form, the image-series
//! double knock-out, and an exact-step Monte Carlo with optional
//! Brownian-bridge barrier correction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::{norm_cdf, norm_interval};
use crate::error::{Error, Result};
use crate::model::{BoundaryKind, MarketModel, ProductSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

/// Black-Scholes price of a European call or put.
pub fn bs_vanilla(r: f64, sigma: f64, s0: f64, strike: f64, t: f64, kind: OptionKind) -> Result<f64> {
    if !(sigma > 0.0 && t > 0.0 && s0 > 0.0 && strike >= 0.0) {
        return Err(Error::InvalidInput("bs_vanilla needs σ, T, S0 > 0 and K ≥ 0".into()));
    }
    let df = (-r * t).exp();
    if strike == 0.0 {
        return Ok(match kind {
            OptionKind::Call => s0,
            OptionKind::Put => 0.0,
        });
    }
    let sd = sigma * t.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * sigma * sigma) * t) / sd;
    let d2 = d1 - sd;
    Ok(match kind {
        OptionKind::Call => s0 * norm_cdf(d1) - strike * df * norm_cdf(d2),
        OptionKind::Put => strike * df * norm_cdf(-d2) - s0 * norm_cdf(-d1),
    })
}

/// Maximum number of image pairs in the double-barrier series.
pub const IMAGE_TERM_CAP: usize = 200;
/// Series truncation threshold on the magnitude of an image pair.
pub const IMAGE_TERM_TOL: f64 = 1e-10;

/// `∫_lo^hi e^{αy} g(y - c) dy` where `g` is the `N(0, s²)` density.
fn exp_gauss_integral(alpha: f64, c: f64, s: f64, lo: f64, hi: f64) -> f64 {
    let shift = c + alpha * s * s;
    let mass = norm_interval((lo - shift) / s, (hi - shift) / s);
    if mass == 0.0 {
        return 0.0;
    }
    (alpha * c + 0.5 * alpha * alpha * s * s).exp() * mass
}

/// Continuously monitored double knock-out price via the method of images.
pub fn barrier_double_knockout(
    r: f64,
    sigma: f64,
    s0: f64,
    strike: f64,
    lower: f64,
    upper: f64,
    t: f64,
    kind: OptionKind,
) -> Result<f64> {
    if !(0.0 < lower && lower < s0 && s0 < upper) {
        return Err(Error::InvalidInput("double knock-out needs L < S0 < U".into()));
    }
    if !(sigma > 0.0 && t > 0.0) {
        return Err(Error::InvalidInput("double knock-out needs σ, T > 0".into()));
    }
    let mu = r - 0.5 * sigma * sigma;
    let theta = mu / (sigma * sigma);
    let s = sigma * t.sqrt();
    let a = (lower / s0).ln();
    let b = (upper / s0).ln();
    let w = b - a;
    let kx = (strike / s0).ln();
    let (lo, hi) = match kind {
        OptionKind::Call => (kx.max(a), b),
        OptionKind::Put => (a, kx.min(b)),
    };
    if lo >= hi {
        return Ok(0.0);
    }
    // payoff on [lo, hi] against the killed density shifted to centre c
    let piece = |c: f64| -> f64 {
        let up = s0 * exp_gauss_integral(theta + 1.0, c, s, lo, hi);
        let flat = strike * exp_gauss_integral(theta, c, s, lo, hi);
        match kind {
            OptionKind::Call => up - flat,
            OptionKind::Put => flat - up,
        }
    };
    let image = |n: i64| -> f64 {
        let shift = 2.0 * n as f64 * w;
        piece(shift) - piece(2.0 * b + shift)
    };
    let mut total = image(0);
    let mut converged = false;
    for n in 1..=IMAGE_TERM_CAP as i64 {
        let pair = image(n) + image(-n);
        total += pair;
        if pair.abs() < IMAGE_TERM_TOL && image(n).abs() < IMAGE_TERM_TOL && image(-n).abs() < IMAGE_TERM_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "image series did not reach {IMAGE_TERM_TOL:e} within {IMAGE_TERM_CAP} terms"
        )));
    }
    Ok((-r * t).exp() * (-mu * mu * t / (2.0 * sigma * sigma)).exp() * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// Multiply each step by the bridge survival probability.
    pub bridge: bool,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::InvalidInput("Monte Carlo needs paths ≥ 1 and steps ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub price: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// Probability that a Brownian bridge with variance rate `var` between
/// `xa` and `xb` over `dt` touches `barrier`, both ends on the same side.
pub fn bridge_cross_prob(xa: f64, xb: f64, barrier: f64, var: f64, dt: f64) -> f64 {
    let (da, db) = (barrier - xa, barrier - xb);
    if da * db <= 0.0 {
        return 1.0;
    }
    (-2.0 * da * db / (var * dt)).exp()
}

/// Discounted payoff mean and standard error under exact lognormal steps.
/// Knock-out faces kill a path when a monitored price leaves the box; other
/// face kinds are artificial boundaries and are ignored.
pub fn mc_price(model: &MarketModel, product: &ProductSpec, cfg: &McConfig) -> Result<McResult> {
    cfg.validate()?;
    let d = model.dim();
    let factor = model.correlation_factor()?;
    let dt = product.maturity / cfg.steps as f64;
    let sq = dt.sqrt();
    let drift: Vec<f64> = (0..d).map(|i| model.log_drift(i) * dt).collect();
    let var: Vec<f64> = model.sigmas.iter().map(|s| s * s).collect();
    let lo: Vec<Option<f64>> = (0..d)
        .map(|i| matches!(product.boundaries[i].lower, BoundaryKind::KnockOut).then(|| product.lower[i].ln()))
        .collect();
    let hi: Vec<Option<f64>> = (0..d)
        .map(|i| matches!(product.boundaries[i].upper, BoundaryKind::KnockOut).then(|| product.upper[i].ln()))
        .collect();
    let x0: Vec<f64> = product.spot.iter().map(|s| s.ln()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = vec![0.0; d];
    let mut dz = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut acc = PairwiseMean::default();
    for _ in 0..cfg.paths {
        x.copy_from_slice(&x0);
        let mut weight = 1.0;
        for _ in 0..cfg.steps {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            factor.correlate(&z, &mut dz);
            for i in 0..d {
                let prev = x[i];
                x[i] += drift[i] + model.sigmas[i] * sq * dz[i];
                if weight == 0.0 {
                    continue;
                }
                let out = lo[i].is_some_and(|l| x[i] <= l) || hi[i].is_some_and(|u| x[i] >= u);
                if out {
                    weight = 0.0;
                } else if cfg.bridge {
                    if let Some(u) = hi[i] {
                        weight *= 1.0 - bridge_cross_prob(prev, x[i], u, var[i], dt);
                    }
                    if let Some(l) = lo[i] {
                        weight *= 1.0 - bridge_cross_prob(prev, x[i], l, var[i], dt);
                    }
                }
            }
        }
        let value = if weight > 0.0 {
            for i in 0..d {
                s[i] = x[i].exp();
            }
            weight * product.payoff.eval(&s)?
        } else {
            0.0
        };
        acc.push(value);
    }
    let (mean, var_hat) = acc.finish();
    let disc = (-model.r * product.maturity).exp();
    Ok(McResult {
        price: disc * mean,
        std_error: disc * (var_hat / cfg.paths as f64).sqrt(),
        paths: cfg.paths,
    })
}

/// Monte Carlo estimate of the probability that a Brownian bridge from 0 to
/// `end` over `[0, t]` (unit variance rate) reaches `level`, using `steps`
/// exact bridge increments and the per-step crossing probability.
pub fn mc_bridge_hit(level: f64, end: f64, t: f64, paths: usize, steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = t / steps as f64;
    let mut acc = PairwiseMean::default();
    for _ in 0..paths {
        let mut x = 0.0;
        let mut survive = 1.0;
        for j in 0..steps {
            let remaining = t - j as f64 * dt;
            let next = if j + 1 == steps {
                end
            } else {
                let mean = x + (end - x) * dt / remaining;
                let var = dt * (remaining - dt) / remaining;
                let zn: f64 = StandardNormal.sample(&mut rng);
                mean + var.sqrt() * zn
            };
            survive *= 1.0 - bridge_cross_prob(x, next, level, 1.0, dt);
            x = next;
            if survive == 0.0 {
                break;
            }
        }
        acc.push(1.0 - survive);
    }
    acc.finish().0
}

/// Streaming mean/variance with pairwise block summation so totals do not
/// depend on accumulated rounding order beyond block size.
#[derive(Default)]
struct PairwiseMean {
    block: Vec<f64>,
    sums: Vec<(f64, f64)>,
    n: usize,
}

impl PairwiseMean {
    const BLOCK: usize = 1024;

    fn push(&mut self, v: f64) {
        self.block.push(v);
        self.n += 1;
        if self.block.len() == Self::BLOCK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.block.is_empty() {
            return;
        }
        let s: f64 = pairwise(&self.block);
        let sq: Vec<f64> = self.block.iter().map(|v| v * v).collect();
        self.sums.push((s, pairwise(&sq)));
        self.block.clear();
    }

    fn finish(mut self) -> (f64, f64) {
        self.flush();
        let n = self.n as f64;
        let s = pairwise(&self.sums.iter().map(|p| p.0).collect::<Vec<_>>());
        let sq = pairwise(&self.sums.iter().map(|p| p.1).collect::<Vec<_>>());
        let mean = s / n;
        let var = if self.n > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        (mean, var)
    }
}

fn pairwise(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise(&v[..m]) + pairwise(&v[m..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FacePair, PayoffSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn parity_and_zero_strike() {
        let c = bs_vanilla(0.01, 0.2, 100.0, 95.0, 1.0, OptionKind::Call).unwrap();
        let p = bs_vanilla(0.01, 0.2, 100.0, 95.0, 1.0, OptionKind::Put).unwrap();
        assert_abs_diff_eq!(c - p, 100.0 - 95.0 * (-0.01f64).exp(), epsilon = 1e-12);
        let z = bs_vanilla(0.01, 0.2, 100.0, 1e-12, 1.0, OptionKind::Call).unwrap();
        assert_abs_diff_eq!(z, 100.0, epsilon = 1e-9);
    }

    #[test]
    fn barriers_far_away_recover_vanilla() {
        let v = bs_vanilla(0.01, 0.2, 100.0, 100.0, 1.0, OptionKind::Call).unwrap();
        let b = barrier_double_knockout(0.01, 0.2, 100.0, 100.0, 1e-6, 1e6, 1.0, OptionKind::Call).unwrap();
        assert_abs_diff_eq!(v, b, epsilon = 1e-8);
        let tight = barrier_double_knockout(0.01, 0.2, 100.0, 100.0, 80.0, 120.0, 1.0, OptionKind::Call).unwrap();
        assert!(tight > 0.0 && tight < v);
    }

    #[test]
    fn bridge_probability_edges() {
        assert_eq!(bridge_cross_prob(0.0, 2.0, 1.0, 1.0, 1.0), 1.0);
        assert_abs_diff_eq!(bridge_cross_prob(0.0, 0.0, 1.0, 1.0, 1.0), (-2f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn mc_is_reproducible_and_martingale() {
        let model = MarketModel::single(0.01, 0.2);
        let product = ProductSpec {
            maturity: 1.0,
            lower: vec![1e-3],
            upper: vec![1e5],
            spot: vec![100.0],
            payoff: PayoffSpec::Table { weights: vec![1.0], knots: vec![0.0, 1e6], values: vec![0.0, 1e6] },
            boundaries: vec![FacePair::knock_out()],
            payoff_bound: vec![0.0, 1.0],
            allow_discounted_linear: false,
        };
        let cfg = McConfig { paths: 20_000, steps: 4, seed: 3, bridge: false };
        let a = mc_price(&model, &product, &cfg).unwrap();
        let b = mc_price(&model, &product, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.price - 100.0).abs() < 3.0 * a.std_error, "{a:?}");
    }
}
