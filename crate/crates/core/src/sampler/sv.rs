//! Stochastic volatility of a latent shock via the seven-component normal
//! mixture approximation of log χ²₁ and forward-filter backward-sample.

use rand::Rng;

use crate::error::Result;
use crate::priors::SvPrior;
use crate::random::{inv_gamma, std_normal, truncated_normal};

const MIX_PROB: [f64; 7] = [0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750];
const MIX_MEAN: [f64; 7] = [-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819];
const MIX_VAR: [f64; 7] = [5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261];
const LOG_CHI2_SHIFT: f64 = 1.2704;
/// Added to x² before taking logs.
pub const SV_OFFSET: f64 = 1e-6;

/// Parameters of h_t = ρh_{t-1} + η_t, η_t ~ N(0, ς²), h_1 from the stationary law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub rho: f64,
    pub sigma2: f64,
}

/// Draw mixture indicators given the current log-volatility path.
fn draw_indicators<R: Rng + ?Sized>(ystar: &[f64], h: &[f64], rng: &mut R) -> Vec<usize> {
    let mut s = Vec::with_capacity(ystar.len());
    let mut logp = [0.0; 7];
    for t in 0..ystar.len() {
        let mut mx = f64::NEG_INFINITY;
        for k in 0..7 {
            let d = ystar[t] - h[t] - (MIX_MEAN[k] - LOG_CHI2_SHIFT);
            logp[k] = MIX_PROB[k].ln() - 0.5 * MIX_VAR[k].ln() - 0.5 * d * d / MIX_VAR[k];
            mx = mx.max(logp[k]);
        }
        let mut cum = [0.0; 7];
        let mut acc = 0.0;
        for k in 0..7 {
            acc += (logp[k] - mx).exp();
            cum[k] = acc;
        }
        let u: f64 = rng.random::<f64>() * acc;
        s.push(cum.iter().position(|&c| u < c).unwrap_or(6));
    }
    s
}

/// FFBS for the linear Gaussian state space given the indicators.
fn ffbs<R: Rng + ?Sized>(ystar: &[f64], s: &[usize], p: SvParams, rng: &mut R) -> Vec<f64> {
    let n = ystar.len();
    let mut a = vec![0.0; n];
    let mut pv = vec![0.0; n];
    let mut m = 0.0;
    let mut v = p.sigma2 / (1.0 - p.rho * p.rho);
    for t in 0..n {
        if t > 0 {
            m *= p.rho;
            v = p.rho * p.rho * v + p.sigma2;
        }
        let obs_var = MIX_VAR[s[t]];
        let resid = ystar[t] - (MIX_MEAN[s[t]] - LOG_CHI2_SHIFT) - m;
        let gain = v / (v + obs_var);
        m += gain * resid;
        v *= 1.0 - gain;
        a[t] = m;
        pv[t] = v;
    }
    let mut h = vec![0.0; n];
    h[n - 1] = a[n - 1] + pv[n - 1].sqrt() * std_normal(rng);
    for t in (0..n - 1).rev() {
        // condition filtered h_t on h_{t+1} = ρh_t + η
        let denom = p.rho * p.rho * pv[t] + p.sigma2;
        let g = p.rho * pv[t] / denom;
        let mean = a[t] + g * (h[t + 1] - p.rho * a[t]);
        let var = (pv[t] - g * p.rho * pv[t]).max(1e-300);
        h[t] = mean + var.sqrt() * std_normal(rng);
    }
    h
}

/// ρ given the path: Gaussian regression proposal truncated to (−1, 1),
/// accepted by MH against the stationary density of h_1.
fn draw_rho<R: Rng + ?Sized>(h: &[f64], p: SvParams, prior: &SvPrior, rng: &mut R) -> f64 {
    let n = h.len();
    if n < 2 {
        return p.rho;
    }
    let sxx: f64 = h[..n - 1].iter().map(|v| v * v).sum();
    let sxy: f64 = (1..n).map(|t| h[t] * h[t - 1]).sum();
    let prec = sxx / p.sigma2 + 1.0 / prior.rho_var;
    let mean = (sxy / p.sigma2 + prior.rho_mean / prior.rho_var) / prec;
    let prop = truncated_normal(mean, prec.recip().sqrt(), -1.0 + 1e-10, 1.0 - 1e-10, rng);
    let init = |r: f64| 0.5 * (1.0 - r * r).ln() - 0.5 * h[0] * h[0] * (1.0 - r * r) / p.sigma2;
    let u: f64 = rng.random();
    if u.ln() < init(prop) - init(p.rho) {
        prop
    } else {
        p.rho
    }
}

fn draw_sigma2<R: Rng + ?Sized>(h: &[f64], rho: f64, prior: &SvPrior, rng: &mut R) -> Result<f64> {
    let n = h.len();
    let mut ss = (1.0 - rho * rho) * h[0] * h[0];
    for t in 1..n {
        ss += (h[t] - rho * h[t - 1]).powi(2);
    }
    inv_gamma(prior.a_vol + 0.5 * n as f64, prior.b_vol + 0.5 * ss, rng)
}

/// One full SV update for shock path `x`: indicators, path, ρ, ς².
pub fn draw_sv<R: Rng + ?Sized>(
    x: &[f64],
    h: &mut [f64],
    p: &mut SvParams,
    prior: &SvPrior,
    rng: &mut R,
) -> Result<()> {
    if x.is_empty() {
        return Ok(());
    }
    let ystar: Vec<f64> = x.iter().map(|v| (v * v + SV_OFFSET).ln()).collect();
    let s = draw_indicators(&ystar, h, rng);
    let path = ffbs(&ystar, &s, *p, rng);
    h.copy_from_slice(&path);
    p.rho = draw_rho(h, *p, prior, rng);
    p.sigma2 = draw_sigma2(h, p.rho, prior, rng)?;
    Ok(())
}
