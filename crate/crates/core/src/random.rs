//! Random variate generation: RNG substreams, gamma-family draws, truncated
//! normals, inverse Wishart and the generalized inverse Gaussian.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SulpError};
use crate::linalg::spd_cholesky;

pub type SulpRng = ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream keyed by `seed` and a path of counters (cell, replication, ...).
///
/// The stream depends only on the key, never on scheduling order.
pub fn substream(seed: u64, path: &[u64]) -> SulpRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut id = 0x5EED_u64;
    for &p in path {
        id = mix(id ^ mix(p));
    }
    rng.set_stream(id);
    rng
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma(shape, rate).
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
        return Err(SulpError::InvalidParameter(format!(
            "gamma(shape={shape}, rate={rate})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| SulpError::InvalidParameter(e.to_string()))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

/// Inverse gamma with density ∝ x^{-shape-1} exp(-scale/x).
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / gamma(shape, scale, rng)?)
}

fn std_normal_cdf() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal truncated to `[lo, hi]`.
pub fn truncated_std_normal<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo < hi);
    if lo >= 4.0 {
        return upper_tail(lo, hi, rng);
    }
    if hi <= -4.0 {
        return -upper_tail(-hi, -lo, rng);
    }
    let n = std_normal_cdf();
    let (pl, ph) = (n.cdf(lo), n.cdf(hi));
    loop {
        let u: f64 = rng.random();
        let p = pl + u * (ph - pl);
        let x = n.inverse_cdf(p);
        if x.is_finite() && x >= lo && x <= hi {
            return x;
        }
        if ph - pl < 1e-300 {
            return lo.max(hi.min(0.0));
        }
    }
}

// Exponential-proposal rejection for the far upper tail.
fn upper_tail<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let x = lo - (1.0 - u).ln() / rate;
        if x > hi {
            continue;
        }
        let v: f64 = rng.random();
        if v.ln() <= -0.5 * (x - rate).powi(2) {
            return x;
        }
    }
}

/// N(mean, sd²) truncated to `[lo, hi]`.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    mean + sd * truncated_std_normal((lo - mean) / sd, (hi - mean) / sd, rng)
}

/// log of the normalizing mass of N(mean, sd²) on `[lo, hi]`.
pub fn log_truncation_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let n = std_normal_cdf();
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    if a > 0.0 {
        (n.sf(a) - n.sf(b)).max(1e-300).ln()
    } else {
        (n.cdf(b) - n.cdf(a)).max(1e-300).ln()
    }
}

/// Inverse Wishart IW(df, scale): mean `scale / (df - p - 1)`.
///
/// Bartlett construction on the Wishart(df, scale⁻¹) precision, inverted
/// through triangular solves only.
pub fn inv_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= p as f64 - 1.0 {
        return Err(SulpError::InvalidParameter(format!(
            "inverse Wishart df {df} too small for dimension {p}"
        )));
    }
    let c = spd_cholesky(scale, "inverse Wishart scale")?.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi2 = 2.0 * gamma(0.5 * (df - i as f64), 1.0, rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    // Σ = C A^{-T} A^{-1} C' = (C A^{-T})(C A^{-T})'
    let a_inv_t = a
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| SulpError::NotPositiveDefinite("Bartlett factor".into()))?
        .transpose();
    let b = c * a_inv_t;
    let mut s = &b * b.transpose();
    crate::linalg::symmetrize(&mut s);
    Ok(s)
}

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian
// ---------------------------------------------------------------------------

/// GIG(λ, χ, ψ) with density ∝ x^{λ-1} exp(-(χ/x + ψx)/2).
#[derive(Debug, Clone, Copy)]
pub struct Gig {
    pub lambda: f64,
    pub chi: f64,
    pub psi: f64,
}

/// Below this, χ (or ψ) is treated as zero and the gamma limit is used.
pub const GIG_ZERO_TOL: f64 = 1e-200;
const GIG_MAX_ITER: usize = 1_000_000;

/// Which generator handles a standardized parameter pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GigRegime {
    GammaLimit,
    RouShifted,
    RouPlain,
    Concave,
}

impl Gig {
    pub fn new(lambda: f64, chi: f64, psi: f64) -> Result<Self> {
        if !(lambda.is_finite() && chi >= 0.0 && psi >= 0.0 && chi.is_finite() && psi.is_finite()) {
            return Err(SulpError::Gig(format!("invalid parameters ({lambda}, {chi}, {psi})")));
        }
        if chi < GIG_ZERO_TOL && psi < GIG_ZERO_TOL {
            return Err(SulpError::Gig("chi and psi both zero".into()));
        }
        Ok(Self { lambda, chi, psi })
    }

    pub fn regime(&self) -> GigRegime {
        if self.chi < GIG_ZERO_TOL && self.lambda > 0.0 || self.psi < GIG_ZERO_TOL && self.lambda < 0.0 {
            return GigRegime::GammaLimit;
        }
        let lambda = self.lambda.abs();
        let omega = (self.psi.max(GIG_ZERO_TOL) * self.chi.max(GIG_ZERO_TOL)).sqrt();
        if lambda > 2.0 || omega > 3.0 {
            GigRegime::RouShifted
        } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
            GigRegime::RouPlain
        } else {
            GigRegime::Concave
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        // χ → 0 with λ > 0 is the Gamma(λ, ψ/2) limit; ψ → 0 with λ < 0 the inverse gamma.
        if self.chi < GIG_ZERO_TOL && self.lambda > 0.0 {
            return gamma(self.lambda, self.psi / 2.0, rng);
        }
        if self.psi < GIG_ZERO_TOL && self.lambda < 0.0 {
            return inv_gamma(-self.lambda, self.chi / 2.0, rng);
        }
        // Improper limits are pulled back onto the proper interior.
        let chi = self.chi.max(GIG_ZERO_TOL);
        let psi = self.psi.max(GIG_ZERO_TOL);
        let flip = self.lambda < 0.0;
        let lambda = self.lambda.abs();
        let alpha = (chi / psi).sqrt();
        let omega = (psi * chi).sqrt();
        let x = match self.regime() {
            GigRegime::RouShifted => rou_shift(lambda, omega, rng)?,
            GigRegime::RouPlain => rou_noshift(lambda, omega, rng)?,
            GigRegime::Concave => concave_hat(lambda, omega, rng)?,
            GigRegime::GammaLimit => unreachable!("handled above"),
        };
        Ok(if flip { alpha / x } else { alpha * x })
    }
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

// Ratio-of-uniforms without mode shift.
fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Result<f64> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    for _ in 0..GIG_MAX_ITER {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return Ok(x);
        }
    }
    Err(SulpError::Gig(format!("no acceptance (rou, λ={lambda}, ω={omega})")))
}

// Ratio-of-uniforms with mode shift (Cardano roots for the bounding rectangle).
fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Result<f64> {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    for _ in 0..GIG_MAX_ITER {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return Ok(x);
        }
    }
    Err(SulpError::Gig(format!("no acceptance (shifted rou, λ={lambda}, ω={omega})")))
}

// Piecewise hat for 0 <= λ < 1 and small ω, where the density is not T-concave.
fn concave_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> Result<f64> {
    if lambda >= 1.0 || omega > 1.0 {
        return Err(SulpError::Gig(format!("hat method invalid for λ={lambda}, ω={omega}")));
    }
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    for _ in 0..GIG_MAX_ITER {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let a = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * a).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0 && x.is_finite()) {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return Ok(x);
        }
    }
    Err(SulpError::Gig(format!("no acceptance (hat, λ={lambda}, ω={omega})")))
}
