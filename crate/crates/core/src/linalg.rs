//! Dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SulpError};

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky with an escalating diagonal jitter of `1e-10 * tr/n` up to `1e-6 * tr/n`.
///
/// Returns the factor and the jitter that was added (0 when none was needed).
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Option<(Chol, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Some((c, 0.0));
    }
    let n = a.nrows().max(1) as f64;
    let scale = (a.trace() / n).abs().max(f64::MIN_POSITIVE);
    let mut eps = 1e-10;
    while eps <= 1e-6 * 1.000001 {
        let mut b = a.clone();
        for i in 0..a.nrows() {
            b[(i, i)] += eps * scale;
        }
        if let Some(c) = Cholesky::new(b) {
            return Some((c, eps * scale));
        }
        eps *= 10.0;
    }
    None
}

pub fn spd_cholesky(a: &DMatrix<f64>, what: &str) -> Result<Chol> {
    cholesky_jittered(a)
        .map(|(c, _)| c)
        .ok_or_else(|| SulpError::NotPositiveDefinite(what.to_string()))
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn log_det_chol(c: &Chol) -> f64 {
    let l = c.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let c = spd_cholesky(a, what)?;
    let mut inv = c.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn std_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn std_normal_mat<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    // column-major fill keeps the draw order well defined
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Draw from N(P⁻¹b, P⁻¹) given the precision `P` and linear term `b`.
pub fn sample_from_precision<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
    what: &str,
) -> Result<DVector<f64>> {
    let c = spd_cholesky(precision, what)?;
    let mean = c.solve(linear);
    let z = std_normal_vec(linear.len(), rng);
    let dev = c
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| SulpError::NotPositiveDefinite(what.to_string()))?;
    Ok(mean + dev)
}

/// Draw from N(mean, cov) using a jittered Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
    what: &str,
) -> Result<DVector<f64>> {
    let c = spd_cholesky(cov, what)?;
    let z = std_normal_vec(mean.len(), rng);
    Ok(mean + c.l() * z)
}

/// Lower-triangular factor (with jitter) as a plain matrix.
pub fn lower_factor(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(spd_cholesky(a, what)?.l())
}

/// log N(x | 0, Σ) from a Cholesky factor of Σ.
pub fn mvn_logpdf_chol(x: &DVector<f64>, c: &Chol) -> f64 {
    let n = x.len() as f64;
    let z = c
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("triangular solve on a valid factor");
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det_chol(c) - 0.5 * z.norm_squared()
}

/// Spectral radius via power-free eigenvalue computation (real Schur form).
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
