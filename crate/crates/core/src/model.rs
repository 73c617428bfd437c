//! Chain state and the joint Gaussian pseudo-likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SulpSystem;
use crate::error::{Result, SulpError};
use crate::linalg::{log_det_chol, spd_cholesky};
use crate::priors::{GpKernelParams, NgParams};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Instrument equation m_jt = φ_j x_{i(j),t} + z_t'δ_j + ν_jt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementState {
    /// One loading per instrument.
    pub phi: DVector<f64>,
    /// k × n_m.
    pub delta: DMatrix<f64>,
    /// n_m × n_m; diagonal unless measurement errors are correlated.
    pub sigma_nu: DMatrix<f64>,
}

/// Log-volatility paths h_t = log σ²_{x,t} with AR(1) parameters per shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvState {
    /// T × n_x.
    pub logvol: DMatrix<f64>,
    pub rho: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// One full parameter configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// n_x × H.
    pub beta: DMatrix<f64>,
    /// k × H.
    pub gamma: DMatrix<f64>,
    pub sigma_u: DMatrix<f64>,
    /// n_x × H.
    pub mu_beta: DMatrix<f64>,
    pub kernel: Vec<GpKernelParams>,
    pub ng: Vec<NgParams>,
    pub measurement: Option<MeasurementState>,
    /// T × n_x current shocks (observed columns never change).
    pub x: DMatrix<f64>,
    pub sv: Option<SvState>,
    /// T × H responses with missing cells imputed.
    pub y: DMatrix<f64>,
    pub log_lik: f64,
}

impl ChainState {
    /// Prior variance of x_{i,t}.
    pub fn shock_variance(&self, t: usize, i: usize) -> f64 {
        self.sv.as_ref().map_or(1.0, |s| s.logvol[(t, i)].exp())
    }
}

/// U = Y − XB − ZΓ.
pub fn residuals(sys: &SulpSystem, state: &ChainState) -> DMatrix<f64> {
    let mut u = state.y.clone();
    u -= &state.x * &state.beta;
    if sys.k() > 0 {
        u -= &sys.z * &state.gamma;
    }
    u
}

/// Measurement errors ν (T × n_m).
pub fn measurement_residuals(sys: &SulpSystem, state: &ChainState) -> Option<DMatrix<f64>> {
    let block = sys.instruments.as_ref()?;
    let ms = state.measurement.as_ref()?;
    let mut nu = block.values.clone();
    if sys.k() > 0 {
        nu -= &sys.z * &ms.delta;
    }
    for (j, &i) in block.loads_on.iter().enumerate() {
        let phi = ms.phi[j];
        for t in 0..nu.nrows() {
            nu[(t, j)] -= phi * state.x[(t, i)];
        }
    }
    Some(nu)
}

/// Σ_t log N(u_t | 0, S) for the rows of `u`.
pub fn gaussian_rows_loglik(u: &DMatrix<f64>, s: &DMatrix<f64>, what: &str) -> Result<f64> {
    if u.nrows() == 0 {
        return Ok(0.0);
    }
    let c = spd_cholesky(s, what)?;
    let ut = u.transpose();
    let z = c
        .l_dirty()
        .solve_lower_triangular(&ut)
        .ok_or_else(|| SulpError::NotPositiveDefinite(what.to_string()))?;
    let n = u.ncols() as f64;
    let t = u.nrows() as f64;
    Ok(-0.5 * t * (n * LN_2PI + log_det_chol(&c)) - 0.5 * z.norm_squared())
}

/// Σ_t log N(y_t | B'x_t + Γ'z_t, Σ_u), plus the instrument-equation terms when instruments are modeled.
pub fn log_pseudo_likelihood(sys: &SulpSystem, state: &ChainState) -> Result<f64> {
    let u = residuals(sys, state);
    let mut ll = gaussian_rows_loglik(&u, &state.sigma_u, "Sigma_u")?;
    if let (Some(nu), Some(ms)) = (measurement_residuals(sys, state), state.measurement.as_ref()) {
        ll += gaussian_rows_loglik(&nu, &ms.sigma_nu, "Sigma_nu")?;
    }
    Ok(ll)
}

/// Pseudo-likelihood with the latent shocks integrated out period by period:
/// (y_t, m_t) jointly Gaussian given all other parameters.
pub fn log_pseudo_likelihood_marginal(sys: &SulpSystem, state: &ChainState) -> Result<f64> {
    let latent: Vec<usize> = (0..sys.n_shocks()).filter(|&i| sys.latent[i]).collect();
    let (Some(block), Some(ms)) = (sys.instruments.as_ref(), state.measurement.as_ref()) else {
        return log_pseudo_likelihood(sys, state);
    };
    if latent.is_empty() {
        return log_pseudo_likelihood(sys, state);
    }
    let h = sys.h();
    let nm = block.values.ncols();
    let n = h + nm;
    // loadings of the latent shocks on (y_t, m_t): n × n_l
    let mut load = DMatrix::zeros(n, latent.len());
    for (p, &i) in latent.iter().enumerate() {
        for hh in 0..h {
            load[(hh, p)] = state.beta[(i, hh)];
        }
    }
    for (j, &i) in block.loads_on.iter().enumerate() {
        if let Some(p) = latent.iter().position(|&l| l == i) {
            load[(h + j, p)] = ms.phi[j];
        }
    }
    let mut base = DMatrix::zeros(n, n);
    base.view_mut((0, 0), (h, h)).copy_from(&state.sigma_u);
    base.view_mut((h, h), (nm, nm)).copy_from(&ms.sigma_nu);

    // residuals of the observed-shock part
    let mut e = DMatrix::zeros(sys.t(), n);
    let mut ey = state.y.clone();
    for i in 0..sys.n_shocks() {
        if !sys.latent[i] {
            for t in 0..sys.t() {
                for hh in 0..h {
                    ey[(t, hh)] -= state.x[(t, i)] * state.beta[(i, hh)];
                }
            }
        }
    }
    let mut em = block.values.clone();
    if sys.k() > 0 {
        ey -= &sys.z * &state.gamma;
        em -= &sys.z * &ms.delta;
    }
    e.columns_mut(0, h).copy_from(&ey);
    e.columns_mut(h, nm).copy_from(&em);

    if state.sv.is_none() {
        let cov = &base + &load * load.transpose();
        return gaussian_rows_loglik(&e, &cov, "marginal covariance");
    }
    let mut ll = 0.0;
    for t in 0..sys.t() {
        let d = DMatrix::from_fn(latent.len(), latent.len(), |a, b| {
            if a == b {
                state.shock_variance(t, latent[a])
            } else {
                0.0
            }
        });
        let cov = &base + &load * d * load.transpose();
        ll += gaussian_rows_loglik(&e.rows(t, 1).into_owned(), &cov, "marginal covariance")?;
    }
    Ok(ll)
}

/// φ²σ²_{x,t}/(φ²σ²_{x,t} + σ²_ν) for instrument `j` at time `t`.
pub fn relevance_statistic(phi: f64, shock_var: f64, sigma2_nu: f64) -> f64 {
    let s = phi * phi * shock_var;
    if s + sigma2_nu == 0.0 {
        return 0.0;
    }
    s / (s + sigma2_nu)
}

/// Relevance path of instrument `j` over all origins.
pub fn relevance_path(sys: &SulpSystem, state: &ChainState, j: usize) -> Option<Vec<f64>> {
    let block = sys.instruments.as_ref()?;
    let ms = state.measurement.as_ref()?;
    let i = block.loads_on[j];
    Some(
        (0..sys.t())
            .map(|t| relevance_statistic(ms.phi[j], state.shock_variance(t, i), ms.sigma_nu[(j, j)]))
            .collect(),
    )
}

/// Σ_u = QΩQ' with Q unit lower triangular and Ω diagonal (returned as a vector).
///
/// Row h of Q holds the MA weights mapping one-step errors e_{t+j} into u^{(h)}.
pub fn cross_horizon_decomposition(sigma_u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let c = spd_cholesky(sigma_u, "Sigma_u")?;
    let l = c.l();
    let d = l.diagonal();
    let q = DMatrix::from_fn(l.nrows(), l.ncols(), |i, j| l[(i, j)] / d[j]);
    Ok((q, d.map(|v| v * v)))
}
