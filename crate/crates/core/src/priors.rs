//! Prior objects: GP kernel over horizons, Normal-Gamma shrinkage,
//! Minnesota-style controls prior, inverse-Wishart covariance prior and
//! measurement-equation priors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{ControlRole, SulpSystem};
use crate::error::{Result, SulpError};
use crate::linalg::{cholesky_jittered, Chol};

/// Bounds and truncated-Gaussian prior moments for (ξ, ς).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpKernelPrior {
    pub xi_low: f64,
    pub xi_high: f64,
    pub varsigma_low: f64,
    pub varsigma_high: f64,
    pub m_xi: f64,
    pub v_xi: f64,
    pub m_varsigma: f64,
    pub v_varsigma: f64,
}

impl Default for GpKernelPrior {
    fn default() -> Self {
        Self {
            xi_low: 0.01,
            xi_high: 1.0,
            varsigma_low: 0.0,
            varsigma_high: 10.0,
            m_xi: 0.1,
            v_xi: 0.1,
            m_varsigma: 0.0,
            v_varsigma: 3.0,
        }
    }
}

impl GpKernelPrior {
    pub fn xi_in_support(&self, xi: f64) -> bool {
        xi > self.xi_low && xi <= self.xi_high
    }

    pub fn varsigma_in_support(&self, vs: f64) -> bool {
        vs >= self.varsigma_low && vs <= self.varsigma_high
    }

    /// Log prior density of (ξ, ς) up to a constant; -inf outside the bounds.
    pub fn log_density(&self, xi: f64, varsigma: f64) -> f64 {
        if !self.xi_in_support(xi) || !self.varsigma_in_support(varsigma) {
            return f64::NEG_INFINITY;
        }
        -0.5 * (xi - self.m_xi).powi(2) / self.v_xi - 0.5 * (varsigma - self.m_varsigma).powi(2) / self.v_varsigma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi_low >= 0.0 && self.xi_low < self.xi_high) {
            return Err(SulpError::InvalidParameter("xi bounds must satisfy 0 <= low < high".into()));
        }
        if !(self.varsigma_low >= 0.0 && self.varsigma_low <= self.varsigma_high) {
            return Err(SulpError::InvalidParameter("varsigma bounds must satisfy 0 <= low <= high".into()));
        }
        if !(self.v_xi > 0.0 && self.v_varsigma > 0.0) {
            return Err(SulpError::InvalidParameter("kernel prior variances must be positive".into()));
        }
        Ok(())
    }
}

/// Current kernel hyperparameters of one shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpKernelParams {
    pub xi: f64,
    pub varsigma: f64,
}

impl Default for GpKernelParams {
    fn default() -> Self {
        Self { xi: 0.1, varsigma: 1.0 }
    }
}

/// Kernel matrix with its (possibly jittered) Cholesky factor.
#[derive(Debug, Clone)]
pub struct GpKernel {
    pub matrix: DMatrix<f64>,
    pub chol: Chol,
    pub jitter: f64,
}

/// K[ij] = (d_i d_j)^{ς/2} exp(-ξ(i-j)²/2), d_i = (H+1-i)/H, i = 1..H.
pub fn gp_kernel_matrix(h: usize, xi: f64, varsigma: f64) -> DMatrix<f64> {
    let hf = h as f64;
    let base: Vec<f64> = (1..=h).map(|i| (hf + 1.0 - i as f64) / hf).collect();
    let d: Vec<f64> = base.iter().map(|b| b.powf(0.5 * varsigma)).collect();
    DMatrix::from_fn(h, h, |i, j| {
        if i == j {
            return base[i].powf(varsigma);
        }
        let diff = i as f64 - j as f64;
        d[i] * d[j] * (-0.5 * xi * diff * diff).exp()
    })
}

pub fn gp_kernel(h: usize, xi: f64, varsigma: f64) -> Result<GpKernel> {
    if !(xi > 0.0) || !(varsigma >= 0.0) || h == 0 {
        return Err(SulpError::InvalidParameter(format!(
            "kernel needs xi > 0, varsigma >= 0, H >= 1 (got {xi}, {varsigma}, {h})"
        )));
    }
    let matrix = gp_kernel_matrix(h, xi, varsigma);
    let (chol, jitter) = cholesky_jittered(&matrix).ok_or(SulpError::KernelNotPd { xi, varsigma })?;
    Ok(GpKernel { matrix, chol, jitter })
}

/// Normal-Gamma hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgPrior {
    pub a_tau: f64,
    pub b_tau: f64,
    pub theta_lambda: f64,
}

impl Default for NgPrior {
    fn default() -> Self {
        Self {
            a_tau: 0.01,
            b_tau: 0.01,
            theta_lambda: 0.1,
        }
    }
}

/// Normal-Gamma state of one shock: τ̃², τ² = 2/τ̃² and the local λ_h².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgParams {
    pub tau_tilde2: f64,
    pub tau2: f64,
    pub lambda2: DVector<f64>,
}

impl NgParams {
    /// Unit prior variances: τ² = 1, λ² = 1.
    pub fn unit(h: usize) -> Self {
        Self {
            tau_tilde2: 2.0,
            tau2: 1.0,
            lambda2: DVector::from_element(h, 1.0),
        }
    }

    pub fn from_tau_tilde2(tau_tilde2: f64, lambda2: DVector<f64>) -> Self {
        Self {
            tau_tilde2,
            tau2: 2.0 / tau_tilde2,
            lambda2,
        }
    }
}

/// V_β diagonal: τ²λ_h².
pub fn ng_prior_variance(ng: &NgParams) -> DVector<f64> {
    ng.lambda2.map(|l| ng.tau2 * l)
}

/// Inverse-Wishart prior on Σ_u: s0 degrees of freedom, S0 = 𝔰²(s0-H-1)⁻¹ I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovPrior {
    pub s0: f64,
    pub s_scale: f64,
}

impl CovPrior {
    pub fn default_for(h: usize) -> Self {
        Self {
            s0: h as f64 + 2.0,
            s_scale: 1.0,
        }
    }

    pub fn scale_matrix(&self, h: usize) -> DMatrix<f64> {
        DMatrix::identity(h, h) * (self.s_scale / (self.s0 - h as f64 - 1.0))
    }

    pub fn validate(&self, h: usize) -> Result<()> {
        if !(self.s0 > h as f64 + 1.0) || !(self.s_scale > 0.0) {
            return Err(SulpError::InvalidParameter(format!(
                "covariance prior needs s0 > H + 1 = {} and positive scale",
                h + 1
            )));
        }
        Ok(())
    }
}

/// Tightness of the controls prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinnesotaTightness {
    pub kappa_own: f64,
    pub kappa_cross: f64,
    pub kappa_det: f64,
}

impl Default for MinnesotaTightness {
    fn default() -> Self {
        Self {
            kappa_own: 0.04,
            kappa_cross: 0.0016,
            kappa_det: 100.0,
        }
    }
}

/// Conjugate prior N(vec(M_γ), Σ_u ⊗ diag(V_γ)).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlsPrior {
    /// k × H.
    pub m_gamma: DMatrix<f64>,
    pub v_gamma: DVector<f64>,
    pub tightness: MinnesotaTightness,
}

pub fn minnesota_controls_prior(
    roles: &[ControlRole],
    h: usize,
    target_in_levels: bool,
    tightness: MinnesotaTightness,
) -> Result<ControlsPrior> {
    let t = tightness;
    if !(t.kappa_own > 0.0 && t.kappa_cross > 0.0 && t.kappa_det > 0.0) {
        return Err(SulpError::InvalidParameter("controls prior tightness must be positive".into()));
    }
    let k = roles.len();
    let v_gamma = DVector::from_fn(k, |j, _| match roles[j] {
        ControlRole::OwnLag { lag } => t.kappa_own / (lag * lag) as f64,
        ControlRole::CrossLag { lag } => t.kappa_cross / (lag * lag) as f64,
        _ => t.kappa_det,
    });
    let mut m_gamma = DMatrix::zeros(k, h);
    if target_in_levels {
        if let Some(j) = roles.iter().position(|r| *r == ControlRole::OwnLag { lag: 1 }) {
            m_gamma.row_mut(j).fill(1.0);
        }
    }
    Ok(ControlsPrior {
        m_gamma,
        v_gamma,
        tightness,
    })
}

/// Priors of the instrument measurement equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementPrior {
    pub phi_mean: f64,
    pub phi_var: f64,
    /// Restrict φ > 0.
    pub phi_positive: bool,
    pub delta_var: f64,
    pub a_sigma_nu: f64,
    pub b_sigma_nu: f64,
    /// Σ_ν degrees of freedom; `None` means n_m + 4.
    pub s0_nu: Option<f64>,
    /// Σ_ν scale S0ν = s0_nu_scale · I.
    pub s0_nu_scale: f64,
}

impl Default for MeasurementPrior {
    fn default() -> Self {
        Self {
            phi_mean: 1.0,
            phi_var: 1.0,
            phi_positive: true,
            delta_var: 10.0,
            a_sigma_nu: 3.0,
            b_sigma_nu: 3.0,
            s0_nu: None,
            s0_nu_scale: 3.0,
        }
    }
}

impl MeasurementPrior {
    pub fn sigma_nu_df(&self, n_m: usize) -> f64 {
        self.s0_nu.unwrap_or(n_m as f64 + 4.0)
    }
}

/// Priors of the log-volatility AR(1): ρ ~ N(m, v) on (-1, 1), ς² ~ IG(a, b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvPrior {
    pub rho_mean: f64,
    pub rho_var: f64,
    pub a_vol: f64,
    pub b_vol: f64,
}

impl Default for SvPrior {
    fn default() -> Self {
        Self {
            rho_mean: 0.9,
            rho_var: 0.04,
            a_vol: 3.0,
            b_vol: 0.06,
        }
    }
}

/// Prior family for the impulse responses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaPrior {
    /// GP prior mean with Normal-Gamma shrinkage.
    #[default]
    GpNg,
    /// Fixed N(0, variance · I).
    Flat { variance: f64 },
}

/// Every tuning constant of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    #[serde(default)]
    pub beta_prior: BetaPrior,
    pub kernel: GpKernelPrior,
    pub ng: NgPrior,
    pub cov: CovPrior,
    pub controls: MinnesotaTightness,
    pub measurement: MeasurementPrior,
    pub sv: SvPrior,
}

pub fn default_hyperparameters(h: usize) -> HyperParams {
    HyperParams {
        beta_prior: BetaPrior::GpNg,
        kernel: GpKernelPrior::default(),
        ng: NgPrior::default(),
        cov: CovPrior::default_for(h),
        controls: MinnesotaTightness::default(),
        measurement: MeasurementPrior::default(),
        sv: SvPrior::default(),
    }
}

impl HyperParams {
    pub fn validate(&self, h: usize) -> Result<()> {
        if let BetaPrior::Flat { variance } = self.beta_prior {
            if !(variance > 0.0) {
                return Err(SulpError::InvalidParameter("flat prior variance must be positive".into()));
            }
        }
        self.kernel.validate()?;
        self.cov.validate(h)?;
        let ng = self.ng;
        if !(ng.a_tau > 0.0 && ng.b_tau > 0.0 && ng.theta_lambda > 0.0) {
            return Err(SulpError::InvalidParameter("NG hyperparameters must be positive".into()));
        }
        let m = self.measurement;
        if !(m.phi_var > 0.0 && m.delta_var > 0.0 && m.a_sigma_nu > 0.0 && m.b_sigma_nu > 0.0 && m.s0_nu_scale > 0.0) {
            return Err(SulpError::InvalidParameter("measurement prior parameters must be positive".into()));
        }
        let s = self.sv;
        if !(s.rho_var > 0.0 && s.a_vol > 0.0 && s.b_vol > 0.0) {
            return Err(SulpError::InvalidParameter("volatility prior parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hyperparameters serialize")
    }
}

/// All prior objects needed by the sampler for a given system.
#[derive(Debug, Clone)]
pub struct Priors {
    pub hyper: HyperParams,
    pub controls: ControlsPrior,
    /// S0 (H × H).
    pub cov_scale: DMatrix<f64>,
}

impl Priors {
    pub fn build(sys: &SulpSystem, hyper: HyperParams, target_in_levels: bool) -> Result<Self> {
        let h = sys.h();
        hyper.validate(h)?;
        let controls = minnesota_controls_prior(&sys.control_roles, h, target_in_levels, hyper.controls)?;
        Ok(Self {
            cov_scale: hyper.cov.scale_matrix(h),
            hyper,
            controls,
        })
    }
}
