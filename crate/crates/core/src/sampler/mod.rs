//! Gibbs sampler with random-walk Metropolis steps for the kernel hyperparameters.

pub mod chain;
pub mod steps;
pub mod sv;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SulpSystem;
use crate::error::{Result, SulpError};
use crate::linalg::spd_cholesky;
use crate::model::{log_pseudo_likelihood, log_pseudo_likelihood_marginal, ChainState, MeasurementState, SvState};
use crate::priors::{ng_prior_variance, BetaPrior, GpKernelParams, NgParams, Priors};

pub use chain::{Chain, ChainManifest};
use chain::{ChainBuilder, CHAIN_FORMAT_VERSION};
use steps::{MhTuning, Precomputed};
use sv::SvParams;

/// Which pseudo-likelihood is stored with each draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// Conditional on the current latent-shock draw.
    #[default]
    Conditional,
    /// Latent shocks integrated out period by period.
    MarginalShocks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub mh_step_xi: f64,
    pub mh_step_varsigma: f64,
    /// Adapt the MH step sizes during burn-in.
    pub adapt: bool,
    pub adapt_target: f64,
    pub rng_seed: u64,
    pub likelihood: LikelihoodMode,
    /// Keep γ draws in the chain.
    pub store_controls: bool,
    /// Keep latent-shock and log-volatility paths in the chain.
    pub store_latent: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_draws: 12_000,
            burn_in: 3_000,
            thin: 3,
            mh_step_xi: 0.05,
            mh_step_varsigma: 0.5,
            adapt: true,
            adapt_target: 0.30,
            rng_seed: 0,
            likelihood: LikelihoodMode::Conditional,
            store_controls: true,
            store_latent: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_draws {
            return Err(SulpError::InvalidParameter("burn_in must be smaller than n_draws".into()));
        }
        if self.thin == 0 {
            return Err(SulpError::InvalidParameter("thin must be >= 1".into()));
        }
        if !(self.mh_step_xi > 0.0 && self.mh_step_varsigma > 0.0) {
            return Err(SulpError::InvalidParameter("MH step sizes must be positive".into()));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(SulpError::InvalidParameter("adapt_target must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn n_stored(&self) -> usize {
        (self.n_draws - self.burn_in) / self.thin
    }

    fn keeps(&self, sweep: usize) -> bool {
        sweep >= self.burn_in && (sweep - self.burn_in + 1) % self.thin == 0
    }
}

/// Ridge-based starting point inside the support.
pub fn initial_state(sys: &SulpSystem, priors: &Priors) -> Result<ChainState> {
    let t = sys.t();
    let h = sys.h();
    let nx = sys.n_shocks();
    let k = sys.k();
    let mut y = sys.y.clone();
    for j in 0..h {
        let obs: Vec<f64> = y.column(j).iter().copied().filter(|v| !v.is_nan()).collect();
        let fill = if obs.is_empty() { 0.0 } else { obs.iter().sum::<f64>() / obs.len() as f64 };
        for v in y.column_mut(j).iter_mut() {
            if v.is_nan() {
                *v = fill;
            }
        }
    }
    let p = nx + k;
    let mut w = DMatrix::zeros(t, p);
    w.columns_mut(0, nx).copy_from(&sys.x);
    if k > 0 {
        w.columns_mut(nx, k).copy_from(&sys.z);
    }
    let gram = w.transpose() * &w + DMatrix::identity(p, p);
    let coef = spd_cholesky(&gram, "ridge start")?.solve(&(w.transpose() * &y));
    let beta = coef.rows(0, nx).into_owned();
    let gamma = coef.rows(nx, k).into_owned();
    let fit = &w * &coef;
    // fill missing cells with fitted values
    for &(r, c) in &sys.missing {
        y[(r, c)] = fit[(r, c)];
    }
    let u = &y - &fit;
    let mut sigma_u = DMatrix::identity(h, h) * 0.1;
    if t >= 2 {
        sigma_u += u.transpose() * &u / t as f64;
    } else {
        sigma_u += DMatrix::identity(h, h);
    }
    let measurement = sys.instruments.as_ref().map(|b| {
        let nm = b.values.ncols();
        MeasurementState {
            phi: DVector::from_element(nm, 1.0),
            delta: DMatrix::zeros(k, nm),
            sigma_nu: DMatrix::identity(nm, nm),
        }
    });
    let sv = if sys.flags.stochastic_volatility && sys.has_latent() {
        let sp = priors.hyper.sv;
        Some(SvState {
            logvol: DMatrix::zeros(t, nx),
            rho: vec![sp.rho_mean; nx],
            sigma2: vec![sp.b_vol / (sp.a_vol - 1.0).max(1.0); nx],
        })
    } else {
        None
    };
    let ng = match priors.hyper.beta_prior {
        BetaPrior::GpNg => NgParams::unit(h),
        BetaPrior::Flat { variance } => NgParams::from_tau_tilde2(2.0 / variance, DVector::from_element(h, 1.0)),
    };
    let mut state = ChainState {
        beta,
        gamma,
        sigma_u,
        mu_beta: DMatrix::zeros(nx, h),
        kernel: vec![GpKernelParams::default(); nx],
        ng: vec![ng; nx],
        measurement,
        x: sys.x.clone(),
        sv,
        y,
        log_lik: 0.0,
    };
    state.log_lik = log_pseudo_likelihood(sys, &state)?;
    Ok(state)
}

/// Sampler bound to one system; owns the MH tuning state.
#[derive(Debug, Clone)]
pub struct Gibbs<'a> {
    pub sys: &'a SulpSystem,
    pub priors: &'a Priors,
    pub config: SamplerConfig,
    pub pre: Precomputed,
    pub tuning: Vec<MhTuning>,
}

fn at<T>(sweep: usize, step: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| SulpError::SamplerStep {
        sweep,
        step,
        source: Box::new(e),
    })
}

impl<'a> Gibbs<'a> {
    pub fn new(sys: &'a SulpSystem, priors: &'a Priors, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        if sys.has_latent() && sys.instruments.is_none() {
            return Err(SulpError::InvalidDesign("latent shocks need instruments".into()));
        }
        let pre = Precomputed::new(sys, priors)?;
        let tuning = vec![MhTuning::new(config.mh_step_xi, config.mh_step_varsigma); sys.n_shocks()];
        Ok(Self {
            sys,
            priors,
            config,
            pre,
            tuning,
        })
    }

    /// One full sweep. `sweep` indexes adaptation and error reports.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ChainState, sweep: usize, rng: &mut R) -> Result<()> {
        let sys = self.sys;
        let priors = self.priors;
        let h = sys.h();
        at(sweep, "beta", steps::draw_beta(sys, state, rng))?;
        at(sweep, "gamma", steps::draw_gamma(sys, &self.pre, state, rng))?;
        at(sweep, "sigma_u", steps::draw_sigma_u(sys, priors, state, rng))?;
        at(sweep, "measurement", steps::draw_measurement(sys, priors, state, rng))?;

        let adapting = self.config.adapt && sweep < self.config.burn_in;
        let hierarchical = priors.hyper.beta_prior == BetaPrior::GpNg;
        for i in (0..sys.n_shocks()).filter(|_| hierarchical) {
            let beta_i = state.beta.row(i).transpose();
            let v = ng_prior_variance(&state.ng[i]).map(|x| x.max(steps::NG_VARIANCE_FLOOR));
            let (ax, avs) = steps::draw_kernel_hyper(
                &beta_i,
                &v,
                &mut state.kernel[i],
                &priors.hyper.kernel,
                &mut self.tuning[i],
                rng,
            );
            if adapting {
                self.tuning[i].adapt(sweep, ax, avs, self.config.adapt_target);
            }
            let kp = state.kernel[i];
            let kmat = crate::priors::gp_kernel_matrix(h, kp.xi, kp.varsigma);
            let mu = at(sweep, "mu_beta", steps::draw_gp_mean(&beta_i, &kmat, &v, rng))?;
            state.mu_beta.row_mut(i).copy_from(&mu.transpose());
            at(sweep, "ng", steps::draw_ng(&beta_i, &mu, &mut state.ng[i], &priors.hyper.ng, rng))?;
        }

        if sys.has_latent() {
            at(sweep, "latent_x", steps::draw_latent_shocks(sys, state, rng))?;
            if let Some(mut svs) = state.sv.take() {
                for i in 0..sys.n_shocks() {
                    if !sys.latent[i] {
                        continue;
                    }
                    let x: Vec<f64> = state.x.column(i).iter().copied().collect();
                    let mut path: Vec<f64> = svs.logvol.column(i).iter().copied().collect();
                    let mut p = SvParams {
                        rho: svs.rho[i],
                        sigma2: svs.sigma2[i],
                    };
                    at(sweep, "sv", sv::draw_sv(&x, &mut path, &mut p, &priors.hyper.sv, rng))?;
                    for (t, v) in path.into_iter().enumerate() {
                        svs.logvol[(t, i)] = v;
                    }
                    svs.rho[i] = p.rho;
                    svs.sigma2[i] = p.sigma2;
                }
                state.sv = Some(svs);
            }
        }
        at(sweep, "missing_y", steps::draw_missing(sys, &self.pre, state, rng))?;
        state.log_lik = at(sweep, "log_likelihood", self.log_lik(state))?;
        if !state.log_lik.is_finite() {
            return Err(SulpError::SamplerStep {
                sweep,
                step: "log_likelihood",
                source: Box::new(SulpError::NotPositiveDefinite("non-finite pseudo-likelihood".into())),
            });
        }
        Ok(())
    }

    pub fn log_lik(&self, state: &ChainState) -> Result<f64> {
        match self.config.likelihood {
            LikelihoodMode::Conditional => log_pseudo_likelihood(self.sys, state),
            LikelihoodMode::MarginalShocks => log_pseudo_likelihood_marginal(self.sys, state),
        }
    }

    fn declare_blocks(&self, b: &mut ChainBuilder) {
        let sys = self.sys;
        let (h, nx, k, t) = (sys.h(), sys.n_shocks(), sys.k(), sys.t());
        let cap = self.config.n_stored();
        b.declare("beta", vec![nx, h], cap);
        b.declare("mu_beta", vec![nx, h], cap);
        if self.config.store_controls {
            b.declare("gamma", vec![k, h], cap);
        }
        b.declare("sigma_u", vec![h, h], cap);
        b.declare("xi", vec![nx], cap);
        b.declare("varsigma", vec![nx], cap);
        b.declare("tau2", vec![nx], cap);
        b.declare("lambda2", vec![nx, h], cap);
        if let Some(inst) = sys.instruments.as_ref() {
            let nm = inst.values.ncols();
            b.declare("phi", vec![nm], cap);
            if self.config.store_controls {
                b.declare("delta", vec![k, nm], cap);
            }
            b.declare("sigma_nu", vec![nm, nm], cap);
        }
        if sys.has_latent() && self.config.store_latent {
            b.declare("x", vec![t, nx], cap);
        }
        if sys.flags.stochastic_volatility && sys.has_latent() {
            if self.config.store_latent {
                b.declare("logvol", vec![t, nx], cap);
            }
            b.declare("sv_rho", vec![nx], cap);
            b.declare("sv_sigma2", vec![nx], cap);
        }
        if !sys.missing.is_empty() {
            b.declare("y_missing", vec![sys.missing.len()], cap);
        }
        b.declare("log_lik", vec![1], cap);
    }

    fn record(&self, b: &mut ChainBuilder, s: &ChainState) {
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> { m.transpose().iter().copied().collect() };
        b.push("beta", row_major(&s.beta));
        b.push("mu_beta", row_major(&s.mu_beta));
        if b.data.contains_key("gamma") {
            b.push("gamma", row_major(&s.gamma));
        }
        b.push("sigma_u", row_major(&s.sigma_u));
        b.push("xi", s.kernel.iter().map(|k| k.xi));
        b.push("varsigma", s.kernel.iter().map(|k| k.varsigma));
        b.push("tau2", s.ng.iter().map(|n| n.tau2));
        b.push("lambda2", s.ng.iter().flat_map(|n| n.lambda2.iter().copied()).collect::<Vec<_>>());
        if let Some(ms) = s.measurement.as_ref() {
            b.push("phi", ms.phi.iter().copied());
            if b.data.contains_key("delta") {
                b.push("delta", row_major(&ms.delta));
            }
            b.push("sigma_nu", row_major(&ms.sigma_nu));
        }
        if b.data.contains_key("x") {
            b.push("x", row_major(&s.x));
        }
        if let Some(sv) = s.sv.as_ref() {
            if b.data.contains_key("logvol") {
                b.push("logvol", row_major(&sv.logvol));
            }
            b.push("sv_rho", sv.rho.iter().copied());
            b.push("sv_sigma2", sv.sigma2.iter().copied());
        }
        if b.data.contains_key("y_missing") {
            b.push("y_missing", self.sys.missing.iter().map(|&(t, h)| s.y[(t, h)]).collect::<Vec<_>>());
        }
        b.push("log_lik", [s.log_lik]);
    }

    /// Run the full schedule from `state` and return the stored draws.
    pub fn run<R: Rng + ?Sized>(&mut self, mut state: ChainState, rng: &mut R) -> Result<(Chain, ChainState)> {
        let mut b = ChainBuilder::default();
        self.declare_blocks(&mut b);
        for s in 0..self.config.n_draws {
            self.sweep(&mut state, s, rng)?;
            if self.config.keeps(s) {
                self.record(&mut b, &state);
            }
        }
        let manifest = ChainManifest {
            format_version: CHAIN_FORMAT_VERSION,
            n_stored: self.config.n_stored(),
            n_draws: self.config.n_draws,
            burn_in: self.config.burn_in,
            thin: self.config.thin,
            seed: self.config.rng_seed,
            config_hash: config_hash(&self.config, self.priors),
            horizons: self.sys.h(),
            shock_names: self.sys.shock_names.clone(),
            origins: self.sys.t(),
            target_scale: 1.0,
            shock_scales: Vec::new(),
            acceptance: self
                .tuning
                .iter()
                .map(|t| {
                    let (a, b) = t.acceptance();
                    [a, b]
                })
                .collect(),
            blocks: b.blocks,
            reweight: None,
        };
        let mut chain = Chain { manifest, data: b.data };
        chain::recompute_offsets(&mut chain.manifest);
        Ok((chain, state))
    }
}

/// SHA-256 of the sampler configuration and hyperparameters.
pub fn config_hash(config: &SamplerConfig, priors: &Priors) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(serde_json::to_vec(&priors.hyper).expect("hyperparameters serialize"));
    hex::encode(h.finalize())
}

/// Initialize and run a chain.
pub fn run_sampler<R: Rng + ?Sized>(
    sys: &SulpSystem,
    priors: &Priors,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Chain> {
    let mut g = Gibbs::new(sys, priors, config.clone())?;
    let init = initial_state(sys, priors)?;
    Ok(g.run(init, rng)?.0)
}
