//! Joint correctness: marginal-conditional vs successive-conditional simulators.

use nalgebra::{DMatrix, DVector};
use sulp_core::dataset::SulpSystem;
use sulp_core::model::ChainState;
use sulp_core::priors::{
    default_hyperparameters, gp_kernel_matrix, BetaPrior, CovPrior, GpKernelParams, HyperParams, NgParams, NgPrior,
    Priors,
};
use sulp_core::random::{gamma, inv_wishart, std_normal, substream, truncated_normal, SulpRng};
use sulp_core::sampler::{Gibbs, SamplerConfig};

use crate::common::{batch_se, mean, se, Checks, Verdict};

const T: usize = 8;
const H: usize = 3;
const K: usize = 2;
const N_MARGINAL: usize = 100_000;
const N_CHAIN: usize = 400_000;
const K_SE: f64 = 4.0;

struct Setup {
    sys: SulpSystem,
    priors: Priors,
}

fn setup(beta_prior: BetaPrior, r: &mut SulpRng) -> Setup {
    let x = DMatrix::from_fn(T, 1, |_, _| std_normal(r));
    let z = DMatrix::from_fn(T, K, |_, _| std_normal(r));
    let sys = SulpSystem::from_parts(DMatrix::zeros(T, H), x, z);
    let mut hyper: HyperParams = default_hyperparameters(H);
    hyper.beta_prior = beta_prior;
    // prior moments up to fourth order must exist for the comparison
    hyper.cov = CovPrior { s0: 14.0, s_scale: 100.0 };
    hyper.ng = NgPrior { a_tau: 6.0, b_tau: 6.0, theta_lambda: 2.0 };
    let mut priors = Priors::build(&sys, hyper, false).expect("priors");
    priors.controls.m_gamma = DMatrix::zeros(K, H);
    priors.controls.v_gamma = DVector::from_vec(vec![1.0, 0.5]);
    Setup { sys, priors }
}

/// A full parameter draw from the prior, written into `st`.
fn prior_draw(s: &Setup, st: &mut ChainState, r: &mut SulpRng) {
    let hp = &s.priors.hyper;
    st.sigma_u = inv_wishart(hp.cov.s0, &s.priors.cov_scale, r).expect("iw");
    let l = st.sigma_u.clone().cholesky().expect("spd").l();
    let e = DMatrix::from_fn(K, H, |_, _| std_normal(r));
    let sd = s.priors.controls.v_gamma.map(f64::sqrt);
    st.gamma = &s.priors.controls.m_gamma + DMatrix::from_diagonal(&sd) * e * l.transpose();
    match hp.beta_prior {
        BetaPrior::Flat { variance } => {
            st.beta = DMatrix::from_fn(1, H, |_, _| variance.sqrt() * std_normal(r));
        }
        BetaPrior::GpNg => {
            let kp = hp.kernel;
            let xi = truncated_normal(kp.m_xi, kp.v_xi.sqrt(), kp.xi_low, kp.xi_high, r);
            let vs = truncated_normal(kp.m_varsigma, kp.v_varsigma.sqrt(), kp.varsigma_low, kp.varsigma_high, r);
            let kmat = gp_kernel_matrix(H, xi, vs);
            let mu = kmat.cholesky().expect("kernel").l() * DVector::from_fn(H, |_, _| std_normal(r));
            let th = hp.ng.theta_lambda;
            let tt = gamma(hp.ng.a_tau, hp.ng.b_tau, r).expect("gamma");
            let v = DVector::from_fn(H, |_, _| gamma(th, th * tt / 2.0, r).expect("gamma"));
            st.kernel[0] = GpKernelParams { xi, varsigma: vs };
            st.mu_beta = DMatrix::from_row_slice(1, H, mu.as_slice());
            st.beta = DMatrix::from_fn(1, H, |_, h| mu[h] + v[h].sqrt() * std_normal(r));
            st.ng[0] = NgParams::from_tau_tilde2(tt, &v * (tt / 2.0));
        }
    }
}

/// y | θ from the SUR likelihood.
fn simulate_y(s: &Setup, st: &mut ChainState, r: &mut SulpRng) {
    let l = st.sigma_u.clone().cholesky().expect("spd").l();
    let u = DMatrix::from_fn(T, H, |_, _| std_normal(r)) * l.transpose();
    st.y = &s.sys.x * &st.beta + &s.sys.z * &st.gamma + u;
}

/// β, γ (row-major), diag Σ_u, then the hierarchy (ξ, ς, μ_β) when present.
fn record(st: &ChainState, hierarchical: bool) -> Vec<f64> {
    let mut v: Vec<f64> = st.beta.iter().copied().collect();
    v.extend(st.gamma.transpose().iter().copied());
    v.extend((0..H).map(|h| st.sigma_u[(h, h)]));
    if hierarchical {
        v.push(st.kernel[0].xi);
        v.push(st.kernel[0].varsigma);
        v.extend(st.mu_beta.iter().copied());
    }
    v
}

fn compare(label: &str, beta_prior: BetaPrior, tag: u64, c: &mut Checks) {
    let mut r = substream(91, &[tag]);
    let s = setup(beta_prior, &mut r);
    let hierarchical = beta_prior == BetaPrior::GpNg;
    let config = SamplerConfig {
        n_draws: 2,
        burn_in: 0,
        adapt: false,
        mh_step_xi: 0.2,
        mh_step_varsigma: 1.5,
        ..SamplerConfig::default()
    };
    let mut st = sulp_core::sampler::initial_state(&s.sys, &s.priors).expect("init");

    let mut marginal: Vec<Vec<f64>> = Vec::with_capacity(N_MARGINAL);
    for _ in 0..N_MARGINAL {
        prior_draw(&s, &mut st, &mut r);
        marginal.push(record(&st, hierarchical));
    }

    let mut gibbs = Gibbs::new(&s.sys, &s.priors, config).expect("gibbs");
    prior_draw(&s, &mut st, &mut r);
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(N_CHAIN);
    for i in 0..N_CHAIN {
        simulate_y(&s, &mut st, &mut r);
        gibbs.sweep(&mut st, i, &mut r).expect("sweep");
        chain.push(record(&st, hierarchical));
    }

    let names = |j: usize| -> String {
        match j {
            j if j < H => format!("beta[{j}]"),
            j if j < H + K * H => format!("gamma[{}]", j - H),
            j if j < 2 * H + K * H => format!("sigma_u[{0},{0}]", j - H - K * H),
            j if j == 2 * H + K * H => "xi".into(),
            j if j == 2 * H + K * H + 1 => "varsigma".into(),
            j => format!("mu_beta[{}]", j - 2 * H - K * H - 2),
        }
    };
    for j in 0..marginal[0].len() {
        for power in [1, 2] {
            let a: Vec<f64> = marginal.iter().map(|v| v[j].powi(power)).collect();
            let b: Vec<f64> = chain.iter().map(|v| v[j].powi(power)).collect();
            let s_err = (se(&a).powi(2) + batch_se(&b, 50).powi(2)).sqrt();
            c.within_se(&format!("{label} E[{}^{power}]", names(j)), mean(&b), mean(&a), s_err, K_SE);
        }
    }
}

pub fn run() -> Verdict {
    let mut c = Checks::default();
    compare("flat", BetaPrior::Flat { variance: 2.0 }, 1, &mut c);
    compare("gp-ng", BetaPrior::GpNg, 2, &mut c);
    c.verdict("moment")
}
