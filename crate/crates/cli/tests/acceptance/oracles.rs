//! Every Gibbs step against its prior (no data) and against dense closed forms.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use sulp_core::dataset::{InstrumentBlock, SulpSystem};
use sulp_core::model::{ChainState, MeasurementState};
use sulp_core::priors::{default_hyperparameters, gp_kernel_matrix, CovPrior, GpKernelParams, NgParams, NgPrior, Priors};
use sulp_core::random::{gamma, std_normal, substream, SulpRng};
use sulp_core::sampler::steps::{
    draw_beta, draw_gamma, draw_gp_mean, draw_latent_shocks, draw_measurement, draw_missing, draw_ng_global,
    draw_ng_locals, draw_sigma_u, Precomputed,
};

use crate::common::{bessel_k, gaussian_conditional, mean, se, Checks, Draws, Verdict};

const N: usize = 100_000;
/// Draw multiplier for the confirmatory rerun of a failing group.
const RERUN_FACTOR: usize = 4;
const K_SE: f64 = 3.0;

/// Draw budget and stream of one pass over a group of checks.
#[derive(Clone, Copy)]
struct Pass {
    n: usize,
    stream: u64,
}

impl Pass {
    fn rng(&self, tag: u64) -> SulpRng {
        substream(77, &[self.stream, tag])
    }
}

fn normal_mat(r: usize, c: usize, rng: &mut SulpRng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| std_normal(rng))
}

fn sigma3() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.5, -0.2, 0.5, 1.5, 0.3, -0.2, 0.3, 0.8])
}

fn blank_state(sys: &SulpSystem) -> ChainState {
    let (nx, h, k) = (sys.n_shocks(), sys.h(), sys.k());
    ChainState {
        beta: DMatrix::zeros(nx, h),
        gamma: DMatrix::zeros(k, h),
        sigma_u: DMatrix::identity(h, h),
        mu_beta: DMatrix::zeros(nx, h),
        kernel: vec![GpKernelParams::default(); nx],
        ng: vec![NgParams::unit(h); nx],
        measurement: None,
        x: sys.x.clone(),
        sv: None,
        y: sys.y.clone(),
        log_lik: 0.0,
    }
}

fn priors_for(sys: &SulpSystem, cov: Option<CovPrior>) -> Priors {
    let mut hyper = default_hyperparameters(sys.h());
    if let Some(c) = cov {
        hyper.cov = c;
    }
    Priors::build(sys, hyper, false).expect("priors")
}

/// Row-major flattening of a matrix.
fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn beta_prior_and_dense(c: &mut Checks, run: Pass) {
    let (h, nx) = (3, 2);
    let mut r = run.rng(1);
    let mu = DMatrix::from_row_slice(nx, h, &[0.5, -0.2, 1.0, 0.0, 0.3, -0.7]);
    let ng = [
        NgParams::from_tau_tilde2(1.0, DVector::from_vec(vec![1.0, 2.0, 0.5])),
        NgParams::from_tau_tilde2(4.0, DVector::from_vec(vec![0.3, 1.0, 3.0])),
    ];
    let vdiag: Vec<f64> = ng.iter().flat_map(|n| n.lambda2.iter().map(|l| n.tau2 * l).collect::<Vec<_>>()).collect();

    // no data: the prior N(μ_β, V_β)
    let sys = SulpSystem::from_parts(DMatrix::zeros(0, h), DMatrix::zeros(0, nx), DMatrix::zeros(0, 0));
    let mut st = blank_state(&sys);
    st.mu_beta = mu.clone();
    st.ng = ng.to_vec();
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_beta(&sys, &mut st, &mut r).expect("beta");
        d.push(flat(&st.beta));
    }
    let m = DVector::from_vec(flat(&mu));
    d.check_moments(c, "beta prior", &m, Some(&DMatrix::from_diagonal(&DVector::from_vec(vdiag.clone()))), K_SE);

    // dense stacked GLS: vec over (t, h) with Ω = I_T ⊗ Σ_u
    let (t, k) = (6, 2);
    let x = normal_mat(t, nx, &mut r);
    let z = normal_mat(t, k, &mut r);
    let y = normal_mat(t, h, &mut r);
    let g = normal_mat(k, h, &mut r) * 0.3;
    let sys = SulpSystem::from_parts(y.clone(), x.clone(), z.clone());
    let mut st = blank_state(&sys);
    st.mu_beta = mu.clone();
    st.ng = ng.to_vec();
    st.gamma = g.clone();
    st.sigma_u = sigma3();
    let sinv = sigma3().try_inverse().unwrap();
    let n = nx * h;
    let mut dmat = DMatrix::zeros(t * h, n);
    let mut omega_inv = DMatrix::zeros(t * h, t * h);
    let ytil = &y - &z * &g;
    let mut yv = DVector::zeros(t * h);
    for s in 0..t {
        for a in 0..h {
            yv[s * h + a] = ytil[(s, a)];
            for b in 0..h {
                omega_inv[(s * h + a, s * h + b)] = sinv[(a, b)];
            }
            for i in 0..nx {
                dmat[(s * h + a, i * h + a)] = x[(s, i)];
            }
        }
    }
    let vinv = DMatrix::from_diagonal(&DVector::from_vec(vdiag.iter().map(|v| 1.0 / v).collect()));
    let prec = dmat.transpose() * &omega_inv * &dmat + &vinv;
    let cov = prec.try_inverse().unwrap();
    let post_mean = &cov * (dmat.transpose() * &omega_inv * yv + &vinv * DVector::from_vec(flat(&mu)));
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_beta(&sys, &mut st, &mut r).expect("beta");
        d.push(flat(&st.beta));
    }
    d.check_moments(c, "beta dense", &post_mean, Some(&cov), K_SE);
}

fn gamma_prior_and_dense(c: &mut Checks, run: Pass) {
    let (h, k) = (3, 2);
    let mut r = run.rng(2);
    let m0 = DMatrix::from_row_slice(k, h, &[0.4, 0.0, -0.3, 0.1, 0.2, 0.0]);
    let vg = DVector::from_vec(vec![0.5, 2.0]);
    let sigma = sigma3();
    // cov of vec over (j, h): δ_jj' v_j Σ_hh'
    let kron = DMatrix::from_fn(k * h, k * h, |p, q| {
        let (j1, h1, j2, h2) = (p / h, p % h, q / h, q % h);
        if j1 == j2 {
            vg[j1] * sigma[(h1, h2)]
        } else {
            0.0
        }
    });

    let setup = |t: usize, r: &mut SulpRng| {
        let x = normal_mat(t, 1, r);
        let z = normal_mat(t, k, r);
        let y = normal_mat(t, h, r);
        let sys = SulpSystem::from_parts(y, x, z);
        let mut p = priors_for(&sys, None);
        p.controls.m_gamma = m0.clone();
        p.controls.v_gamma = vg.clone();
        (sys, p)
    };

    let (sys, p) = setup(0, &mut r);
    let pre = Precomputed::new(&sys, &p).expect("precompute");
    let mut st = blank_state(&sys);
    st.sigma_u = sigma.clone();
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_gamma(&sys, &pre, &mut st, &mut r).expect("gamma");
        d.push(flat(&st.gamma));
    }
    d.check_moments(c, "gamma prior", &DVector::from_vec(flat(&m0)), Some(&kron), K_SE);

    let t = 6;
    let (sys, p) = setup(t, &mut r);
    let pre = Precomputed::new(&sys, &p).expect("precompute");
    let mut st = blank_state(&sys);
    st.sigma_u = sigma.clone();
    st.beta = DMatrix::from_row_slice(1, h, &[0.8, 0.4, 0.1]);
    let e = &sys.y - &sys.x * &st.beta;
    // e_t = Γ'z_t + u_t, stacked over (t, h)
    let mut gmat = DMatrix::zeros(t * h, k * h);
    let mut ev = DVector::zeros(t * h);
    let sinv = sigma.clone().try_inverse().unwrap();
    let mut omega_inv = DMatrix::zeros(t * h, t * h);
    for s in 0..t {
        for a in 0..h {
            ev[s * h + a] = e[(s, a)];
            for j in 0..k {
                gmat[(s * h + a, j * h + a)] = sys.z[(s, j)];
            }
            for b in 0..h {
                omega_inv[(s * h + a, s * h + b)] = sinv[(a, b)];
            }
        }
    }
    let pinv = kron.clone().try_inverse().unwrap();
    let prec = &pinv + gmat.transpose() * &omega_inv * &gmat;
    let cov = prec.try_inverse().unwrap();
    let mu = &cov * (&pinv * DVector::from_vec(flat(&m0)) + gmat.transpose() * &omega_inv * ev);
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_gamma(&sys, &pre, &mut st, &mut r).expect("gamma");
        d.push(flat(&st.gamma));
    }
    d.check_moments(c, "gamma dense", &mu, Some(&cov), K_SE);
}

fn upper(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).map(|(a, b)| m[(a, b)]).collect()
}

fn sigma_u_prior_and_dense(c: &mut Checks, run: Pass) {
    let h = 3;
    let mut r = run.rng(3);
    // s0 large enough for the draws to have finite variance
    let cp = CovPrior { s0: 12.0, s_scale: 1.5 };
    let sys = SulpSystem::from_parts(DMatrix::zeros(0, h), DMatrix::zeros(0, 1), DMatrix::zeros(0, 0));
    let p = priors_for(&sys, Some(cp));
    let mut st = blank_state(&sys);
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_sigma_u(&sys, &p, &mut st, &mut r).expect("sigma_u");
        d.push(upper(&st.sigma_u));
    }
    let target = &p.cov_scale / (cp.s0 - h as f64 - 1.0);
    d.check_moments(c, "sigma_u prior", &DVector::from_vec(upper(&target)), None, K_SE);

    // with data and a controls block: IW(s0 + T + k, S0 + U'U + (Γ−M)'V⁻¹(Γ−M))
    let (t, k) = (10, 2);
    let sys = SulpSystem::from_parts(normal_mat(t, h, &mut r), normal_mat(t, 1, &mut r), normal_mat(t, k, &mut r));
    let mut p = priors_for(&sys, Some(cp));
    p.controls.m_gamma = DMatrix::from_element(k, h, 0.1);
    p.controls.v_gamma = DVector::from_vec(vec![0.5, 2.0]);
    let mut st = blank_state(&sys);
    st.beta = DMatrix::from_row_slice(1, h, &[0.5, 0.2, -0.1]);
    st.gamma = normal_mat(k, h, &mut r) * 0.5;
    let u = &sys.y - &sys.x * &st.beta - &sys.z * &st.gamma;
    let dg = &st.gamma - &p.controls.m_gamma;
    let mut scale = &p.cov_scale + u.transpose() * &u;
    for j in 0..k {
        scale += dg.row(j).transpose() * dg.row(j) / p.controls.v_gamma[j];
    }
    let df = 12.0 + (t + k) as f64;
    let target = &scale / (df - h as f64 - 1.0);
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_sigma_u(&sys, &p, &mut st, &mut r).expect("sigma_u");
        d.push(upper(&st.sigma_u));
    }
    d.check_moments(c, "sigma_u dense", &DVector::from_vec(upper(&target)), None, K_SE);

    // H = 1 is inverse gamma with shape (s0 + T)/2 and scale (S0 + u'u)/2
    let t = 5;
    let sys = SulpSystem::from_parts(normal_mat(t, 1, &mut r), DMatrix::zeros(t, 1), DMatrix::zeros(t, 0));
    let cp1 = CovPrior { s0: 12.0, s_scale: 1.0 };
    let p = priors_for(&sys, Some(cp1));
    let mut st = blank_state(&sys);
    let ss: f64 = sys.y.iter().map(|v| v * v).sum();
    let (a, b) = ((12.0 + t as f64) / 2.0, (p.cov_scale[(0, 0)] + ss) / 2.0);
    let (m, v) = (b / (a - 1.0), b * b / ((a - 1.0).powi(2) * (a - 2.0)));
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_sigma_u(&sys, &p, &mut st, &mut r).expect("sigma_u");
        d.push([st.sigma_u[(0, 0)]]);
    }
    d.check_moments(c, "sigma_u scalar", &DVector::from_element(1, m), Some(&DMatrix::from_element(1, 1, v)), K_SE);
}

fn gp_mean_dense(c: &mut Checks, run: Pass) {
    let h = 3;
    let mut r = run.rng(4);
    let kmat = gp_kernel_matrix(h, 0.3, 1.0);
    let beta = DVector::from_vec(vec![1.0, 0.4, -0.2]);
    let v = DVector::from_vec(vec![0.5, 1.0, 2.0]);
    // precision form, independent of the K(K+V)⁻¹ form used by the sampler
    let vinv = DMatrix::from_diagonal(&v.map(|x| 1.0 / x));
    let prec = kmat.clone().try_inverse().unwrap() + &vinv;
    let cov = prec.try_inverse().unwrap();
    let mu = &cov * (&vinv * &beta);
    let mut d = Draws::new();
    for _ in 0..run.n {
        d.push(draw_gp_mean(&beta, &kmat, &v, &mut r).expect("mu").iter().copied());
    }
    d.check_moments(c, "mu_beta dense", &mu, Some(&cov), K_SE);

    // uninformative β: the GP prior itself
    let vbig = DVector::from_element(h, 1e10);
    let mut d = Draws::new();
    for _ in 0..run.n {
        d.push(draw_gp_mean(&beta, &kmat, &vbig, &mut r).expect("mu").iter().copied());
    }
    d.check_moments(c, "mu_beta prior", &DVector::zeros(h), Some(&kmat), K_SE);
}

fn ng_steps(c: &mut Checks, run: Pass) {
    let mut r = run.rng(5);
    // prior → data → conditional reproduces the prior v ~ Gamma(ϑ, ϑτ̃²/2)
    for theta in [0.1, 1.0] {
        let tt = 1.5;
        let prior = NgPrior { a_tau: 0.01, b_tau: 0.01, theta_lambda: theta };
        let ng = NgParams::from_tau_tilde2(tt, DVector::from_element(1, 1.0));
        let rate = theta * tt / 2.0;
        let mut out = Vec::with_capacity(run.n);
        for _ in 0..run.n {
            let v0 = gamma(theta, rate, &mut r).expect("gamma");
            let dev = DVector::from_element(1, v0.sqrt() * std_normal(&mut r));
            let v1 = draw_ng_locals(&dev, &DVector::zeros(1), &ng, &prior, &mut r).expect("locals")[0];
            out.push(v1);
        }
        let (m, v) = (theta / rate, theta / (rate * rate));
        c.within_se(&format!("ng local prior mean (theta={theta})"), mean(&out), m, se(&out), K_SE);
        let sq: Vec<f64> = out.iter().map(|x| (x - m).powi(2)).collect();
        c.within_se(&format!("ng local prior var (theta={theta})"), mean(&sq), v, se(&sq), K_SE);
    }

    // fixed deviation: GIG(ϑ − ½, d², ϑτ̃²) mean from the Bessel ratio
    let (theta, tt, dev) = (0.1, 1.5, 0.7);
    let prior = NgPrior { a_tau: 0.01, b_tau: 0.01, theta_lambda: theta };
    let ng = NgParams::from_tau_tilde2(tt, DVector::from_element(1, 1.0));
    let (lam, chi, psi) = (theta - 0.5, dev * dev, theta * tt);
    let w = (chi * psi).sqrt();
    let target = (chi / psi).sqrt() * bessel_k(lam + 1.0, w) / bessel_k(lam, w);
    let out: Vec<f64> = (0..run.n)
        .map(|_| draw_ng_locals(&DVector::from_element(1, dev), &DVector::zeros(1), &ng, &prior, &mut r).expect("locals")[0])
        .collect();
    c.within_se("ng local bessel mean", mean(&out), target, se(&out), K_SE);

    // global: prior → locals → conditional reproduces Gamma(a, b)
    let prior = NgPrior { a_tau: 2.0, b_tau: 3.0, theta_lambda: 0.5 };
    let h = 3;
    let out: Vec<f64> = (0..run.n)
        .map(|_| {
            let t0 = gamma(2.0, 3.0, &mut r).unwrap();
            let v = DVector::from_fn(h, |_, _| gamma(0.5, 0.5 * t0 / 2.0, &mut r).unwrap());
            draw_ng_global(&v, &prior, &mut r).unwrap()
        })
        .collect();
    c.within_se("ng global prior mean", mean(&out), 2.0 / 3.0, se(&out), K_SE);
    let sq: Vec<f64> = out.iter().map(|x| (x - 2.0 / 3.0).powi(2)).collect();
    c.within_se("ng global prior var", mean(&sq), 2.0 / 9.0, se(&sq), K_SE);

    // H = 1, v = 2, ϑ = 0.1, a = b = 0.01: Gamma(0.11, 0.11) with mean 1
    let out: Vec<f64> = (0..run.n)
        .map(|_| draw_ng_global(&DVector::from_element(1, 2.0), &NgPrior::default(), &mut r).unwrap())
        .collect();
    c.within_se("ng global gamma(0.11, 0.11)", mean(&out), 1.0, se(&out), K_SE);
}

/// One latent shock (or two) with instruments and explicit values.
fn latent_system(y: DMatrix<f64>, z: DMatrix<f64>, m: DMatrix<f64>, loads_on: Vec<usize>, nx: usize) -> SulpSystem {
    let t = y.nrows();
    let mut sys = SulpSystem::from_parts(y, DMatrix::zeros(t, nx), z);
    sys.latent = vec![true; nx];
    sys.instruments = Some(InstrumentBlock {
        names: (0..m.ncols()).map(|j| format!("m{j}")).collect(),
        values: m,
        loads_on,
    });
    sys
}

fn measurement_steps(c: &mut Checks, run: Pass) {
    let mut r = run.rng(6);
    let n01 = Normal::new(0.0, 1.0).unwrap();

    // no data: φ ~ N(1, 1) on φ > 0, δ ~ N(0, 10), σ²_ν ~ IG(3, 3)
    let sys = latent_system(DMatrix::zeros(0, 2), DMatrix::zeros(0, 1), DMatrix::zeros(0, 1), vec![0], 1);
    let p = priors_for(&sys, None);
    let mp = p.hyper.measurement;
    let mut st = blank_state(&sys);
    let init = MeasurementState {
        phi: DVector::from_element(1, 1.0),
        delta: DMatrix::zeros(1, 1),
        sigma_nu: DMatrix::identity(1, 1),
    };
    let mut d = Draws::new();
    for _ in 0..run.n {
        st.measurement = Some(init.clone());
        draw_measurement(&sys, &p, &mut st, &mut r).expect("measurement");
        let ms = st.measurement.as_ref().unwrap();
        d.push([ms.phi[0], ms.delta[(0, 0)], ms.sigma_nu[(0, 0)]]);
    }
    let sd = mp.phi_var.sqrt();
    let alpha = -mp.phi_mean / sd;
    let phi_mean = mp.phi_mean + sd * n01.pdf(alpha) / n01.sf(alpha);
    let ig_mean = mp.b_sigma_nu / (mp.a_sigma_nu - 1.0);
    d.check_moments(c, "measurement prior", &DVector::from_vec(vec![phi_mean, 0.0, ig_mean]), None, K_SE);
    let dv: Vec<f64> = d.column(1).iter().map(|x| x * x).collect();
    c.within_se("measurement prior delta var", mean(&dv), mp.delta_var, se(&dv), K_SE);

    // data: (φ, δ) | σ²_ν Gaussian regression, then σ²_ν | residuals
    let t = 40;
    let x = normal_mat(t, 1, &mut r);
    let z = normal_mat(t, 1, &mut r);
    let m = &x * 2.0 + &z * 0.3 + normal_mat(t, 1, &mut r) * 0.7;
    let sys = latent_system(DMatrix::zeros(t, 2), z.clone(), m.clone(), vec![0], 1);
    let mut st = blank_state(&sys);
    st.x = x.clone();
    let s_nu = 0.5;
    let mut w = DMatrix::zeros(t, 2);
    w.column_mut(0).copy_from(&x.column(0));
    w.column_mut(1).copy_from(&z.column(0));
    let prior_prec = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / mp.phi_var, 1.0 / mp.delta_var]));
    let prec = w.transpose() * &w / s_nu + &prior_prec;
    let cov = prec.clone().try_inverse().unwrap();
    let mu = &cov * (w.transpose() * m.column(0) / s_nu + &prior_prec * DVector::from_vec(vec![mp.phi_mean, 0.0]));
    let resid = m.column(0) - &w * &mu;
    let e_ssr = resid.norm_squared() + (&w * &cov * w.transpose()).trace();
    let s2_mean = (mp.b_sigma_nu + 0.5 * e_ssr) / (mp.a_sigma_nu + 0.5 * t as f64 - 1.0);
    let init = MeasurementState {
        phi: DVector::from_element(1, 1.0),
        delta: DMatrix::zeros(1, 1),
        sigma_nu: DMatrix::from_element(1, 1, s_nu),
    };
    let mut d = Draws::new();
    let mut s2 = Vec::with_capacity(run.n);
    for _ in 0..run.n {
        st.measurement = Some(init.clone());
        draw_measurement(&sys, &p, &mut st, &mut r).expect("measurement");
        let ms = st.measurement.as_ref().unwrap();
        d.push([ms.phi[0], ms.delta[(0, 0)]]);
        s2.push(ms.sigma_nu[(0, 0)]);
    }
    d.check_moments(c, "measurement dense", &mu, Some(&cov), K_SE);
    c.within_se("measurement sigma2 mean", mean(&s2), s2_mean, se(&s2), K_SE);

    // correlated errors, no data: Σ_ν ~ IW(n_m + 4, 3I) with mean I
    let mut sys = latent_system(DMatrix::zeros(0, 2), DMatrix::zeros(0, 0), DMatrix::zeros(0, 2), vec![0, 0], 1);
    sys.flags.correlated_measurement_errors = true;
    let mut st = blank_state(&sys);
    let init = MeasurementState {
        phi: DVector::from_element(2, 1.0),
        delta: DMatrix::zeros(0, 2),
        sigma_nu: DMatrix::identity(2, 2),
    };
    let mut d = Draws::new();
    for _ in 0..run.n {
        st.measurement = Some(init.clone());
        draw_measurement(&sys, &p, &mut st, &mut r).expect("measurement");
        d.push(upper(&st.measurement.as_ref().unwrap().sigma_nu));
    }
    let df = mp.sigma_nu_df(2);
    let target = DMatrix::identity(2, 2) * (mp.s0_nu_scale / (df - 3.0));
    d.check_moments(c, "sigma_nu prior", &DVector::from_vec(upper(&target)), None, K_SE);
}

fn missing_steps(c: &mut Checks, run: Pass) {
    let h = 3;
    let mut r = run.rng(7);
    let sigma = sigma3();
    let x = DMatrix::from_row_slice(2, 1, &[0.7, -1.1]);
    let z = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let beta = DMatrix::from_row_slice(1, h, &[0.9, 0.5, 0.2]);
    let gamma = DMatrix::from_row_slice(1, h, &[0.1, -0.1, 0.3]);
    // row 0: horizons 0 and 2 missing; row 1: everything missing
    let y = DMatrix::from_row_slice(2, h, &[f64::NAN, 0.4, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
    let sys = SulpSystem::from_parts(y.clone(), x.clone(), z.clone());
    let p = priors_for(&sys, None);
    let pre = Precomputed::new(&sys, &p).expect("precompute");
    let mut st = blank_state(&sys);
    st.beta = beta.clone();
    st.gamma = gamma.clone();
    st.sigma_u = sigma.clone();
    st.y = y.map(|v| if v.is_nan() { 0.0 } else { v });
    let fit = |t: usize| &beta.transpose() * x.row(t).transpose() + gamma.transpose() * z.row(t).transpose();
    let (m0, c0) = gaussian_conditional(&fit(0), &sigma, &[0, 2], &[1], &DVector::from_element(1, 0.4));
    let mut d0 = Draws::new();
    let mut d1 = Draws::new();
    for _ in 0..run.n {
        draw_missing(&sys, &pre, &mut st, &mut r).expect("missing");
        d0.push([st.y[(0, 0)], st.y[(0, 2)]]);
        d1.push(st.y.row(1).iter().copied());
    }
    d0.check_moments(c, "missing dense", &m0, Some(&c0), K_SE);
    d1.check_moments(c, "missing full row", &fit(1), Some(&sigma), K_SE);
}

fn latent_steps(c: &mut Checks, run: Pass) {
    let mut r = run.rng(8);
    let h = 2;

    // two latent shocks, correlated measurement errors: dense joint Gaussian of (x, m, y)
    let t = 2;
    let z = normal_mat(t, 1, &mut r);
    let m = normal_mat(t, 2, &mut r);
    let y = normal_mat(t, h, &mut r);
    let mut sys = latent_system(y.clone(), z.clone(), m.clone(), vec![0, 1], 2);
    sys.flags.correlated_measurement_errors = true;
    let beta = DMatrix::from_row_slice(2, h, &[0.8, 0.3, -0.4, 0.6]);
    let gamma = DMatrix::from_row_slice(1, h, &[0.2, -0.1]);
    let sigma_u = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.9]);
    let phi = DVector::from_vec(vec![1.2, 0.7]);
    let delta = DMatrix::from_row_slice(1, 2, &[0.1, -0.2]);
    let sigma_nu = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.6]);
    let mut st = blank_state(&sys);
    st.beta = beta.clone();
    st.gamma = gamma.clone();
    st.sigma_u = sigma_u.clone();
    st.measurement = Some(MeasurementState { phi: phi.clone(), delta: delta.clone(), sigma_nu: sigma_nu.clone() });
    let phi_m = DMatrix::from_diagonal(&phi);
    let bt = beta.transpose();
    let mut joint = DMatrix::zeros(6, 6);
    joint.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::identity(2, 2));
    joint.view_mut((2, 0), (2, 2)).copy_from(&phi_m);
    joint.view_mut((0, 2), (2, 2)).copy_from(&phi_m.transpose());
    joint.view_mut((4, 0), (2, 2)).copy_from(&bt);
    joint.view_mut((0, 4), (2, 2)).copy_from(&beta);
    joint.view_mut((2, 2), (2, 2)).copy_from(&(&phi_m * phi_m.transpose() + &sigma_nu));
    joint.view_mut((4, 4), (2, 2)).copy_from(&(&bt * &beta + &sigma_u));
    joint.view_mut((4, 2), (2, 2)).copy_from(&(&bt * phi_m.transpose()));
    joint.view_mut((2, 4), (2, 2)).copy_from(&(&phi_m * &beta));
    let mut draws = vec![Draws::new(), Draws::new()];
    for _ in 0..run.n {
        draw_latent_shocks(&sys, &mut st, &mut r).expect("latent");
        for (s, d) in draws.iter_mut().enumerate() {
            d.push(st.x.row(s).iter().copied());
        }
    }
    for (s, d) in draws.iter().enumerate() {
        let zt = z[(s, 0)];
        let mu = DVector::from_vec(vec![
            0.0,
            0.0,
            delta[(0, 0)] * zt,
            delta[(0, 1)] * zt,
            gamma[(0, 0)] * zt,
            gamma[(0, 1)] * zt,
        ]);
        let obs = DVector::from_vec(vec![m[(s, 0)], m[(s, 1)], y[(s, 0)], y[(s, 1)]]);
        let (cm, cc) = gaussian_conditional(&mu, &joint, &[0, 1], &[2, 3, 4, 5], &obs);
        d.check_moments(c, &format!("latent dense t={s}"), &cm, Some(&cc), K_SE);
    }

    // single shock, β = 0, δ = 0, φ = 1, σ²_ν = 1: N(m_t/2, 1/2)
    let mv = DMatrix::from_row_slice(1, 1, &[1.4]);
    let sys = latent_system(DMatrix::zeros(1, h), DMatrix::zeros(1, 0), mv, vec![0], 1);
    let mut st = blank_state(&sys);
    st.measurement = Some(MeasurementState {
        phi: DVector::from_element(1, 1.0),
        delta: DMatrix::zeros(0, 1),
        sigma_nu: DMatrix::identity(1, 1),
    });
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_latent_shocks(&sys, &mut st, &mut r).expect("latent");
        d.push([st.x[(0, 0)]]);
    }
    d.check_moments(c, "latent scalar", &DVector::from_element(1, 0.7), Some(&DMatrix::from_element(1, 1, 0.5)), K_SE);

    // uninformative instrument and zero responses: the N(0, 1) prior
    if let Some(ms) = st.measurement.as_mut() {
        ms.phi[0] = 0.0;
    }
    let mut d = Draws::new();
    for _ in 0..run.n {
        draw_latent_shocks(&sys, &mut st, &mut r).expect("latent");
        d.push([st.x[(0, 0)]]);
    }
    d.check_moments(c, "latent prior", &DVector::zeros(1), Some(&DMatrix::identity(1, 1)), K_SE);
}

type Group = fn(&mut Checks, Pass);

/// Each group runs at the pinned tolerance; a group with a miss is repeated once on an
/// independent stream with more draws and must then pass outright, which keeps the
/// chance of a false alarm across many checks small without widening any band.
pub fn run() -> Verdict {
    let groups: [(&str, Group); 8] = [
        ("beta", beta_prior_and_dense),
        ("gamma", gamma_prior_and_dense),
        ("sigma_u", sigma_u_prior_and_dense),
        ("gp mean", gp_mean_dense),
        ("ng", ng_steps),
        ("measurement", measurement_steps),
        ("missing", missing_steps),
        ("latent", latent_steps),
    ];
    let mut c = Checks::default();
    let mut reruns = Vec::new();
    for (name, f) in groups {
        let mut first = Checks::default();
        f(&mut first, Pass { n: N, stream: 0 });
        if first.failures.is_empty() {
            c.absorb(first);
            continue;
        }
        let mut second = Checks::default();
        f(&mut second, Pass { n: N * RERUN_FACTOR, stream: 1 });
        reruns.push(format!("{name} ({})", first.failures.join("; ")));
        c.absorb(second);
    }
    let mut v = c.verdict("moment");
    if !reruns.is_empty() {
        v.detail.push_str(&format!(
            "; first-pass misses rechecked with {}x draws on a fresh stream: {}",
            RERUN_FACTOR,
            reruns.join(", ")
        ));
    }
    v
}
