//! Individual conditional updates of the Gibbs sampler.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dataset::SulpSystem;
use crate::error::{Result, SulpError};
use crate::linalg::{
    cholesky_jittered, mvn_logpdf_chol, sample_from_precision, spd_cholesky, spd_inverse, std_normal_mat,
    std_normal_vec, symmetrize, Chol,
};
use crate::model::{residuals, ChainState};
use crate::priors::{gp_kernel_matrix, ng_prior_variance, GpKernelParams, GpKernelPrior, NgParams, NgPrior, Priors};
use crate::random::{gamma, inv_gamma, inv_wishart, std_normal, truncated_normal, Gig};

/// Lower bound on the local prior variances τ²λ_h².
pub const NG_VARIANCE_FLOOR: f64 = 1e-8;

/// Quantities that depend only on Z and the controls prior.
#[derive(Debug, Clone)]
pub struct Precomputed {
    /// Cholesky of Z'Z + V_γ⁻¹.
    pub gamma_prec_chol: Option<Chol>,
    /// V_γ⁻¹ M_γ (k × H).
    pub gamma_prior_linear: DMatrix<f64>,
    /// Ordered (row, horizons) groups of missing cells.
    pub missing_rows: Vec<(usize, Vec<usize>)>,
}

impl Precomputed {
    pub fn new(sys: &SulpSystem, priors: &Priors) -> Result<Self> {
        let k = sys.k();
        let cp = &priors.controls;
        let (gamma_prec_chol, gamma_prior_linear) = if k > 0 {
            let mut p = sys.z.transpose() * &sys.z;
            for j in 0..k {
                p[(j, j)] += 1.0 / cp.v_gamma[j];
            }
            let lin = DMatrix::from_fn(k, sys.h(), |j, h| cp.m_gamma[(j, h)] / cp.v_gamma[j]);
            (Some(spd_cholesky(&p, "Z'Z + V_gamma^-1")?), lin)
        } else {
            (None, DMatrix::zeros(0, sys.h()))
        };
        let mut missing_rows: Vec<(usize, Vec<usize>)> = Vec::new();
        for &(t, h) in &sys.missing {
            match missing_rows.last_mut() {
                Some((r, hs)) if *r == t => hs.push(h),
                _ => missing_rows.push((t, vec![h])),
            }
        }
        Ok(Self {
            gamma_prec_chol,
            gamma_prior_linear,
            missing_rows,
        })
    }
}

/// Y − ZΓ.
fn y_minus_controls(sys: &SulpSystem, state: &ChainState) -> DMatrix<f64> {
    if sys.k() > 0 {
        &state.y - &sys.z * &state.gamma
    } else {
        state.y.clone()
    }
}

/// Joint draw of all impulse responses B (n_x × H) given everything else.
pub fn draw_beta<R: Rng + ?Sized>(sys: &SulpSystem, state: &mut ChainState, rng: &mut R) -> Result<()> {
    let h = sys.h();
    let nx = sys.n_shocks();
    let n = nx * h;
    let sig_inv = spd_inverse(&state.sigma_u, "Sigma_u")?;
    let xtx = state.x.transpose() * &state.x;
    let ytx = y_minus_controls(sys, state).transpose() * &state.x; // H × n_x
    let lin_data = &sig_inv * &ytx; // H × n_x
    let mut prec = DMatrix::zeros(n, n);
    let mut lin = DVector::zeros(n);
    for i in 0..nx {
        let v = ng_prior_variance(&state.ng[i]);
        for a in 0..nx {
            let s = xtx[(i, a)];
            if s != 0.0 {
                let mut blk = prec.view_mut((i * h, a * h), (h, h));
                blk += &sig_inv * s;
            }
        }
        for hh in 0..h {
            let vi = v[hh].max(NG_VARIANCE_FLOOR);
            prec[(i * h + hh, i * h + hh)] += 1.0 / vi;
            lin[i * h + hh] = lin_data[(hh, i)] + state.mu_beta[(i, hh)] / vi;
        }
    }
    let b = sample_from_precision(&prec, &lin, rng, "beta posterior precision")?;
    for i in 0..nx {
        for hh in 0..h {
            state.beta[(i, hh)] = b[i * h + hh];
        }
    }
    Ok(())
}

/// Matrix-normal draw Γ ~ MN(M̄, V̄_γ, Σ_u).
pub fn draw_gamma<R: Rng + ?Sized>(
    sys: &SulpSystem,
    pre: &Precomputed,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let Some(c) = pre.gamma_prec_chol.as_ref() else {
        return Ok(());
    };
    let rhs = sys.z.transpose() * (&state.y - &state.x * &state.beta) + &pre.gamma_prior_linear;
    let mean = c.solve(&rhs);
    let e = std_normal_mat(sys.k(), sys.h(), rng);
    let cv_e = c
        .l_dirty()
        .tr_solve_lower_triangular(&e)
        .ok_or_else(|| SulpError::NotPositiveDefinite("gamma precision".into()))?;
    let cs = spd_cholesky(&state.sigma_u, "Sigma_u")?.l();
    state.gamma = mean + cv_e * cs.transpose();
    Ok(())
}

/// Σ_u ~ IW(s0 + T + k, S0 + U'U + (Γ−M)'V_γ⁻¹(Γ−M)).
pub fn draw_sigma_u<R: Rng + ?Sized>(
    sys: &SulpSystem,
    priors: &Priors,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let u = residuals(sys, state);
    let mut scale = &priors.cov_scale + u.transpose() * &u;
    let k = sys.k();
    if k > 0 {
        let cp = &priors.controls;
        let d = &state.gamma - &cp.m_gamma;
        let dw = DMatrix::from_fn(k, sys.h(), |j, h| d[(j, h)] / cp.v_gamma[j]);
        scale += d.transpose() * dw;
    }
    symmetrize(&mut scale);
    let df = priors.hyper.cov.s0 + (sys.t() + k) as f64;
    state.sigma_u = inv_wishart(df, &scale, rng)?;
    Ok(())
}

/// Draw μ_β ~ N(K(K+V)⁻¹β, K(K+V)⁻¹V) for one shock.
pub fn draw_gp_mean<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    kernel: &DMatrix<f64>,
    v: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let h = beta.len();
    let mut a = kernel.clone();
    for i in 0..h {
        a[(i, i)] += v[i];
    }
    let ca = spd_cholesky(&a, "K + V")?;
    // W = (K+V)⁻¹K, mean = W'β, cov = K − K(K+V)⁻¹K
    let w = ca.solve(kernel);
    let mean = w.transpose() * beta;
    let mut cov = kernel - kernel * &w;
    symmetrize(&mut cov);
    let z = std_normal_vec(h, rng);
    if let Some((c, _)) = cholesky_jittered(&cov) {
        return Ok(mean + c.l() * z);
    }
    let eig = cov.symmetric_eigen();
    let sq = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(mean + eig.eigenvectors * sq.component_mul(&z))
}

/// log N(β | 0, K(ξ,ς) + V), or −inf when the covariance cannot be factored.
pub fn kernel_log_marginal(beta: &DVector<f64>, v: &DVector<f64>, xi: f64, varsigma: f64) -> f64 {
    let h = beta.len();
    let mut a = gp_kernel_matrix(h, xi, varsigma);
    for i in 0..h {
        a[(i, i)] += v[i];
    }
    match cholesky_jittered(&a) {
        Some((c, _)) => mvn_logpdf_chol(beta, &c),
        None => f64::NEG_INFINITY,
    }
}

/// Random-walk proposal scales and acceptance counters for one shock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhTuning {
    pub step_xi: f64,
    pub step_varsigma: f64,
    pub accepted_xi: u64,
    pub accepted_varsigma: u64,
    pub proposed: u64,
}

impl MhTuning {
    pub fn new(step_xi: f64, step_varsigma: f64) -> Self {
        Self {
            step_xi,
            step_varsigma,
            accepted_xi: 0,
            accepted_varsigma: 0,
            proposed: 0,
        }
    }

    pub fn acceptance(&self) -> (f64, f64) {
        let n = self.proposed.max(1) as f64;
        (self.accepted_xi as f64 / n, self.accepted_varsigma as f64 / n)
    }

    /// Robbins–Monro update of the log step sizes.
    pub fn adapt(&mut self, iteration: usize, acc_xi: bool, acc_vs: bool, target: f64) {
        let g = 1.0 / ((iteration + 10) as f64).powf(0.6);
        self.step_xi *= (g * (acc_xi as u8 as f64 - target)).exp();
        self.step_varsigma *= (g * (acc_vs as u8 as f64 - target)).exp();
        self.step_xi = self.step_xi.clamp(1e-5, 10.0);
        self.step_varsigma = self.step_varsigma.clamp(1e-5, 100.0);
    }
}

/// One RW-MH update of ξ then ς for a shock, with μ_β integrated out.
/// Returns the acceptance flags.
pub fn draw_kernel_hyper<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    v: &DVector<f64>,
    kernel: &mut GpKernelParams,
    prior: &GpKernelPrior,
    tuning: &mut MhTuning,
    rng: &mut R,
) -> (bool, bool) {
    let mut cur = kernel_log_marginal(beta, v, kernel.xi, kernel.varsigma) + prior.log_density(kernel.xi, kernel.varsigma);
    tuning.proposed += 1;

    let xi_prop = kernel.xi + tuning.step_xi * std_normal(rng);
    let mut acc_xi = false;
    if prior.xi_in_support(xi_prop) {
        let prop = kernel_log_marginal(beta, v, xi_prop, kernel.varsigma) + prior.log_density(xi_prop, kernel.varsigma);
        let u: f64 = rng.random();
        if u.ln() < prop - cur {
            kernel.xi = xi_prop;
            cur = prop;
            acc_xi = true;
            tuning.accepted_xi += 1;
        }
    }

    let vs_prop = kernel.varsigma + tuning.step_varsigma * std_normal(rng);
    let mut acc_vs = false;
    if prior.varsigma_in_support(vs_prop) {
        let prop = kernel_log_marginal(beta, v, kernel.xi, vs_prop) + prior.log_density(kernel.xi, vs_prop);
        let u: f64 = rng.random();
        if u.ln() < prop - cur {
            kernel.varsigma = vs_prop;
            acc_vs = true;
            tuning.accepted_varsigma += 1;
        }
    }
    (acc_xi, acc_vs)
}

/// Local variances v_h = τ²λ_h² ~ GIG(ϑ − ½, (β_h − μ_h)², ϑτ̃²), floored.
pub fn draw_ng_locals<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    mu: &DVector<f64>,
    ng: &NgParams,
    prior: &NgPrior,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let th = prior.theta_lambda;
    let psi = th * ng.tau_tilde2;
    let mut v = DVector::zeros(beta.len());
    for h in 0..beta.len() {
        let chi = (beta[h] - mu[h]).powi(2);
        v[h] = Gig::new(th - 0.5, chi, psi)?.sample(rng)?.max(NG_VARIANCE_FLOOR);
    }
    Ok(v)
}

/// τ̃² ~ Gamma(a_τ + ϑH, b_τ + ϑ/2 Σ v_h).
pub fn draw_ng_global<R: Rng + ?Sized>(v: &DVector<f64>, prior: &NgPrior, rng: &mut R) -> Result<f64> {
    let th = prior.theta_lambda;
    gamma(prior.a_tau + th * v.len() as f64, prior.b_tau + 0.5 * th * v.sum(), rng)
}

/// Full Normal-Gamma update for one shock.
pub fn draw_ng<R: Rng + ?Sized>(
    beta: &DVector<f64>,
    mu: &DVector<f64>,
    ng: &mut NgParams,
    prior: &NgPrior,
    rng: &mut R,
) -> Result<()> {
    let v = draw_ng_locals(beta, mu, ng, prior, rng)?;
    let tt = draw_ng_global(&v, prior, rng)?;
    ng.tau_tilde2 = tt;
    ng.tau2 = 2.0 / tt;
    ng.lambda2 = v / ng.tau2;
    Ok(())
}

/// Impute missing responses row by row from their conditional Gaussian.
pub fn draw_missing<R: Rng + ?Sized>(
    sys: &SulpSystem,
    pre: &Precomputed,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    if pre.missing_rows.is_empty() {
        return Ok(());
    }
    let h = sys.h();
    let lambda = spd_inverse(&state.sigma_u, "Sigma_u")?;
    for (t, miss) in &pre.missing_rows {
        let t = *t;
        let mut mu = state.beta.transpose() * state.x.row(t).transpose();
        if sys.k() > 0 {
            mu += state.gamma.transpose() * sys.z.row(t).transpose();
        }
        let obs: Vec<usize> = (0..h).filter(|hh| !miss.contains(hh)).collect();
        let nm = miss.len();
        let lmm = DMatrix::from_fn(nm, nm, |a, b| lambda[(miss[a], miss[b])]);
        // linear term of the precision form: Λ_MM μ_M − Λ_MO (y_O − μ_O)
        let mut lin = DVector::from_fn(nm, |a, _| (0..nm).map(|b| lmm[(a, b)] * mu[miss[b]]).sum::<f64>());
        for (a, &m) in miss.iter().enumerate() {
            for &o in &obs {
                lin[a] -= lambda[(m, o)] * (state.y[(t, o)] - mu[o]);
            }
        }
        let draw = sample_from_precision(&lmm, &lin, rng, "missing-y precision")?;
        for (a, &m) in miss.iter().enumerate() {
            state.y[(t, m)] = draw[a];
        }
    }
    Ok(())
}

/// Latent shocks x_t from their per-period Gaussian conditionals.
pub fn draw_latent_shocks<R: Rng + ?Sized>(sys: &SulpSystem, state: &mut ChainState, rng: &mut R) -> Result<()> {
    let latent: Vec<usize> = (0..sys.n_shocks()).filter(|&i| sys.latent[i]).collect();
    if latent.is_empty() {
        return Ok(());
    }
    let block = sys
        .instruments
        .as_ref()
        .ok_or_else(|| SulpError::InvalidDesign("latent shocks need instruments".into()))?;
    let ms = state
        .measurement
        .as_ref()
        .ok_or_else(|| SulpError::InvalidDesign("latent shocks need measurement parameters".into()))?;
    let nl = latent.len();
    let nm = block.values.ncols();
    let pos = |i: usize| latent.iter().position(|&l| l == i);

    // Φ restricted to latent columns (n_m × n_l)
    let mut phi = DMatrix::zeros(nm, nl);
    for (j, &i) in block.loads_on.iter().enumerate() {
        if let Some(p) = pos(i) {
            phi[(j, p)] = ms.phi[j];
        }
    }
    let snu_inv = spd_inverse(&ms.sigma_nu, "Sigma_nu")?;
    let su_inv = spd_inverse(&state.sigma_u, "Sigma_u")?;
    let b_l = DMatrix::from_fn(nl, sys.h(), |p, h| state.beta[(latent[p], h)]);
    let static_prec = phi.transpose() * &snu_inv * &phi + &b_l * &su_inv * b_l.transpose();

    // residual targets with the latent part removed
    let mut r = y_minus_controls(sys, state);
    for i in 0..sys.n_shocks() {
        if !sys.latent[i] {
            for t in 0..sys.t() {
                let xv = state.x[(t, i)];
                for h in 0..sys.h() {
                    r[(t, h)] -= xv * state.beta[(i, h)];
                }
            }
        }
    }
    let mut mtil = block.values.clone();
    if sys.k() > 0 {
        mtil -= &sys.z * &ms.delta;
    }
    // T × n_l linear terms
    let lin_all = &r * &su_inv * b_l.transpose() + &mtil * &snu_inv * &phi;

    for t in 0..sys.t() {
        let mut prec = static_prec.clone();
        for p in 0..nl {
            prec[(p, p)] += 1.0 / state.shock_variance(t, latent[p]);
        }
        let lin = lin_all.row(t).transpose();
        let draw = if nl == 1 {
            let p = prec[(0, 0)];
            DVector::from_element(1, lin[0] / p + std_normal(rng) / p.sqrt())
        } else {
            sample_from_precision(&prec, &lin, rng, "latent shock precision")?
        };
        for p in 0..nl {
            state.x[(t, latent[p])] = draw[p];
        }
    }
    Ok(())
}

/// Regression posterior of (φ_j, δ_j) as a precision/linear pair.
fn measurement_posterior(
    xcol: &DVector<f64>,
    z: &DMatrix<f64>,
    m: &DVector<f64>,
    inv_var: f64,
    priors: &Priors,
) -> (DMatrix<f64>, DVector<f64>) {
    let mp = &priors.hyper.measurement;
    let k = z.ncols();
    let mut w = DMatrix::zeros(xcol.len(), k + 1);
    w.column_mut(0).copy_from(xcol);
    if k > 0 {
        w.view_mut((0, 1), (xcol.len(), k)).copy_from(z);
    }
    let mut prec = w.transpose() * &w * inv_var;
    let mut lin = w.transpose() * m * inv_var;
    prec[(0, 0)] += 1.0 / mp.phi_var;
    lin[0] += mp.phi_mean / mp.phi_var;
    for j in 1..=k {
        prec[(j, j)] += 1.0 / mp.delta_var;
    }
    (prec, lin)
}

/// Draw θ = (φ, δ) ~ N(P⁻¹b, P⁻¹) restricted to φ > 0 at the given coordinates.
///
/// Joint rejection first; if that keeps failing, each restricted coordinate
/// is drawn from its conditional (other coordinates of the block integrated
/// out) by inverse CDF, then the rest conditional on it.
fn draw_truncated_block<R: Rng + ?Sized>(
    prec: &DMatrix<f64>,
    lin: &DVector<f64>,
    positive: &[usize],
    current: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    const MAX_REJECT: usize = 100;
    for _ in 0..MAX_REJECT {
        let d = sample_from_precision(prec, lin, rng, "measurement precision")?;
        if positive.iter().all(|&i| d[i] > 0.0) {
            return Ok(d);
        }
    }
    let cov = spd_inverse(prec, "measurement precision")?;
    let mean = &cov * lin;
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    // start from the current values of the restricted coordinates
    let mut vals: Vec<f64> = positive.iter().map(|&i| current[i].max(1e-8)).collect();
    for (a, &i) in positive.iter().enumerate() {
        let others: Vec<usize> = positive.iter().copied().filter(|&j| j != i).collect();
        let (mu, var) = conditional_normal(&mean, &cov, i, &others, &vals, positive);
        vals[a] = truncated_normal(mu, var.sqrt(), 0.0, f64::INFINITY, rng);
    }
    for (a, &i) in positive.iter().enumerate() {
        fixed.push((i, vals[a]));
    }
    // remaining coordinates given the restricted ones
    let n = lin.len();
    let free: Vec<usize> = (0..n).filter(|i| !positive.contains(i)).collect();
    let mut out = DVector::zeros(n);
    for &(i, v) in &fixed {
        out[i] = v;
    }
    if free.is_empty() {
        return Ok(out);
    }
    let pff = DMatrix::from_fn(free.len(), free.len(), |a, b| prec[(free[a], free[b])]);
    let lf = DVector::from_fn(free.len(), |a, _| {
        lin[free[a]] - fixed.iter().map(|&(i, v)| prec[(free[a], i)] * v).sum::<f64>()
    });
    let d = sample_from_precision(&pff, &lf, rng, "measurement conditional")?;
    for (a, &i) in free.iter().enumerate() {
        out[i] = d[a];
    }
    Ok(out)
}

/// Mean and variance of coordinate `i` given coordinates `others` of a Gaussian.
fn conditional_normal(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    i: usize,
    others: &[usize],
    vals: &[f64],
    order: &[usize],
) -> (f64, f64) {
    if others.is_empty() {
        return (mean[i], cov[(i, i)]);
    }
    let n = others.len();
    let soo = DMatrix::from_fn(n, n, |a, b| cov[(others[a], others[b])]);
    let sio = DVector::from_fn(n, |a, _| cov[(i, others[a])]);
    let dev = DVector::from_fn(n, |a, _| {
        let pos = order.iter().position(|&o| o == others[a]).expect("restricted coordinate");
        vals[pos] - mean[others[a]]
    });
    let w = soo.cholesky().map(|c| c.solve(&sio)).unwrap_or_else(|| DVector::zeros(n));
    (mean[i] + w.dot(&dev), (cov[(i, i)] - w.dot(&sio)).max(1e-300))
}

/// Update (φ, δ) and the measurement-error covariance.
pub fn draw_measurement<R: Rng + ?Sized>(
    sys: &SulpSystem,
    priors: &Priors,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    let Some(block) = sys.instruments.as_ref() else {
        return Ok(());
    };
    let mp = priors.hyper.measurement;
    let nm = block.values.ncols();
    let k = sys.k();
    let t = sys.t();
    let mut ms = state.measurement.take().expect("measurement state present with instruments");
    let correlated = sys.flags.correlated_measurement_errors && nm > 1;

    if !correlated {
        for j in 0..nm {
            let xcol = state.x.column(block.loads_on[j]).into_owned();
            let m = block.values.column(j).into_owned();
            let (prec, lin) = measurement_posterior(&xcol, &sys.z, &m, 1.0 / ms.sigma_nu[(j, j)], priors);
            let pos: &[usize] = if mp.phi_positive { &[0] } else { &[] };
            let mut cur = DVector::zeros(k + 1);
            cur[0] = ms.phi[j];
            let th = draw_truncated_block(&prec, &lin, pos, &cur, rng)?;
            ms.phi[j] = th[0];
            for a in 0..k {
                ms.delta[(a, j)] = th[a + 1];
            }
            let mut ssr = 0.0;
            for s in 0..t {
                let mut e = m[s] - th[0] * xcol[s];
                for a in 0..k {
                    e -= sys.z[(s, a)] * th[a + 1];
                }
                ssr += e * e;
            }
            ms.sigma_nu[(j, j)] = inv_gamma(mp.a_sigma_nu + 0.5 * t as f64, mp.b_sigma_nu + 0.5 * ssr, rng)?;
        }
    } else {
        // SUR over instruments with regressors (x_{i(j)}, z)
        let q = k + 1;
        let n = nm * q;
        let sinv = spd_inverse(&ms.sigma_nu, "Sigma_nu")?;
        let regs: Vec<DMatrix<f64>> = (0..nm)
            .map(|j| {
                let mut w = DMatrix::zeros(t, q);
                w.column_mut(0).copy_from(&state.x.column(block.loads_on[j]));
                if k > 0 {
                    w.view_mut((0, 1), (t, k)).copy_from(&sys.z);
                }
                w
            })
            .collect();
        let mut prec = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        for a in 0..nm {
            for b in 0..nm {
                let s = sinv[(a, b)];
                let mut blk = prec.view_mut((a * q, b * q), (q, q));
                blk += regs[a].transpose() * &regs[b] * s;
                let l = regs[a].transpose() * block.values.column(b) * s;
                let mut seg = lin.rows_mut(a * q, q);
                seg += l;
            }
            prec[(a * q, a * q)] += 1.0 / mp.phi_var;
            lin[a * q] += mp.phi_mean / mp.phi_var;
            for c in 1..q {
                prec[(a * q + c, a * q + c)] += 1.0 / mp.delta_var;
            }
        }
        let pos: Vec<usize> = if mp.phi_positive { (0..nm).map(|a| a * q).collect() } else { vec![] };
        let mut cur = DVector::zeros(n);
        for a in 0..nm {
            cur[a * q] = ms.phi[a];
        }
        let th = draw_truncated_block(&prec, &lin, &pos, &cur, rng)?;
        for a in 0..nm {
            ms.phi[a] = th[a * q];
            for c in 0..k {
                ms.delta[(c, a)] = th[a * q + 1 + c];
            }
        }
        let mut nu = block.values.clone();
        for a in 0..nm {
            let coef = th.rows(a * q, q).into_owned();
            let fit = &regs[a] * coef;
            let mut col = nu.column_mut(a);
            col -= fit;
        }
        let mut scale = DMatrix::identity(nm, nm) * mp.s0_nu_scale + nu.transpose() * &nu;
        symmetrize(&mut scale);
        ms.sigma_nu = inv_wishart(mp.sigma_nu_df(nm) + t as f64, &scale, rng)?;
    }
    state.measurement = Some(ms);
    Ok(())
}
