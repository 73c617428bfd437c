//! Classical comparators: horizon-by-horizon OLS with Newey-West standard
//! errors, and smooth local projections with a second-difference penalty.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::SulpSystem;
use crate::error::{Result, SulpError};

/// Newey-West truncation rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "lag", rename_all = "snake_case")]
pub enum Bandwidth {
    /// L_h = h, matching the MA(h) error at horizon h.
    #[default]
    Horizon,
    Fixed(usize),
}

impl Bandwidth {
    pub fn lag(&self, h: usize) -> usize {
        match *self {
            Bandwidth::Horizon => h,
            Bandwidth::Fixed(l) => l,
        }
    }
}

/// Point estimates and standard errors of one impulse response, in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalLpResult {
    pub beta_hat: Vec<f64>,
    pub se: Vec<f64>,
    /// Truncation lag used at each horizon.
    pub bandwidth: Vec<usize>,
    /// Rows used at each horizon.
    pub n_obs: Vec<usize>,
    /// Chosen penalty (smooth LP only).
    pub lambda: Option<f64>,
    /// (λ, held-out mean squared error) pairs (smooth LP only).
    pub cv_curve: Vec<(f64, f64)>,
}

impl ClassicalLpResult {
    /// Gaussian intervals β̂ ± z·se.
    pub fn interval(&self, level: f64) -> Result<Vec<(f64, f64)>> {
        if !(level > 0.0 && level < 1.0) {
            return Err(SulpError::InvalidParameter(format!("interval level {level} outside (0, 1)")));
        }
        let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
        Ok(self.beta_hat.iter().zip(&self.se).map(|(b, s)| (b - z * s, b + z * s)).collect())
    }
}

/// Σ_{|l|≤L} (1 − |l|/(L+1)) Γ_l for score rows ψ_t (T × p).
pub fn bartlett_long_run(scores: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let mut s = scores.transpose() * scores;
    let t = scores.nrows();
    for l in 1..=lag.min(t.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let g = scores.rows(l, t - l).transpose() * scores.rows(0, t - l);
        s += (&g + g.transpose()) * w;
    }
    s
}

fn exact_cholesky(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let c = Cholesky::new(a).ok_or_else(|| SulpError::RankDeficient(what.to_string()))?;
    let d = c.l_dirty().diagonal();
    if d.iter().any(|v| v * v < 1e-12 * scale) {
        return Err(SulpError::RankDeficient(what.to_string()));
    }
    Ok(c)
}

fn observed_rows(sys: &SulpSystem, h: usize) -> Vec<usize> {
    (0..sys.t()).filter(|&t| !sys.y[(t, h)].is_nan()).collect()
}

/// Regressor matrix (shock of interest first, then other shocks, then controls) restricted to `rows`.
fn regressors(sys: &SulpSystem, shock: usize, rows: &[usize]) -> DMatrix<f64> {
    let nx = sys.n_shocks();
    let mut order = vec![shock];
    order.extend((0..nx).filter(|&i| i != shock));
    let p = nx + sys.k();
    DMatrix::from_fn(rows.len(), p, |r, c| {
        let t = rows[r];
        if c < nx {
            sys.x[(t, order[c])]
        } else {
            sys.z[(t, c - nx)]
        }
    })
}

fn check_shock(sys: &SulpSystem, shock: usize) -> Result<()> {
    if shock >= sys.n_shocks() {
        return Err(SulpError::InvalidParameter(format!("shock index {shock} out of range")));
    }
    Ok(())
}

/// OLS of y_{t,h} on (x_t, z_t) at each horizon, complete cases only, with Bartlett HAC variance.
pub fn ols_lp_hac(sys: &SulpSystem, shock: usize, bandwidth: Bandwidth) -> Result<ClassicalLpResult> {
    check_shock(sys, shock)?;
    let h_count = sys.h();
    let mut out = ClassicalLpResult {
        beta_hat: Vec::with_capacity(h_count),
        se: Vec::with_capacity(h_count),
        bandwidth: Vec::with_capacity(h_count),
        n_obs: Vec::with_capacity(h_count),
        lambda: None,
        cv_curve: Vec::new(),
    };
    for h in 0..h_count {
        let rows = observed_rows(sys, h);
        let w = regressors(sys, shock, &rows);
        if rows.len() <= w.ncols() + 1 {
            return Err(SulpError::InsufficientSample {
                needed: w.ncols() + 2,
                available: rows.len(),
            });
        }
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&t| sys.y[(t, h)]));
        let chol = exact_cholesky(w.transpose() * &w, &format!("LP design at horizon {h}"))?;
        let coef = chol.solve(&(w.transpose() * &y));
        let u = &y - &w * &coef;
        let mut scores = w.clone();
        for (r, mut row) in scores.row_iter_mut().enumerate() {
            row *= u[r];
        }
        let lag = bandwidth.lag(h);
        let meat = bartlett_long_run(&scores, lag);
        let inv = chol.inverse();
        let v = &inv * meat * &inv;
        out.beta_hat.push(coef[0]);
        out.se.push(v[(0, 0)].max(0.0).sqrt());
        out.bandwidth.push(lag);
        out.n_obs.push(rows.len());
    }
    Ok(out)
}

/// Settings of the penalized estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothLpConfig {
    /// Order of the differencing penalty.
    pub order: usize,
    /// Candidate penalties, as multiples of the mean partialled shock variance Σ_h x̃_h'x̃_h / H.
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    /// HAC truncation lag for the sandwich; `None` uses H̃.
    pub hac_lag: Option<usize>,
}

impl Default for SmoothLpConfig {
    fn default() -> Self {
        let mut grid = vec![0.0];
        grid.extend((0..=20).map(|i| 10f64.powf(-3.0 + 0.35 * i as f64)));
        Self {
            order: 2,
            lambda_grid: grid,
            folds: 5,
            hac_lag: None,
        }
    }
}

/// r-th difference operator, (H − r) × H.
pub fn difference_matrix(h: usize, r: usize) -> DMatrix<f64> {
    let mut d = DMatrix::identity(h, h);
    for _ in 0..r.min(h) {
        let n = d.nrows();
        d = DMatrix::from_fn(n - 1, h, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    if r >= h {
        return DMatrix::zeros(0, h);
    }
    d
}

/// Per-horizon partialled shock and response on the given origin set.
struct Partialled {
    /// Origins used at each horizon.
    rows: Vec<Vec<usize>>,
    xt: Vec<DVector<f64>>,
    yt: Vec<DVector<f64>>,
    /// (W'W)⁻¹W' pieces to recover control coefficients: coefficients of y and x on the controls.
    gy: Vec<DVector<f64>>,
    gx: Vec<DVector<f64>>,
}

fn partial_out(sys: &SulpSystem, shock: usize, origins: &[usize]) -> Result<Partialled> {
    let mut p = Partialled {
        rows: Vec::new(),
        xt: Vec::new(),
        yt: Vec::new(),
        gy: Vec::new(),
        gx: Vec::new(),
    };
    for h in 0..sys.h() {
        let rows: Vec<usize> = origins.iter().copied().filter(|&t| !sys.y[(t, h)].is_nan()).collect();
        let w = regressors(sys, shock, &rows);
        let c = w.columns(1, w.ncols() - 1).into_owned();
        let x = w.column(0).into_owned();
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&t| sys.y[(t, h)]));
        if rows.len() <= w.ncols() + 1 {
            return Err(SulpError::InsufficientSample {
                needed: w.ncols() + 2,
                available: rows.len(),
            });
        }
        let (gx, gy) = if c.ncols() > 0 {
            let chol = exact_cholesky(c.transpose() * &c, &format!("smooth LP controls at horizon {h}"))?;
            (chol.solve(&(c.transpose() * &x)), chol.solve(&(c.transpose() * &y)))
        } else {
            (DVector::zeros(0), DVector::zeros(0))
        };
        p.xt.push(&x - &c * &gx);
        p.yt.push(&y - &c * &gy);
        p.gx.push(gx);
        p.gy.push(gy);
        p.rows.push(rows);
    }
    Ok(p)
}

/// Cholesky of D + λP. Positive definite whenever every partialled shock is nonzero, but
/// increasingly ill-conditioned as λ grows, so no relative pivot threshold is applied.
fn penalized_cholesky(a: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(a).ok_or_else(|| SulpError::RankDeficient("penalized smooth LP system".into()))
}

fn penalized_solve(p: &Partialled, penalty: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let h = p.xt.len();
    let mut a = penalty * lambda;
    let mut b = DVector::zeros(h);
    for j in 0..h {
        a[(j, j)] += p.xt[j].norm_squared();
        b[j] = p.xt[j].dot(&p.yt[j]);
    }
    Ok(penalized_cholesky(a)?.solve(&b))
}

fn lambda_unit(p: &Partialled) -> f64 {
    p.xt.iter().map(|x| x.norm_squared()).sum::<f64>() / p.xt.len() as f64
}

/// Held-out squared error of the fit on `train` evaluated on `test` origins.
fn fold_error(sys: &SulpSystem, shock: usize, train: &[usize], test: &[usize], penalty: &DMatrix<f64>, grid: &[f64]) -> Result<Vec<(f64, usize)>> {
    let p = partial_out(sys, shock, train)?;
    let unit = lambda_unit(&p);
    let nx = sys.n_shocks();
    grid.iter()
        .map(|&g| {
            let beta = penalized_solve(&p, penalty, g * unit)?;
            let mut sse = 0.0;
            let mut n = 0;
            for h in 0..sys.h() {
                // control coefficients given β_h: γ = g_y − g_x β_h
                let gamma = &p.gy[h] - &p.gx[h] * beta[h];
                for &t in test {
                    let y = sys.y[(t, h)];
                    if y.is_nan() {
                        continue;
                    }
                    let mut fit = beta[h] * sys.x[(t, shock)];
                    let mut c = 0;
                    for i in (0..nx).filter(|&i| i != shock) {
                        fit += gamma[c] * sys.x[(t, i)];
                        c += 1;
                    }
                    for j in 0..sys.k() {
                        fit += gamma[c + j] * sys.z[(t, j)];
                    }
                    sse += (y - fit).powi(2);
                    n += 1;
                }
            }
            Ok((sse, n))
        })
        .collect()
}

/// Penalized LP with λ picked by contiguous-block cross-validation over origins.
///
/// Folds are deterministic, so no random stream is consumed.
pub fn smooth_lp(sys: &SulpSystem, shock: usize, cfg: &SmoothLpConfig) -> Result<ClassicalLpResult> {
    check_shock(sys, shock)?;
    if cfg.lambda_grid.is_empty() || cfg.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(SulpError::InvalidParameter("lambda grid must be nonempty and nonnegative".into()));
    }
    if cfg.folds < 2 {
        return Err(SulpError::InvalidParameter("smooth LP needs at least 2 folds".into()));
    }
    let lam = if cfg.lambda_grid.len() == 1 {
        (cfg.lambda_grid[0], Vec::new())
    } else {
        cross_validate(sys, shock, cfg)?
    };
    smooth_lp_fixed(sys, shock, lam.0, cfg, lam.1)
}

fn cross_validate(sys: &SulpSystem, shock: usize, cfg: &SmoothLpConfig) -> Result<(f64, Vec<(f64, f64)>)> {
    let t = sys.t();
    let penalty = {
        let d = difference_matrix(sys.h(), cfg.order);
        d.transpose() * d
    };
    let mut sse = vec![0.0; cfg.lambda_grid.len()];
    let mut count = vec![0usize; cfg.lambda_grid.len()];
    for f in 0..cfg.folds {
        let lo = f * t / cfg.folds;
        let hi = (f + 1) * t / cfg.folds;
        let test: Vec<usize> = (lo..hi).collect();
        let train: Vec<usize> = (0..t).filter(|&s| s < lo || s >= hi).collect();
        for (g, (e, n)) in fold_error(sys, shock, &train, &test, &penalty, &cfg.lambda_grid)?.into_iter().enumerate() {
            sse[g] += e;
            count[g] += n;
        }
    }
    let curve: Vec<(f64, f64)> = cfg
        .lambda_grid
        .iter()
        .zip(sse.iter().zip(&count))
        .map(|(&l, (&e, &n))| (l, e / n.max(1) as f64))
        .collect();
    let best = curve
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    Ok((best.0, curve))
}

/// Penalized LP at a fixed relative penalty `lambda` (multiple of the mean partialled shock variance).
pub fn smooth_lp_fixed(
    sys: &SulpSystem,
    shock: usize,
    lambda: f64,
    cfg: &SmoothLpConfig,
    cv_curve: Vec<(f64, f64)>,
) -> Result<ClassicalLpResult> {
    check_shock(sys, shock)?;
    let h_count = sys.h();
    let all: Vec<usize> = (0..sys.t()).collect();
    let p = partial_out(sys, shock, &all)?;
    let penalty = {
        let d = difference_matrix(h_count, cfg.order);
        d.transpose() * d
    };
    let unit = lambda_unit(&p);
    let beta = penalized_solve(&p, &penalty, lambda * unit)?;

    // sandwich A⁻¹ Ω A⁻¹ with Ω the HAC long-run variance of the per-origin score vector
    let mut a = &penalty * (lambda * unit);
    for j in 0..h_count {
        a[(j, j)] += p.xt[j].norm_squared();
    }
    let ainv = penalized_cholesky(a)?.inverse();
    let mut scores = DMatrix::zeros(sys.t(), h_count);
    for h in 0..h_count {
        for (r, &t) in p.rows[h].iter().enumerate() {
            let u = p.yt[h][r] - p.xt[h][r] * beta[h];
            scores[(t, h)] = p.xt[h][r] * u;
        }
    }
    let lag = cfg.hac_lag.unwrap_or(h_count - 1);
    let v = &ainv * bartlett_long_run(&scores, lag) * &ainv;
    Ok(ClassicalLpResult {
        beta_hat: beta.iter().copied().collect(),
        se: (0..h_count).map(|j| v[(j, j)].max(0.0).sqrt()).collect(),
        bandwidth: vec![lag; h_count],
        n_obs: p.rows.iter().map(|r| r.len()).collect(),
        lambda: Some(lambda),
        cv_curve,
    })
}
