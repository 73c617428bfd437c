//! VARMA(P, ∞) data-generating processes with exact impulse responses, and
//! the AR(1) toy process.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ControlRole, SulpSystem};
use crate::error::{Result, SulpError};
use crate::linalg::{spd_cholesky, spectral_radius};
use crate::random::{std_normal, substream};

pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BURN_IN: usize = 1000;
pub const AR1_BURN_IN: usize = 200;
const DIVERGENCE_BOUND: f64 = 1e8;

/// On-disk calibration. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub schema_version: u32,
    pub name: String,
    pub variables: Vec<String>,
    /// Index of the response variable.
    pub target: usize,
    /// Index of the structural shock of interest.
    pub shock: usize,
    pub lags: usize,
    pub ma_order: usize,
    pub alpha: f64,
    pub pi: f64,
    /// Seed of the standard-normal MA coefficient draws.
    pub ma_seed: u64,
    /// `lags` matrices n × n.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub h_impact: Vec<Vec<f64>>,
    /// `ma_order` matrices n × n; drawn from `ma_seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ma: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarmaParams {
    pub names: Vec<String>,
    pub phi: Vec<DMatrix<f64>>,
    pub h_impact: DMatrix<f64>,
    /// A_1..A_J.
    pub ma: Vec<DMatrix<f64>>,
    pub alpha: f64,
    pub pi: f64,
    pub target: usize,
    pub shock: usize,
}

fn to_matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(SulpError::Schema(format!("{what} must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// J standard-normal n × n matrices from a seed.
pub fn draw_ma_matrices(n: usize, j: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = substream(seed, &[0x4D41]);
    (0..j).map(|_| DMatrix::from_fn(n, n, |_, _| std_normal(&mut rng))).collect()
}

impl VarmaParams {
    pub fn n(&self) -> usize {
        self.h_impact.nrows()
    }
    pub fn lags(&self) -> usize {
        self.phi.len()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Weight on the MA part at sample size T: αT^{−π}.
    pub fn ma_weight(&self, t: usize) -> f64 {
        self.alpha * (t as f64).powf(-self.pi)
    }

    pub fn companion(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.lags();
        let mut f = DMatrix::zeros(n * p, n * p);
        for (l, m) in self.phi.iter().enumerate() {
            f.view_mut((0, l * n), (n, n)).copy_from(m);
        }
        for l in 1..p {
            f.view_mut((l * n, (l - 1) * n), (n, n)).fill_with_identity();
        }
        f
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.phi.is_empty() {
            return Err(SulpError::Schema("at least one lag matrix required".into()));
        }
        if self.target >= n || self.shock >= n {
            return Err(SulpError::Schema("target/shock index out of range".into()));
        }
        if self.h_impact.clone().try_inverse().is_none() {
            return Err(SulpError::Schema("impact matrix is singular".into()));
        }
        let r = spectral_radius(&self.companion());
        if r >= 1.0 {
            return Err(SulpError::Instability(r));
        }
        Ok(())
    }

    pub fn from_file(cal: &CalibrationFile) -> Result<Self> {
        if cal.schema_version != CALIBRATION_SCHEMA_VERSION {
            return Err(SulpError::Schema(format!(
                "schema version {} (expected {CALIBRATION_SCHEMA_VERSION})",
                cal.schema_version
            )));
        }
        let n = cal.variables.len();
        if cal.phi.len() != cal.lags {
            return Err(SulpError::Schema(format!("{} lag matrices for lags = {}", cal.phi.len(), cal.lags)));
        }
        let phi = cal
            .phi
            .iter()
            .map(|m| to_matrix(m, n, "phi"))
            .collect::<Result<Vec<_>>>()?;
        let h_impact = to_matrix(&cal.h_impact, n, "h_impact")?;
        let ma = match &cal.ma {
            Some(ms) => {
                if ms.len() != cal.ma_order {
                    return Err(SulpError::Schema(format!("{} MA matrices for ma_order = {}", ms.len(), cal.ma_order)));
                }
                ms.iter().map(|m| to_matrix(m, n, "ma")).collect::<Result<Vec<_>>>()?
            }
            None => draw_ma_matrices(n, cal.ma_order, cal.ma_seed),
        };
        let p = Self {
            names: cal.variables.clone(),
            phi,
            h_impact,
            ma,
            alpha: cal.alpha,
            pi: cal.pi,
            target: cal.target,
            shock: cal.shock,
        };
        p.validate()?;
        Ok(p)
    }
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<VarmaParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SulpError::io(path, e))?;
    let cal: CalibrationFile = serde_json::from_str(&text).map_err(|e| SulpError::Schema(e.to_string()))?;
    VarmaParams::from_file(&cal)
}

/// Simulate from given structural shocks (rows = periods). The first
/// `burn` rows are discarded; MA weight uses `t_eff`.
pub fn simulate_varma_with_shocks(params: &VarmaParams, eps: &DMatrix<f64>, burn: usize, t_eff: usize) -> Result<DMatrix<f64>> {
    let n = params.n();
    let total = eps.nrows();
    let c = params.ma_weight(t_eff);
    let g: Vec<DMatrix<f64>> = params.ma.iter().map(|a| a * &params.h_impact * c).collect();
    let mut w = DMatrix::zeros(total, n);
    for t in 0..total {
        let mut row = &params.h_impact * eps.row(t).transpose();
        for (l, phi) in params.phi.iter().enumerate() {
            if t > l {
                row += phi * w.row(t - l - 1).transpose();
            }
        }
        if c != 0.0 {
            for (j, gj) in g.iter().enumerate() {
                if t > j {
                    row += gj * eps.row(t - j - 1).transpose();
                }
            }
        }
        if row.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(SulpError::Divergence(t));
        }
        w.row_mut(t).copy_from(&row.transpose());
    }
    Ok(w.rows(burn, total - burn).into_owned())
}

/// Simulated data (T × n) and the structural shock of interest (length T).
pub fn simulate_varma<R: Rng + ?Sized>(params: &VarmaParams, t: usize, burn: usize, rng: &mut R) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = params.n();
    let eps = DMatrix::from_fn(t + burn, n, |_, _| std_normal(rng));
    let w = simulate_varma_with_shocks(params, &eps, burn, t)?;
    let shock = (burn..burn + t).map(|i| eps[(i, params.shock)]).collect();
    Ok((w, shock))
}

/// True responses of `target` to `shock`, h = 0..=max_horizon, at sample size T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueIrf {
    pub beta_star: Vec<f64>,
    pub target: usize,
    pub shock: usize,
}

/// Ψ_h = M'F^hM for h = 0..=hmax.
pub fn var_ma_weights(params: &VarmaParams, hmax: usize) -> Vec<DMatrix<f64>> {
    let n = params.n();
    let f = params.companion();
    let mut out = Vec::with_capacity(hmax + 1);
    let mut fh = DMatrix::identity(f.nrows(), f.ncols());
    for _ in 0..=hmax {
        out.push(fh.view((0, 0), (n, n)).into_owned());
        fh = &f * fh;
    }
    out
}

pub fn true_irf(params: &VarmaParams, t: usize, target: usize, shock: usize, hmax: usize) -> TrueIrf {
    let psi = var_ma_weights(params, hmax);
    let c = params.ma_weight(t);
    let hh = &params.h_impact;
    let beta_star = (0..=hmax)
        .map(|h| {
            let mut m = &psi[h] * hh;
            if c != 0.0 {
                for k in 1..=h.min(params.ma.len()) {
                    m += &psi[h - k] * &params.ma[k - 1] * hh * c;
                }
            }
            m[(target, shock)]
        })
        .collect();
    TrueIrf { beta_star, target, shock }
}

/// w_t = ρw_{t−1} + ε_t after a 200-step burn-in.
pub fn simulate_ar1<R: Rng + ?Sized>(rho: f64, t: usize, rng: &mut R) -> Vec<f64> {
    let mut w = 0.0;
    let mut out = Vec::with_capacity(t);
    for i in 0..t + AR1_BURN_IN {
        w = rho * w + std_normal(rng);
        if i >= AR1_BURN_IN {
            out.push(w);
        }
    }
    out
}

/// Dynamic multipliers ρ^{h+1}.
pub fn ar1_truth(rho: f64, hmax: usize) -> Vec<f64> {
    (0..=hmax).map(|h| rho.powi(h as i32 + 1)).collect()
}

/// System of LPs of w_{t+h} on w_{t−1} with an intercept; leads past the end are missing.
pub fn ar1_system(w: &[f64], hmax: usize) -> SulpSystem {
    let n = w.len();
    let t = n - 1;
    let y = DMatrix::from_fn(t, hmax + 1, |r, h| if r + 1 + h < n { w[r + 1 + h] } else { f64::NAN });
    let x = DMatrix::from_fn(t, 1, |r, _| w[r]);
    let z = DMatrix::from_element(t, 1, 1.0);
    let mut sys = SulpSystem::from_parts(y, x, z);
    sys.control_names = vec!["intercept".into()];
    sys.control_roles = vec![ControlRole::Intercept];
    sys.shock_names = vec!["w_lag1".into()];
    sys
}

/// Deterministic synthetic stand-in for a seven-variable VAR(5) macro calibration.
///
/// Variable 0 is output growth and variable 5 the policy rate. Lag matrices
/// combine hand-set own persistence and key cross effects with small seeded
/// noise, and are shrunk until the companion radius is at most 0.95. The
/// impact matrix is the Cholesky factor of a seeded correlation matrix scaled
/// by fixed volatilities, so the policy shock has no impact effect on output.
pub fn synthetic_calibration() -> CalibrationFile {
    let names = [
        "output_growth",
        "inflation",
        "unemployment",
        "consumption_growth",
        "investment_growth",
        "policy_rate",
        "credit_spread",
    ];
    let n = names.len();
    let p = 5;
    let own = [0.35, 0.6, 0.9, 0.3, 0.4, 0.92, 0.75];
    let lag_decay = [1.0, 0.3, 0.15, 0.08, 0.04];
    let mut rng = substream(20_240_501, &[1]);
    let mut phi: Vec<DMatrix<f64>> = (0..p)
        .map(|l| {
            DMatrix::from_fn(n, n, |i, j| {
                let noise = 0.04 * std_normal(&mut rng) * lag_decay[l];
                if i == j {
                    own[i] * lag_decay[l] * if l == 1 { -0.5 } else { 1.0 } + noise
                } else {
                    noise
                }
            })
        })
        .collect();
    // monetary transmission and a Taylor-type reaction
    for (l, w) in [(0usize, 1.0), (1, 0.7), (2, 0.4)] {
        phi[l][(0, 5)] += -0.12 * w;
        phi[l][(3, 5)] += -0.08 * w;
        phi[l][(4, 5)] += -0.2 * w;
        phi[l][(1, 5)] += -0.04 * w;
        phi[l][(2, 5)] += 0.05 * w;
        phi[l][(6, 5)] += 0.06 * w;
    }
    phi[0][(5, 0)] += 0.15;
    phi[0][(5, 1)] += 0.2;
    phi[0][(0, 6)] += -0.1;
    phi[0][(2, 0)] += -0.15;

    let shrink = |phi: &mut Vec<DMatrix<f64>>| loop {
        let params = VarmaParams {
            names: vec![],
            phi: phi.clone(),
            h_impact: DMatrix::identity(n, n),
            ma: vec![],
            alpha: 0.0,
            pi: 0.5,
            target: 0,
            shock: 5,
        };
        if spectral_radius(&params.companion()) <= 0.95 {
            break;
        }
        for m in phi.iter_mut() {
            *m *= 0.98;
        }
    };
    shrink(&mut phi);

    let vol = [0.8, 0.3, 0.2, 0.7, 2.0, 0.25, 0.3];
    let a = DMatrix::from_fn(n, n, |_, _| std_normal(&mut rng));
    let mut corr = &a * a.transpose() + DMatrix::identity(n, n) * (n as f64);
    let d: Vec<f64> = (0..n).map(|i| corr[(i, i)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            corr[(i, j)] /= d[i] * d[j];
        }
    }
    let cov = DMatrix::from_fn(n, n, |i, j| corr[(i, j)] * vol[i] * vol[j]);
    let h = spd_cholesky(&cov, "calibration covariance").expect("positive definite by construction").l();

    let ma_seed = 4_242;
    let round = |v: f64| (v * 1e12).round() / 1e12;
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { to_rows(&m.map(round)) };
    CalibrationFile {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        name: "synthetic-var5-n7".into(),
        variables: names.iter().map(|s| s.to_string()).collect(),
        target: 0,
        shock: 5,
        lags: p,
        ma_order: 10,
        alpha: 0.0,
        pi: 0.5,
        ma_seed,
        phi: phi.iter().map(rows).collect(),
        h_impact: rows(&h),
        ma: Some(draw_ma_matrices(n, 10, ma_seed).iter().map(rows).collect()),
    }
}

/// Small three-variable VAR(2) preset for fast tests.
pub fn ci_calibration() -> CalibrationFile {
    let phi1 = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, -0.2, 0.0, 0.4, 0.1, 0.1, 0.2, 0.6]);
    let phi2 = DMatrix::from_row_slice(3, 3, &[-0.1, 0.0, 0.05, 0.05, 0.1, 0.0, 0.0, -0.05, 0.1]);
    let h = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.3, 0.8, 0.0, 0.2, 0.1, 0.5]);
    let ma_seed = 7;
    CalibrationFile {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        name: "ci-var2-n3".into(),
        variables: vec!["y".into(), "p".into(), "r".into()],
        target: 0,
        shock: 2,
        lags: 2,
        ma_order: 10,
        alpha: 0.0,
        pi: 0.5,
        ma_seed,
        phi: vec![to_rows(&phi1), to_rows(&phi2)],
        h_impact: to_rows(&h),
        ma: Some(draw_ma_matrices(3, 10, ma_seed).iter().map(to_rows).collect()),
    }
}

/// Built-in calibrations by name.
pub fn builtin_calibration(name: &str) -> Option<CalibrationFile> {
    match name {
        "synthetic-var5-n7" | "default" => Some(synthetic_calibration()),
        "ci-var2-n3" | "ci" => Some(ci_calibration()),
        _ => None,
    }
}
