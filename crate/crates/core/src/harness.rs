//! Monte Carlo runner: simulate VARMA data, estimate with every requested
//! estimator, score intervals and point estimates against the true response.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ols_lp_hac, smooth_lp, Bandwidth, ClassicalLpResult, SmoothLpConfig};
use crate::dataset::{build_design, irf_scale, standardize, DesignSpec, SulpSystem, TimeSeriesDataset};
use crate::dgp::{builtin_calibration, load_calibration, simulate_varma, true_irf, VarmaParams, DEFAULT_BURN_IN};
use crate::error::{Result, SulpError};
use crate::power_posterior::WeightedChain;
use crate::priors::{default_hyperparameters, BetaPrior, Priors};
use crate::random::substream;
use crate::sampler::chain::{fmt_f64, write_atomic};
use crate::sampler::{run_sampler, SamplerConfig};
use crate::summary::{quantile, weighted_interval, IrfSummary};

/// Name of the simulated structural-shock column.
pub const SHOCK_COLUMN: &str = "shock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// GP prior mean with Normal-Gamma shrinkage.
    SuLp,
    /// β ~ N(0, 10·I), no hierarchy.
    SuLpFlat,
    /// OLS per horizon with Newey-West errors.
    LpDefault,
    /// Penalized smooth LP.
    LpSmooth,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::SuLp, Estimator::SuLpFlat, Estimator::LpDefault, Estimator::LpSmooth];

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::SuLp => "su_lp",
            Estimator::SuLpFlat => "su_lp_flat",
            Estimator::LpDefault => "lp_default",
            Estimator::LpSmooth => "lp_smooth",
        }
    }

    /// Stable stream id, independent of which estimators a run requests.
    fn stream_id(&self) -> u64 {
        match self {
            Estimator::SuLp => 1,
            Estimator::SuLpFlat => 2,
            Estimator::LpDefault => 3,
            Estimator::LpSmooth => 4,
        }
    }

    pub fn is_bayesian(&self) -> bool {
        matches!(self, Estimator::SuLp | Estimator::SuLpFlat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_reps: usize,
    pub t_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub max_horizon: usize,
    /// Lags of every variable and of the shock in the controls.
    pub lags: usize,
    pub estimators: Vec<Estimator>,
    pub level: f64,
    /// Learning rates for the SU-LP coarsening sweep; empty skips it.
    pub c_grid: Vec<f64>,
    pub seed: u64,
    /// Built-in calibration name or path to a calibration file.
    pub calibration: String,
    pub burn_in: usize,
    /// Prior variance of the flat SU-LP variant.
    pub flat_variance: f64,
    pub sampler: SamplerConfig,
    pub smooth: SmoothLpConfig,
    pub bandwidth: Bandwidth,
    /// Worker threads; 0 lets the pool decide. Left out of the hash and manifest
    /// since results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    /// ESS below this fraction of the draws flags a coarsening cell.
    pub ess_floor_fraction: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_reps: 200,
            t_grid: vec![250],
            alpha_grid: vec![2.0],
            max_horizon: 16,
            lags: 4,
            estimators: Estimator::ALL.to_vec(),
            level: 0.90,
            c_grid: Vec::new(),
            seed: 2024,
            calibration: "default".into(),
            burn_in: DEFAULT_BURN_IN,
            flat_variance: 10.0,
            sampler: SamplerConfig {
                store_controls: false,
                store_latent: false,
                ..SamplerConfig::default()
            },
            smooth: SmoothLpConfig::default(),
            bandwidth: Bandwidth::Horizon,
            threads: 0,
            ess_floor_fraction: 0.01,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(SulpError::InvalidParameter("n_reps must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(SulpError::InvalidParameter("coverage level must lie in (0, 1)".into()));
        }
        if self.t_grid.is_empty() || self.alpha_grid.is_empty() || self.estimators.is_empty() {
            return Err(SulpError::InvalidParameter("T grid, alpha grid and estimators must be nonempty".into()));
        }
        if self.alpha_grid.iter().any(|a| !(*a >= 0.0)) {
            return Err(SulpError::InvalidParameter("alpha must be nonnegative".into()));
        }
        let need = self.lags + self.max_horizon + 2;
        if let Some(t) = self.t_grid.iter().find(|&&t| t < need) {
            return Err(SulpError::InsufficientSample { needed: need, available: *t });
        }
        if self.c_grid.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return Err(SulpError::InvalidParameter("coarsening values must lie in (0, 1]".into()));
        }
        if self.max_horizon == 0 {
            return Err(SulpError::InvalidParameter("max_horizon must be >= 1 for normalized metrics".into()));
        }
        self.sampler.validate()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        hex::encode(h.finalize())
    }

    pub fn load_params(&self) -> Result<VarmaParams> {
        match builtin_calibration(&self.calibration) {
            Some(cal) => VarmaParams::from_file(&cal),
            None => load_calibration(&self.calibration),
        }
    }
}

/// Point estimate and interval per horizon, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Ok(IntervalEstimate),
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarsenedEstimate {
    pub c: f64,
    pub ess: f64,
    pub estimate: IntervalEstimate,
}

/// Everything kept from one replication; also the checkpoint file content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub config_hash: String,
    pub t: usize,
    pub alpha: f64,
    pub rep: usize,
    pub outcomes: BTreeMap<Estimator, Outcome>,
    #[serde(default)]
    pub coarsening: Vec<CoarsenedEstimate>,
    /// Wall-clock seconds per estimator; kept out of the deterministic outputs.
    #[serde(default)]
    pub seconds: BTreeMap<Estimator, f64>,
}

/// Simulated replication data: standardized system and the scale back to shock units.
pub struct RepData {
    pub system: SulpSystem,
    pub scale: f64,
}

/// Simulate one data set and build the observed-shock design: lags of every variable and of the shock.
pub fn simulate_rep_data(params: &VarmaParams, cfg: &McConfig, t: usize, rng: &mut impl rand::Rng) -> Result<RepData> {
    let (w, shock) = simulate_varma(params, t, cfg.burn_in, rng)?;
    let n = params.n();
    let mut names = params.names.clone();
    names.push(SHOCK_COLUMN.to_string());
    let values = DMatrix::from_fn(t, n + 1, |r, c| if c < n { w[(r, c)] } else { shock[r] });
    let ds = TimeSeriesDataset::from_columns(names, values)?;
    let (std_ds, scaling) = standardize(&ds)?;
    let target = params.names[params.target].clone();
    let mut spec = DesignSpec::observed(&target, SHOCK_COLUMN, cfg.lags, cfg.max_horizon);
    spec.lagged_controls = params.names.iter().filter(|v| **v != target).cloned().collect();
    let system = build_design(&std_ds, &spec)?;
    let scale = irf_scale(&scaling, &target, Some(SHOCK_COLUMN))?;
    Ok(RepData { system, scale })
}

fn classical_estimate(r: &ClassicalLpResult, level: f64, scale: f64) -> Result<IntervalEstimate> {
    let iv = r.interval(level)?;
    Ok(IntervalEstimate {
        point: r.beta_hat.iter().map(|b| b * scale).collect(),
        lower: iv.iter().map(|p| p.0 * scale).collect(),
        upper: iv.iter().map(|p| p.1 * scale).collect(),
    })
}

fn weighted_estimate(chain: &crate::sampler::Chain, weights: &[f64], level: f64) -> Result<IntervalEstimate> {
    let s = IrfSummary::from_weighted(chain, 0, weights)?;
    let b = chain.beta_draws(0)?;
    let scale = chain.scale_of(0);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for h in 0..b.ncols() {
        let col: Vec<f64> = b.column(h).iter().map(|v| v * scale).collect();
        let (lo, hi) = weighted_interval(&col, weights, level)?;
        lower.push(lo);
        upper.push(hi);
    }
    Ok(IntervalEstimate {
        point: s.beta.iter().map(|x| x.mean).collect(),
        lower,
        upper,
    })
}

/// Run one replication of one cell with every estimator on shared data.
pub fn run_replication(params: &VarmaParams, cfg: &McConfig, t: usize, alpha: f64, rep: usize) -> Result<RepRecord> {
    let key = [t as u64, alpha.to_bits(), rep as u64];
    let mut data_rng = substream(cfg.seed, &key);
    let data = simulate_rep_data(params, cfg, t, &mut data_rng)?;
    let sys = &data.system;
    let mut outcomes = BTreeMap::new();
    let mut seconds = BTreeMap::new();
    let mut coarsening = Vec::new();
    for &est in &cfg.estimators {
        let clock = Instant::now();
        let mut rng = substream(cfg.seed, &[key[0], key[1], key[2], est.stream_id()]);
        let res: Result<IntervalEstimate> = match est {
            Estimator::LpDefault => {
                ols_lp_hac(sys, 0, cfg.bandwidth).and_then(|r| classical_estimate(&r, cfg.level, data.scale))
            }
            Estimator::LpSmooth => smooth_lp(sys, 0, &cfg.smooth).and_then(|r| classical_estimate(&r, cfg.level, data.scale)),
            Estimator::SuLp | Estimator::SuLpFlat => (|| {
                let mut hyper = default_hyperparameters(sys.h());
                if est == Estimator::SuLpFlat {
                    hyper.beta_prior = BetaPrior::Flat {
                        variance: cfg.flat_variance,
                    };
                }
                let priors = Priors::build(sys, hyper, false)?;
                let mut sc = cfg.sampler.clone();
                sc.rng_seed = cfg.seed;
                let mut chain = run_sampler(sys, &priors, &sc, &mut rng)?;
                chain.manifest.target_scale = data.scale;
                let base = weighted_estimate(&chain, &vec![1.0; chain.n_stored()], cfg.level)?;
                if est == Estimator::SuLp {
                    for &c in &cfg.c_grid {
                        let wc = WeightedChain::new(&chain, c)?;
                        coarsening.push(CoarsenedEstimate {
                            c,
                            ess: wc.ess,
                            estimate: weighted_estimate(&chain, &wc.relative, cfg.level)?,
                        });
                    }
                }
                Ok(base)
            })(),
        };
        seconds.insert(est, clock.elapsed().as_secs_f64());
        let outcome = match res {
            Ok(e) => Outcome::Ok(e),
            Err(e) => {
                log::warn!("{} failed at T={t}, alpha={alpha}, rep={rep}: {e}", est.label());
                Outcome::Failed { error: e.to_string() }
            }
        };
        outcomes.insert(est, outcome);
    }
    Ok(RepRecord {
        config_hash: cfg.hash(),
        t,
        alpha,
        rep,
        outcomes,
        coarsening,
        seconds,
    })
}

/// Per-horizon scores of one estimator in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub beta_star: f64,
    pub coverage: f64,
    /// |mean(β̂) − β*| / normalizer.
    pub bias: f64,
    /// Quantiles of |β̂_r − β*| / normalizer across replications.
    pub median_abs_bias: f64,
    pub q25_abs_bias: f64,
    pub q75_abs_bias: f64,
    /// std(β̂) / normalizer, T−1 denominator.
    pub std: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimator: String,
    pub t: usize,
    pub alpha: f64,
    /// Learning rate for coarsening rows; 1 for the base posterior.
    pub c: Option<f64>,
    pub n_reps: usize,
    pub n_failed: usize,
    /// Mean ESS across replications (coarsening rows only).
    pub mean_ess: Option<f64>,
    /// Replications whose ESS fell below the floor (coarsening rows only).
    pub n_low_ess: Option<usize>,
    pub metrics: Vec<HorizonMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub config_hash: String,
    pub cells: Vec<CellResult>,
    pub coarsening: Vec<CellResult>,
}

impl McResult {
    pub fn cell(&self, est: Estimator, t: usize, alpha: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.estimator == est.label() && c.t == t && c.alpha == alpha)
    }

    /// Largest failure share over all estimator cells.
    pub fn max_failure_rate(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.n_failed as f64 / (c.n_reps + c.n_failed).max(1) as f64)
            .fold(0.0, f64::max)
    }
}

/// Share of replications whose closed interval contains β*_h, per horizon.
pub fn coverage(intervals: &[Vec<(f64, f64)>], beta_star: &[f64]) -> Vec<f64> {
    (0..beta_star.len())
        .map(|h| {
            let hit = intervals
                .iter()
                .filter(|iv| iv[h].0 <= beta_star[h] && beta_star[h] <= iv[h].1)
                .count();
            hit as f64 / intervals.len().max(1) as f64
        })
        .collect()
}

/// (β*'β*/H̃)^{1/2}.
pub fn normalizer(beta_star: &[f64]) -> Result<f64> {
    let hm = beta_star.len().saturating_sub(1);
    if hm == 0 {
        return Err(SulpError::InvalidParameter("normalizer needs at least two horizons".into()));
    }
    let v = (beta_star.iter().map(|b| b * b).sum::<f64>() / hm as f64).sqrt();
    if v == 0.0 {
        return Err(SulpError::NormalizerZero);
    }
    Ok(v)
}

/// Normalized bias, dispersion and absolute-error quantiles per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasStd {
    pub bias: Vec<f64>,
    pub std: Vec<f64>,
    pub median_abs: Vec<f64>,
    pub q25_abs: Vec<f64>,
    pub q75_abs: Vec<f64>,
}

pub fn normalized_bias_std(estimates: &[Vec<f64>], beta_star: &[f64]) -> Result<BiasStd> {
    if estimates.len() < 2 {
        return Err(SulpError::InvalidParameter("bias and std need at least two replications".into()));
    }
    let norm = normalizer(beta_star)?;
    let r = estimates.len() as f64;
    let mut out = BiasStd {
        bias: vec![],
        std: vec![],
        median_abs: vec![],
        q25_abs: vec![],
        q75_abs: vec![],
    };
    for (h, &b) in beta_star.iter().enumerate() {
        let col: Vec<f64> = estimates.iter().map(|e| e[h]).collect();
        let mean = col.iter().sum::<f64>() / r;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let abs: Vec<f64> = col.iter().map(|v| (v - b).abs() / norm).collect();
        out.bias.push((mean - b).abs() / norm);
        out.std.push(var.sqrt() / norm);
        out.median_abs.push(quantile(&abs, 0.5)?);
        out.q25_abs.push(quantile(&abs, 0.25)?);
        out.q75_abs.push(quantile(&abs, 0.75)?);
    }
    Ok(out)
}

fn score(label: &str, t: usize, alpha: f64, ests: &[&IntervalEstimate], n_failed: usize, beta_star: &[f64]) -> Result<CellResult> {
    let intervals: Vec<Vec<(f64, f64)>> = ests
        .iter()
        .map(|e| e.lower.iter().copied().zip(e.upper.iter().copied()).collect())
        .collect();
    let cov = coverage(&intervals, beta_star);
    let points: Vec<Vec<f64>> = ests.iter().map(|e| e.point.clone()).collect();
    let bs = if points.len() >= 2 { Some(normalized_bias_std(&points, beta_star)?) } else { None };
    let nan = f64::NAN;
    let metrics = (0..beta_star.len())
        .map(|h| HorizonMetrics {
            horizon: h,
            beta_star: beta_star[h],
            coverage: cov[h],
            bias: bs.as_ref().map_or(nan, |b| b.bias[h]),
            median_abs_bias: bs.as_ref().map_or(nan, |b| b.median_abs[h]),
            q25_abs_bias: bs.as_ref().map_or(nan, |b| b.q25_abs[h]),
            q75_abs_bias: bs.as_ref().map_or(nan, |b| b.q75_abs[h]),
            std: bs.as_ref().map_or(nan, |b| b.std[h]),
            mean_width: ests.iter().map(|e| e.upper[h] - e.lower[h]).sum::<f64>() / ests.len().max(1) as f64,
        })
        .collect();
    Ok(CellResult {
        estimator: label.to_string(),
        t,
        alpha,
        c: None,
        n_reps: ests.len(),
        n_failed,
        mean_ess: None,
        n_low_ess: None,
        metrics,
    })
}

/// Aggregate replication records into cell metrics.
pub fn aggregate(cfg: &McConfig, params: &VarmaParams, records: &[RepRecord]) -> Result<McResult> {
    let mut cells = Vec::new();
    let mut coarse = Vec::new();
    for &t in &cfg.t_grid {
        for &alpha in &cfg.alpha_grid {
            let p = params.clone().with_alpha(alpha);
            let beta_star = true_irf(&p, t, p.target, p.shock, cfg.max_horizon).beta_star;
            let recs: Vec<&RepRecord> = records.iter().filter(|r| r.t == t && r.alpha == alpha).collect();
            for &est in &cfg.estimators {
                let mut ok = Vec::new();
                let mut failed = 0;
                for r in &recs {
                    match r.outcomes.get(&est) {
                        Some(Outcome::Ok(e)) => ok.push(e),
                        _ => failed += 1,
                    }
                }
                cells.push(score(est.label(), t, alpha, &ok, failed, &beta_star)?);
            }
            let s_draws = cfg.sampler.n_stored() as f64;
            for &c in &cfg.c_grid {
                let items: Vec<&CoarsenedEstimate> = recs
                    .iter()
                    .filter_map(|r| r.coarsening.iter().find(|x| x.c == c))
                    .collect();
                let ests: Vec<&IntervalEstimate> = items.iter().map(|x| &x.estimate).collect();
                let failed = recs.len() - items.len();
                let mut cell = score(Estimator::SuLp.label(), t, alpha, &ests, failed, &beta_star)?;
                cell.c = Some(c);
                cell.mean_ess = Some(items.iter().map(|x| x.ess).sum::<f64>() / items.len().max(1) as f64);
                cell.n_low_ess = Some(items.iter().filter(|x| x.ess < cfg.ess_floor_fraction * s_draws).count());
                coarse.push(cell);
            }
        }
    }
    Ok(McResult {
        config_hash: cfg.hash(),
        cells,
        coarsening: coarse,
    })
}

fn checkpoint_path(dir: &Path, t: usize, alpha: f64, rep: usize) -> PathBuf {
    dir.join(format!("T{t}_alpha{}", fmt_f64(alpha))).join(format!("rep{rep:05}.json"))
}

fn read_checkpoint(path: &Path, hash: &str) -> Option<RepRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    let rec: RepRecord = serde_json::from_str(&text).ok()?;
    (rec.config_hash == hash).then_some(rec)
}

/// Run every (T, α, replication) task, reusing matching checkpoints under `checkpoint_dir`.
pub fn run_monte_carlo(cfg: &McConfig, checkpoint_dir: Option<&Path>) -> Result<(McResult, Vec<RepRecord>)> {
    cfg.validate()?;
    let params = cfg.load_params()?;
    let hash = cfg.hash();
    let mut tasks = Vec::new();
    for &t in &cfg.t_grid {
        for &alpha in &cfg.alpha_grid {
            for rep in 0..cfg.n_reps {
                tasks.push((t, alpha, rep));
            }
        }
    }
    let run_one = |&(t, alpha, rep): &(usize, f64, usize)| -> Result<RepRecord> {
        if let Some(dir) = checkpoint_dir {
            let path = checkpoint_path(dir, t, alpha, rep);
            if let Some(rec) = read_checkpoint(&path, &hash) {
                return Ok(rec);
            }
            let p = params.clone().with_alpha(alpha);
            let rec = run_replication(&p, cfg, t, alpha, rep)?;
            write_atomic(&path, serde_json::to_string(&rec)?.as_bytes())?;
            Ok(rec)
        } else {
            run_replication(&params.clone().with_alpha(alpha), cfg, t, alpha, rep)
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| SulpError::InvalidParameter(format!("thread pool: {e}")))?;
    let records: Vec<RepRecord> = pool.install(|| tasks.par_iter().map(run_one).collect::<Result<Vec<_>>>())?;
    let result = aggregate(cfg, &params, &records)?;
    Ok((result, records))
}

const METRIC_NAMES: [&str; 8] = [
    "beta_star",
    "coverage",
    "bias",
    "median_abs_bias",
    "q25_abs_bias",
    "q75_abs_bias",
    "std",
    "mean_width",
];

fn metric_values(m: &HorizonMetrics) -> [f64; 8] {
    [
        m.beta_star,
        m.coverage,
        m.bias,
        m.median_abs_bias,
        m.q25_abs_bias,
        m.q75_abs_bias,
        m.std,
        m.mean_width,
    ]
}

/// Tidy CSV: estimator, T, alpha, c, horizon, metric, value, n_reps, n_failed.
pub fn results_csv(cells: &[CellResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "T", "alpha", "c", "horizon", "metric", "value", "n_reps", "n_failed"])
        .map_err(|e| SulpError::Csv(e.to_string()))?;
    for cell in cells {
        let c = cell.c.map(fmt_f64).unwrap_or_else(|| "1.0".into());
        for m in &cell.metrics {
            for (name, v) in METRIC_NAMES.iter().zip(metric_values(m)) {
                w.write_record([
                    cell.estimator.clone(),
                    cell.t.to_string(),
                    fmt_f64(cell.alpha),
                    c.clone(),
                    m.horizon.to_string(),
                    name.to_string(),
                    fmt_f64(v),
                    cell.n_reps.to_string(),
                    cell.n_failed.to_string(),
                ])
                .map_err(|e| SulpError::Csv(e.to_string()))?;
            }
        }
    }
    w.into_inner().map_err(|e| SulpError::Csv(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: McConfig,
    pub calibration: String,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub estimator: String,
    pub t: usize,
    pub alpha: f64,
    pub c: Option<f64>,
    pub n_reps: usize,
    pub n_failed: usize,
    pub mean_ess: Option<f64>,
    pub n_low_ess: Option<usize>,
}

/// Write results.csv, coarsening.csv (when requested), manifest.json and runtime.json.
///
/// Everything except runtime.json is a pure function of the configuration.
pub fn write_outputs(dir: &Path, cfg: &McConfig, result: &McResult, records: &[RepRecord]) -> Result<()> {
    write_atomic(&dir.join("results.csv"), &results_csv(&result.cells)?)?;
    if !result.coarsening.is_empty() {
        write_atomic(&dir.join("coarsening.csv"), &results_csv(&result.coarsening)?)?;
    }
    let summarize = |c: &CellResult| CellSummary {
        estimator: c.estimator.clone(),
        t: c.t,
        alpha: c.alpha,
        c: c.c,
        n_reps: c.n_reps,
        n_failed: c.n_failed,
        mean_ess: c.mean_ess,
        n_low_ess: c.n_low_ess,
    };
    let manifest = McManifest {
        schema_version: 1,
        config_hash: result.config_hash.clone(),
        config: cfg.clone(),
        calibration: cfg.calibration.clone(),
        cells: result.cells.iter().chain(&result.coarsening).map(summarize).collect(),
    };
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    let mut runtime: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        for (e, s) in &r.seconds {
            runtime.entry(e.label().to_string()).or_default().push(*s);
        }
    }
    let stats: BTreeMap<String, serde_json::Value> = runtime
        .into_iter()
        .map(|(k, v)| {
            let total: f64 = v.iter().sum();
            let n = v.len();
            (k, serde_json::json!({"replications": n, "total_seconds": total, "mean_seconds": total / n.max(1) as f64}))
        })
        .collect();
    write_atomic(&dir.join("runtime.json"), serde_json::to_string_pretty(&stats)?.as_bytes())
}
