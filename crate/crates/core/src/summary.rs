//! Posterior summaries of impulse responses: quantiles, means, intervals.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SulpError};
use crate::sampler::chain::{fmt_f64, write_atomic};
use crate::sampler::Chain;

/// Quantile levels reported for every horizon.
pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.16, 0.50, 0.84, 0.95];

/// Hazen-type quantile of `values` under nonnegative, not necessarily normalized weights.
///
/// Sorted draw i sits at plotting position (C_i − w_i/2)/W, with C_i the running weight sum;
/// intermediate levels interpolate linearly and levels outside the end positions clamp.
/// Unit weights give the usual (i + ½)/n rule.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(SulpError::InvalidParameter("quantile needs equal-length, nonempty inputs".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(SulpError::InvalidParameter(format!("quantile level {q} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(SulpError::DegenerateWeights);
    }
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = idx.iter().map(|&i| weights[i]).sum();
    let mut cum = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &i in &idx {
        let w = weights[i];
        let pos = (cum + 0.5 * w) / total;
        cum += w;
        if q <= pos {
            return Ok(match prev {
                None => values[i],
                Some((p0, v0)) if pos > p0 => v0 + (values[i] - v0) * (q - p0) / (pos - p0),
                Some(_) => values[i],
            });
        }
        prev = Some((pos, values[i]));
    }
    Ok(values[*idx.last().expect("nonempty")])
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    weighted_quantile(values, &vec![1.0; values.len()], q)
}

/// Equal-tailed interval at `level` under the given weights.
pub fn weighted_interval(values: &[f64], weights: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SulpError::InvalidParameter(format!("interval level {level} outside (0, 1)")));
    }
    let a = 0.5 * (1.0 - level);
    Ok((weighted_quantile(values, weights, a)?, weighted_quantile(values, weights, 1.0 - a)?))
}

fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let w: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / w;
    let var = values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / w;
    (mean, var.sqrt())
}

/// Per-horizon posterior summary of one coefficient path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub mean: f64,
    pub sd: f64,
    /// Values at [`SUMMARY_QUANTILES`].
    pub quantiles: Vec<f64>,
}

/// Quantiles of β and of μ_β for one shock, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfSummary {
    pub shock: String,
    pub scale: f64,
    pub n_draws: usize,
    pub beta: Vec<HorizonSummary>,
    pub mu_beta: Vec<HorizonSummary>,
}

fn summarize_columns(draws: &DMatrix<f64>, weights: &[f64], scale: f64) -> Result<Vec<HorizonSummary>> {
    (0..draws.ncols())
        .map(|h| {
            let col: Vec<f64> = draws.column(h).iter().map(|v| v * scale).collect();
            let (mean, sd) = weighted_moments(&col, weights);
            let quantiles = SUMMARY_QUANTILES
                .iter()
                .map(|&q| weighted_quantile(&col, weights, q))
                .collect::<Result<Vec<_>>>()?;
            Ok(HorizonSummary {
                horizon: h,
                mean,
                sd,
                quantiles,
            })
        })
        .collect()
}

impl IrfSummary {
    /// Summary of shock `i` with unit weights.
    pub fn from_chain(chain: &Chain, shock: usize) -> Result<Self> {
        Self::from_weighted(chain, shock, &vec![1.0; chain.n_stored()])
    }

    pub fn from_weighted(chain: &Chain, shock: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != chain.n_stored() {
            return Err(SulpError::InvalidParameter("one weight per stored draw required".into()));
        }
        let scale = chain.scale_of(shock);
        Ok(Self {
            shock: chain
                .manifest
                .shock_names
                .get(shock)
                .cloned()
                .ok_or_else(|| SulpError::Schema(format!("no shock {shock}")))?,
            scale,
            n_draws: chain.n_stored(),
            beta: summarize_columns(&chain.beta_draws(shock)?, weights, scale)?,
            mu_beta: summarize_columns(&chain.mu_beta_draws(shock)?, weights, scale)?,
        })
    }

    /// Rows: horizon, then mean, sd and quantiles of β, then the same for μ_β.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["horizon".to_string()];
        for block in ["beta", "mu_beta"] {
            header.push(format!("{block}_mean"));
            header.push(format!("{block}_sd"));
            header.extend(SUMMARY_QUANTILES.iter().map(|q| format!("{block}_q{:02}", (q * 100.0).round() as u32)));
        }
        w.write_record(&header).map_err(|e| SulpError::Csv(e.to_string()))?;
        for (b, m) in self.beta.iter().zip(&self.mu_beta) {
            let mut rec = vec![b.horizon.to_string()];
            for s in [b, m] {
                rec.push(fmt_f64(s.mean));
                rec.push(fmt_f64(s.sd));
                rec.extend(s.quantiles.iter().map(|v| fmt_f64(*v)));
            }
            w.write_record(&rec).map_err(|e| SulpError::Csv(e.to_string()))?;
        }
        w.into_inner().map_err(|e| SulpError::Csv(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    /// Equal-tailed interval at the 90% level from the stored quantiles.
    pub fn interval90(&self, h: usize) -> (f64, f64) {
        (self.beta[h].quantiles[0], self.beta[h].quantiles[4])
    }
}

/// Quantiles of an arbitrary per-draw scalar series at each column (e.g. latent shocks by period).
pub fn column_quantiles(draws: &DMatrix<f64>, levels: &[f64]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(draws.ncols(), levels.len());
    for c in 0..draws.ncols() {
        let col: Vec<f64> = draws.column(c).iter().copied().collect();
        for (j, &q) in levels.iter().enumerate() {
            out[(c, j)] = quantile(&col, q)?;
        }
    }
    Ok(out)
}
