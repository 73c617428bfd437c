//! Power posteriors by importance reweighting of stored draws.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SulpError};
use crate::sampler::chain::ReweightInfo;
use crate::sampler::Chain;
use crate::summary::{weighted_interval, IrfSummary};

/// Resampled chains warn below this fraction of the source size.
pub const DEFAULT_ESS_WARN_FRACTION: f64 = 0.01;

/// The canonical learning-rate grid 0.80, 0.81, …, 1.00.
pub fn canonical_c_grid() -> Vec<f64> {
    (80..=100).map(|i| i as f64 / 100.0).collect()
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(SulpError::InvalidParameter(format!("learning rate c = {c} outside (0, 1]")));
    }
    Ok(())
}

/// Unnormalized weights exp((c−1)ℓ_s − max), largest weight exactly 1.
///
/// At c = 1 every weight is exactly 1, so weighted statistics reproduce the plain ones bit for bit.
pub fn relative_weights(loglik: &[f64], c: f64) -> Result<Vec<f64>> {
    if !(c >= 0.0 && c <= 1.0) {
        return Err(SulpError::InvalidParameter(format!("learning rate c = {c} outside [0, 1]")));
    }
    if loglik.is_empty() {
        return Err(SulpError::DegenerateWeights);
    }
    if c == 1.0 {
        return Ok(vec![1.0; loglik.len()]);
    }
    if loglik.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(SulpError::InvalidParameter("log-likelihood contains NaN or +inf".into()));
    }
    let e: Vec<f64> = loglik.iter().map(|l| (c - 1.0) * l).collect();
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(SulpError::DegenerateWeights);
    }
    Ok(e.iter().map(|v| (v - m).exp()).collect())
}

/// w_s ∝ exp((c−1)ℓ_s), normalized to sum to one.
pub fn importance_weights(loglik: &[f64], c: f64) -> Result<Vec<f64>> {
    let r = relative_weights(loglik, c)?;
    let s: f64 = r.iter().sum();
    Ok(r.into_iter().map(|w| w / s).collect())
}

/// (Σ w_s)² / Σ w_s², which is 1 / Σ w_s² for normalized weights.
///
/// Unnormalized input avoids rounding: n equal weights give exactly n.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    s * s / weights.iter().map(|w| w * w).sum::<f64>()
}

/// A stored chain viewed under the power posterior at learning rate `c`.
#[derive(Debug, Clone)]
pub struct WeightedChain<'a> {
    pub source: &'a Chain,
    pub c: f64,
    /// Unnormalized, max weight 1.
    pub relative: Vec<f64>,
    /// Sum to one.
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl<'a> WeightedChain<'a> {
    pub fn new(source: &'a Chain, c: f64) -> Result<Self> {
        check_c(c)?;
        let ll = source.log_lik();
        if ll.len() != source.n_stored() {
            return Err(SulpError::Schema("chain lacks a per-draw log-likelihood".into()));
        }
        let relative = relative_weights(&ll, c)?;
        let s: f64 = relative.iter().sum();
        let weights: Vec<f64> = relative.iter().map(|w| w / s).collect();
        let ess = effective_sample_size(&relative);
        Ok(Self {
            source,
            c,
            relative,
            weights,
            ess,
        })
    }

    pub fn summary(&self, shock: usize) -> Result<IrfSummary> {
        IrfSummary::from_weighted(self.source, shock, &self.relative)
    }

    /// Σ_s w_s g_s for per-draw values g.
    pub fn weighted_mean(&self, g: &[f64]) -> f64 {
        g.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    /// Equal-tailed interval of β_h (original units).
    pub fn beta_interval(&self, shock: usize, h: usize, level: f64) -> Result<(f64, f64)> {
        let b = self.source.beta_draws(shock)?;
        let s = self.source.scale_of(shock);
        let col: Vec<f64> = b.column(h).iter().map(|v| v * s).collect();
        weighted_interval(&col, &self.relative, level)
    }

    /// Multinomial resample of `n_out` draws; the manifest records (c, ESS).
    pub fn resample<R: Rng + ?Sized>(&self, n_out: usize, warn_fraction: f64, rng: &mut R) -> Result<Chain> {
        let s = self.source.n_stored();
        if self.ess < warn_fraction * s as f64 {
            log::warn!(
                "effective sample size {:.1} below {:.0}% of {} draws at c = {}",
                self.ess,
                100.0 * warn_fraction,
                s,
                self.c
            );
        }
        let dist = WeightedIndex::new(&self.weights).map_err(|_| SulpError::DegenerateWeights)?;
        let idx: Vec<usize> = (0..n_out).map(|_| dist.sample(rng)).collect();
        let mut out = self.source.select(&idx);
        out.manifest.reweight = Some(ReweightInfo {
            c: self.c,
            ess: self.ess,
            n_source: s,
        });
        Ok(out)
    }
}

/// One row of the learning-rate grid report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub c: f64,
    pub ess: f64,
    /// Width of the equal-tailed interval of β_h per horizon.
    pub widths: Vec<f64>,
}

/// ESS and interval widths for shock `i` across `c_grid`.
pub fn grid_summary(chain: &Chain, shock: usize, c_grid: &[f64], level: f64) -> Result<Vec<GridRow>> {
    c_grid
        .iter()
        .map(|&c| {
            let wc = WeightedChain::new(chain, c)?;
            let widths = (0..chain.manifest.horizons)
                .map(|h| wc.beta_interval(shock, h, level).map(|(lo, hi)| hi - lo))
                .collect::<Result<Vec<_>>>()?;
            Ok(GridRow { c, ess: wc.ess, widths })
        })
        .collect()
}
