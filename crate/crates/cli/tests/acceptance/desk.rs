//! Desk-scale coverage study: T = 250, α = 2, 200 replications, H̃ = 16.
//!
//! Replications are checkpointed under the cargo target directory, so an
//! interrupted or repeated run resumes instead of starting over. Delete
//! `target/tmp/acceptance-desk-mc` to force a fresh study.

use std::path::PathBuf;
use std::time::Instant;

use sulp_core::harness::{run_monte_carlo, write_outputs, CellResult, Estimator, McConfig};
use sulp_core::power_posterior::canonical_c_grid;

use crate::common::Verdict;

const BAND: (f64, f64) = (0.84, 0.96);
const MIN_IN_BAND: usize = 14;
const LP_MARGIN: f64 = 0.02;
const SMOOTH_CEILING: f64 = 0.90;
const BIAS_GUARD: f64 = 1.10;
const BIAS_FROM_H: usize = 4;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk-mc")
}

fn mean_coverage(c: &CellResult) -> f64 {
    c.metrics.iter().map(|m| m.coverage).sum::<f64>() / c.metrics.len() as f64
}

fn fmt_row(c: &CellResult, f: impl Fn(&sulp_core::harness::HorizonMetrics) -> f64) -> String {
    c.metrics.iter().map(|m| format!("{:.3}", f(m))).collect::<Vec<_>>().join(" ")
}

/// Verdicts for coverage, baseline direction and bias ordering.
pub fn run() -> [Verdict; 3] {
    let cfg = McConfig { c_grid: canonical_c_grid(), ..McConfig::default() };
    let start = Instant::now();
    let (res, records) = match run_monte_carlo(&cfg, Some(&dir().join("checkpoints"))) {
        Ok(r) => r,
        Err(e) => {
            let msg = format!("Monte Carlo failed: {e}");
            return [Verdict::new(false, &msg), Verdict::new(false, &msg), Verdict::new(false, msg)];
        }
    };
    let secs = start.elapsed().as_secs_f64();
    let _ = write_outputs(&dir().join("out"), &cfg, &res, &records);
    let (t, a) = (cfg.t_grid[0], cfg.alpha_grid[0]);
    let cell = |e: Estimator| res.cell(e, t, a).expect("estimator cell");
    let su = cell(Estimator::SuLp);
    let lp = cell(Estimator::LpDefault);
    let sm = cell(Estimator::LpSmooth);

    let in_band = su.metrics.iter().filter(|m| m.coverage >= BAND.0 && m.coverage <= BAND.1).count();
    let c85 = res
        .coarsening
        .iter()
        .find(|c| c.c.is_some_and(|v| (v - 0.85).abs() < 1e-9))
        .map(|c| format!("; at c = 0.85: [{}]", fmt_row(c, |m| m.coverage)))
        .unwrap_or_default();
    let coverage = Verdict::new(
        in_band >= MIN_IN_BAND,
        format!(
            "{in_band}/{} horizons in [{}, {}] (need {MIN_IN_BAND}); {} reps, {} failed, {secs:.0}s; SU-LP coverage by h: [{}]{c85}",
            su.metrics.len(),
            BAND.0,
            BAND.1,
            su.n_reps,
            su.n_failed,
            fmt_row(su, |m| m.coverage)
        ),
    );

    let (m_su, m_lp, m_sm) = (mean_coverage(su), mean_coverage(lp), mean_coverage(sm));
    let direction = Verdict::new(
        m_lp <= m_su + LP_MARGIN && m_sm < SMOOTH_CEILING,
        format!("mean coverage SU-LP {m_su:.3}, LP default {m_lp:.3} (limit SU-LP + {LP_MARGIN}), LP smooth {m_sm:.3} (limit < {SMOOTH_CEILING})"),
    );

    let ratios: Vec<(usize, f64)> = su
        .metrics
        .iter()
        .zip(&lp.metrics)
        .filter(|(m, _)| m.horizon >= BIAS_FROM_H)
        .map(|(s, l)| (s.horizon, s.median_abs_bias / l.median_abs_bias))
        .collect();
    let worst = ratios.iter().fold(0.0f64, |w, r| w.max(r.1));
    let bias = Verdict::new(
        ratios.iter().all(|r| r.1 <= BIAS_GUARD),
        format!(
            "SU-LP / LP default normalized median |bias| for h >= {BIAS_FROM_H}: [{}], worst {worst:.3} (limit {BIAS_GUARD})",
            ratios.iter().map(|r| format!("{:.2}", r.1)).collect::<Vec<_>>().join(" ")
        ),
    );
    [coverage, direction, bias]
}
