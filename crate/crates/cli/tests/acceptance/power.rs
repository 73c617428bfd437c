//! Power-posterior reweighting: identities at c = 1, width monotonicity, ESS.

use sulp_core::dgp::{ar1_system, simulate_ar1};
use sulp_core::power_posterior::{canonical_c_grid, effective_sample_size, grid_summary, importance_weights, WeightedChain};
use sulp_core::priors::{default_hyperparameters, Priors};
use sulp_core::random::substream;
use sulp_core::sampler::{run_sampler, SamplerConfig};
use sulp_core::summary::IrfSummary;

use crate::common::{Checks, Verdict};

/// Relative slack for a width increase between neighbouring c values (importance-sampling noise).
const WIDTH_TOL: f64 = 0.03;

pub fn run() -> Verdict {
    let mut c = Checks::default();

    let w = simulate_ar1(0.8, 200, &mut substream(31, &[1]));
    let sys = ar1_system(&w, 8);
    let priors = Priors::build(&sys, default_hyperparameters(sys.h()), false).expect("priors");
    let config = SamplerConfig { n_draws: 6000, burn_in: 1000, thin: 1, ..SamplerConfig::default() };
    let chain = run_sampler(&sys, &priors, &config, &mut substream(31, &[2])).expect("sampler");
    let n = chain.n_stored();

    let unit = WeightedChain::new(&chain, 1.0).expect("weights");
    c.expect(unit.relative.iter().all(|&w| w == 1.0), || "c = 1 weights are not all exactly 1".into());
    c.expect(unit.ess == n as f64, || format!("c = 1 ESS {} != {n}", unit.ess));
    let plain = IrfSummary::from_chain(&chain, 0).expect("summary");
    c.expect(unit.summary(0).expect("summary") == plain, || "c = 1 summary differs from the base chain".into());

    let grid = grid_summary(&chain, 0, &canonical_c_grid(), 0.9).expect("grid");
    let mut worst = 0.0f64;
    for pair in grid.windows(2) {
        for (h, (lo_c, hi_c)) in pair[0].widths.iter().zip(&pair[1].widths).enumerate() {
            let rise = (hi_c - lo_c) / lo_c;
            worst = worst.max(rise);
            c.expect(rise <= WIDTH_TOL, || {
                format!("h {h}: width rises {:.1}% from c = {} to c = {}", 100.0 * rise, pair[0].c, pair[1].c)
            });
        }
    }
    let (first, last) = (&grid[0], &grid[grid.len() - 1]);
    let total = |r: &sulp_core::power_posterior::GridRow| r.widths.iter().sum::<f64>();
    c.expect(total(first) >= total(last), || "total width at c = 0.80 below c = 1".into());
    c.expect(grid.windows(2).all(|p| p[0].ess <= p[1].ess), || "ESS not increasing in c".into());

    // hand cases
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    c.expect(close(effective_sample_size(&[0.5, 0.5]), 2.0), || "ESS of two equal weights".into());
    c.expect(close(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0), || "ESS of a point mass".into());
    c.expect(close(effective_sample_size(&[1.0 / 3.0, 2.0 / 3.0]), 1.8), || "ESS of (1/3, 2/3)".into());
    c.expect(effective_sample_size(&[2.0; 4]) == 4.0, || "ESS of unnormalized equal weights".into());
    let iw = importance_weights(&[2f64.ln(), 0.0], 0.0).expect("weights");
    c.expect(close(iw[0], 1.0 / 3.0) && close(iw[1], 2.0 / 3.0), || format!("weights at c = 0: {iw:?}"));
    let iw = importance_weights(&[0.0, 2.0 * 3f64.ln()], 0.5).expect("weights");
    c.expect(close(iw[0], 0.75) && close(effective_sample_size(&iw), 1.6), || format!("weights at c = 0.5: {iw:?}"));

    let mut v = c.verdict("identity/monotonicity");
    v.detail.push_str(&format!(
        "; {n} draws, ESS at c = 0.80: {:.0}, largest neighbour width rise {:.2}% (limit {:.0}%)",
        first.ess,
        100.0 * worst,
        100.0 * WIDTH_TOL
    ));
    v
}
