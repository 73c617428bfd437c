//! Subcommand implementations.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;
use sulp_core::dataset::{
    build_design, load_csv, standardize, to_csv_bytes, DesignSpec, ScalingInfo, ShockSource, SulpSystem, TimeSeriesDataset,
};
use sulp_core::dgp::{builtin_calibration, load_calibration, simulate_varma, true_irf, VarmaParams};
use sulp_core::harness::{run_monte_carlo, write_outputs, SHOCK_COLUMN};
use sulp_core::model::relevance_statistic;
use sulp_core::power_posterior::{grid_summary, WeightedChain};
use sulp_core::priors::Priors;
use sulp_core::random::substream;
use sulp_core::sampler::chain::{fmt_f64, write_atomic};
use sulp_core::sampler::{run_sampler, Chain};
use sulp_core::summary::{column_quantiles, IrfSummary, SUMMARY_QUANTILES};

use crate::config::{self, Loaded};
use crate::{CliError, Common};

const OUTPUT_SCHEMA_VERSION: u32 = 1;

fn require_config(c: &Common) -> Result<Loaded, CliError> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    config::load(path)
}

fn output_dir(c: &Common, loaded: Option<&Loaded>) -> PathBuf {
    match (&c.output_dir, loaded) {
        (Some(d), _) => d.clone(),
        (None, Some(l)) => l.resolve(&l.config.output.dir),
        (None, None) => PathBuf::from("sulp-out"),
    }
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(write_atomic(path, text.as_bytes())?)
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("csv: {e}"))
}

/// Columns the design reads, in first-use order.
fn used_columns(spec: &DesignSpec) -> Vec<String> {
    let mut cols = vec![spec.target.clone()];
    cols.extend(spec.contemporaneous_controls.iter().cloned());
    cols.extend(spec.lagged_only_columns());
    let mut seen = std::collections::HashSet::new();
    cols.retain(|c| seen.insert(c.clone()));
    cols
}

fn subset(ds: &TimeSeriesDataset, cols: &[String]) -> Result<TimeSeriesDataset, CliError> {
    let idx: Vec<usize> = cols.iter().map(|c| ds.column_index(c)).collect::<Result<_, _>>()?;
    let values = DMatrix::from_fn(ds.n_rows(), idx.len(), |i, j| ds.values[(i, idx[j])]);
    Ok(TimeSeriesDataset::new(cols.to_vec(), values, ds.time_index.clone())?)
}

/// Quantiles of a per-period statistic, one row per (origin, label).
fn period_quantiles_csv(origins: &[String], blocks: &[(String, DMatrix<f64>)]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["origin".to_string(), "series".to_string()];
    header.extend(SUMMARY_QUANTILES.iter().map(|q| format!("q{:02}", (q * 100.0).round() as u32)));
    w.write_record(&header).map_err(csv_err)?;
    let qs: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|(_, d)| column_quantiles(d, &SUMMARY_QUANTILES))
        .collect::<Result<_, _>>()?;
    for (t, origin) in origins.iter().enumerate() {
        for ((name, _), q) in blocks.iter().zip(&qs) {
            let mut rec = vec![origin.clone(), name.clone()];
            rec.extend(q.row(t).iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(csv_err)
}

/// S × T draws of one column of a T × n per-draw block.
fn block_column(chain: &Chain, name: &str, t: usize, n: usize, col: usize) -> Result<DMatrix<f64>, CliError> {
    let b = chain.block(name)?;
    Ok(DMatrix::from_fn(b.nrows(), t, |s, r| b[(s, r * n + col)]))
}

fn write_instrument_outputs(out: &Path, sys: &SulpSystem, chain: &Chain, files: &mut Vec<String>) -> Result<(), CliError> {
    let Some(inst) = sys.instruments.as_ref() else {
        return Ok(());
    };
    let (t, nx) = (sys.t(), sys.n_shocks());
    if chain.has_block("x") {
        let blocks: Vec<(String, DMatrix<f64>)> = (0..nx)
            .filter(|&i| sys.latent[i])
            .map(|i| Ok((sys.shock_names[i].clone(), block_column(chain, "x", t, nx, i)?)))
            .collect::<Result<_, CliError>>()?;
        write_atomic(&out.join("shocks.csv"), &period_quantiles_csv(&sys.origins, &blocks)?)?;
        files.push("shocks.csv".into());
    }
    let phi = chain.block("phi")?;
    let snu = chain.block("sigma_nu")?;
    let nm = inst.names.len();
    let logvol = if chain.has_block("logvol") { Some(chain.block("logvol")?) } else { None };
    let s_count = chain.n_stored();
    let mut blocks = Vec::new();
    for (j, name) in inst.names.iter().enumerate() {
        let i = inst.loads_on[j];
        let d = DMatrix::from_fn(s_count, t, |s, r| {
            let var = logvol.as_ref().map_or(1.0, |lv| lv[(s, r * nx + i)].exp());
            relevance_statistic(phi[(s, j)], var, snu[(s, j * nm + j)])
        });
        blocks.push((name.clone(), d));
    }
    write_atomic(&out.join("relevance.csv"), &period_quantiles_csv(&sys.origins, &blocks)?)?;
    files.push("relevance.csv".into());
    Ok(())
}

fn write_irfs(out: &Path, chain: &Chain, suffix: &str, weights: Option<&[f64]>, files: &mut Vec<String>) -> Result<Vec<IrfSummary>, CliError> {
    let mut all = Vec::new();
    for (i, name) in chain.manifest.shock_names.iter().enumerate() {
        let s = match weights {
            Some(w) => IrfSummary::from_weighted(chain, i, w)?,
            None => IrfSummary::from_chain(chain, i)?,
        };
        let file = format!("irf_{name}{suffix}.csv");
        s.write_csv(&out.join(&file))?;
        files.push(file);
        all.push(s);
    }
    Ok(all)
}

pub fn estimate(c: &Common) -> Result<(), CliError> {
    let loaded = require_config(c)?;
    let cfg = &loaded.config;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("estimate needs a [data] section".into()))?;
    let spec = cfg
        .spec
        .clone()
        .ok_or_else(|| CliError::Config("estimate needs a [spec] section".into()))?;
    spec.validate()?;
    let seed = c.seed.or(cfg.seed).unwrap_or(cfg.sampler.rng_seed);
    let out = output_dir(c, Some(&loaded));

    let raw = load_csv(loaded.resolve(&data.path), &data.time_column)?;
    let ds = subset(&raw, &used_columns(&spec))?;
    let (ds, scaling) = if data.standardize {
        standardize(&ds)?
    } else {
        let id = ScalingInfo::identity(&ds.names);
        (ds, id)
    };
    let sys = build_design(&ds, &spec)?;
    let hyper = config::hyperparameters(cfg.priors.as_ref(), sys.h())?;
    let priors = Priors::build(&sys, hyper, spec.target_in_levels)?;
    let mut sampler = cfg.sampler.clone();
    sampler.rng_seed = seed;
    sampler.validate()?;

    let mut rng = substream(seed, &[0]);
    let mut chain = run_sampler(&sys, &priors, &sampler, &mut rng)?;
    chain.manifest.target_scale = scaling.std_of(&spec.target)?;
    chain.manifest.shock_scales = spec
        .shocks
        .iter()
        .map(|s| match &s.source {
            ShockSource::Observed { column } => scaling.std_of(column).map(|v| 1.0 / v),
            ShockSource::Instrumented { .. } => Ok(1.0),
        })
        .collect::<Result<_, _>>()?;

    let mut files = vec!["chain.bin".to_string(), "chain.json".to_string()];
    chain.save(&out, "chain")?;
    let summaries = write_irfs(&out, &chain, "", None, &mut files)?;
    write_json(&out.join("irf.json"), &serde_json::to_value(&summaries).map_err(|e| CliError::Config(e.to_string()))?)?;
    files.push("irf.json".into());
    write_instrument_outputs(&out, &sys, &chain, &mut files)?;
    files.push("manifest.json".into());
    write_json(
        &out.join("manifest.json"),
        &json!({
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "command": "estimate",
            "config_hash": loaded.hash,
            "chain_config_hash": chain.manifest.config_hash,
            "seed": seed,
            "origins": sys.t(),
            "first_origin": sys.origins.first(),
            "last_origin": sys.origins.last(),
            "horizons": sys.h(),
            "controls": sys.control_names,
            "shocks": sys.shock_names,
            "target_scale": chain.manifest.target_scale,
            "shock_scales": chain.manifest.shock_scales,
            "acceptance": chain.manifest.acceptance,
            "hyperparameters": priors.hyper,
            "files": files,
        }),
    )?;
    Ok(())
}

fn load_params(loaded: &Loaded, name: &str) -> Result<VarmaParams, CliError> {
    Ok(match builtin_calibration(name) {
        Some(cal) => VarmaParams::from_file(&cal)?,
        None => load_calibration(loaded.resolve(Path::new(name)))?,
    })
}

pub fn simulate(c: &Common) -> Result<(), CliError> {
    let loaded = require_config(c)?;
    let sim = loaded.config.simulate.clone().unwrap_or_default();
    let seed = c.seed.or(loaded.config.seed).unwrap_or(0);
    let out = output_dir(c, Some(&loaded));
    let params = load_params(&loaded, &sim.calibration)?.with_alpha(sim.alpha);
    if sim.t == 0 {
        return Err(CliError::Config("[simulate].t must be positive".into()));
    }
    let mut rng = substream(seed, &[1]);
    let (w, shock) = simulate_varma(&params, sim.t, sim.burn_in, &mut rng)?;
    let n = params.n();
    let mut names = params.names.clone();
    names.push(SHOCK_COLUMN.to_string());
    let values = DMatrix::from_fn(sim.t, n + 1, |r, j| if j < n { w[(r, j)] } else { shock[r] });
    let ds = TimeSeriesDataset::from_columns(names, values)?;
    write_atomic(&out.join("data.csv"), &to_csv_bytes(&ds, "t")?)?;

    let truth = true_irf(&params, sim.t, params.target, params.shock, sim.max_horizon);
    let mut tw = csv::Writer::from_writer(Vec::new());
    tw.write_record(["horizon", "beta_star"]).map_err(csv_err)?;
    for (h, b) in truth.beta_star.iter().enumerate() {
        tw.write_record([h.to_string(), fmt_f64(*b)]).map_err(csv_err)?;
    }
    write_atomic(&out.join("truth.csv"), &tw.into_inner().map_err(csv_err)?)?;
    write_json(
        &out.join("manifest.json"),
        &json!({
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "command": "simulate",
            "config_hash": loaded.hash,
            "seed": seed,
            "calibration": sim.calibration,
            "alpha": sim.alpha,
            "pi": params.pi,
            "t": sim.t,
            "burn_in": sim.burn_in,
            "target": params.names[params.target],
            "shock": params.names[params.shock],
            "files": ["data.csv", "truth.csv", "manifest.json"],
        }),
    )
}

pub fn montecarlo(c: &Common) -> Result<(), CliError> {
    let loaded = require_config(c)?;
    let mut mc = loaded
        .config
        .montecarlo
        .clone()
        .ok_or_else(|| CliError::Config("montecarlo needs a [montecarlo] section".into()))?;
    if let Some(s) = c.seed.or(loaded.config.seed) {
        mc.seed = s;
    }
    if let Some(t) = c.threads {
        mc.threads = t;
    }
    if builtin_calibration(&mc.calibration).is_none() {
        mc.calibration = loaded.resolve(Path::new(&mc.calibration)).to_string_lossy().into_owned();
    }
    mc.validate()?;
    let out = output_dir(c, Some(&loaded));
    let (result, records) = run_monte_carlo(&mc, Some(&out.join("checkpoints")))?;
    write_outputs(&out, &mc, &result, &records)?;
    let worst = result.max_failure_rate();
    if worst > 0.10 {
        return Err(CliError::PartialFailure(format!(
            "{:.1}% of replications failed in the worst cell",
            100.0 * worst
        )));
    }
    Ok(())
}

fn chain_path(loaded: Option<&Loaded>, flag: Option<PathBuf>, from_cfg: Option<PathBuf>) -> Result<PathBuf, CliError> {
    match (flag, from_cfg, loaded) {
        (Some(p), _, _) => Ok(p),
        (None, Some(p), Some(l)) => Ok(l.resolve(&p)),
        _ => Err(CliError::Config("no chain given (use --chain or the config file)".into())),
    }
}

pub fn reweight(c: &Common, chain: Option<PathBuf>, grid: Option<Vec<f64>>) -> Result<(), CliError> {
    let loaded = c.config.as_ref().map(|p| config::load(p)).transpose()?;
    let rw = loaded
        .as_ref()
        .and_then(|l| l.config.reweight.clone())
        .unwrap_or_default();
    let path = chain_path(loaded.as_ref(), chain, rw.chain.clone())?;
    let grid = grid.unwrap_or(rw.c.clone());
    if grid.is_empty() {
        return Err(CliError::Config("empty learning-rate grid".into()));
    }
    let seed = c.seed.or(loaded.as_ref().and_then(|l| l.config.seed)).unwrap_or(0);
    let out = output_dir(c, loaded.as_ref());
    let source = Chain::load(&path)?;
    let mut files = Vec::new();
    for &cv in &grid {
        let wc = WeightedChain::new(&source, cv)?;
        write_irfs(&out, &source, &format!("_c{}", fmt_f64(cv)), Some(&wc.relative), &mut files)?;
        if rw.resample > 0 {
            let mut rng = substream(seed, &[2, cv.to_bits()]);
            let re = wc.resample(rw.resample, rw.ess_warn_fraction, &mut rng)?;
            let stem = format!("chain_c{}", fmt_f64(cv));
            re.save(&out, &stem)?;
            files.push(format!("{stem}.json"));
        } else if wc.ess < rw.ess_warn_fraction * source.n_stored() as f64 {
            log::warn!("effective sample size {:.1} at c = {cv}", wc.ess);
        }
    }
    let h = source.manifest.horizons;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["shock".to_string(), "c".to_string(), "ess".to_string()];
    header.extend((0..h).map(|j| format!("width_h{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, name) in source.manifest.shock_names.iter().enumerate() {
        for row in grid_summary(&source, i, &grid, rw.level)? {
            let mut rec = vec![name.clone(), fmt_f64(row.c), fmt_f64(row.ess)];
            rec.extend(row.widths.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    write_atomic(&out.join("grid.csv"), &w.into_inner().map_err(csv_err)?)?;
    files.push("grid.csv".into());
    files.push("manifest.json".into());
    write_json(
        &out.join("manifest.json"),
        &json!({
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "command": "reweight",
            "config_hash": loaded.as_ref().map(|l| l.hash.clone()),
            "source_config_hash": source.manifest.config_hash,
            "seed": seed,
            "c": grid,
            "level": rw.level,
            "files": files,
        }),
    )
}

pub fn export(c: &Common, chain: Option<PathBuf>) -> Result<(), CliError> {
    let loaded = c.config.as_ref().map(|p| config::load(p)).transpose()?;
    let from_cfg = loaded.as_ref().and_then(|l| l.config.export.as_ref().map(|e| e.chain.clone()));
    let path = chain_path(loaded.as_ref(), chain, from_cfg)?;
    let out = output_dir(c, loaded.as_ref());
    let source = Chain::load(&path)?;
    source.export_beta_csv(&out.join("beta_draws.csv"))?;
    let mut files = vec!["beta_draws.csv".to_string()];
    write_irfs(&out, &source, "", None, &mut files)?;
    Ok(())
}
