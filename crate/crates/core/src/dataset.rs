//! Data ingestion, standardization, lead/lag design construction and
//! long differences.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SulpError};

/// Raw named columns over a time index. Missing cells are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub names: Vec<String>,
    /// T_raw × n_cols.
    pub values: DMatrix<f64>,
    pub time_index: Vec<String>,
}

fn time_less(a: &str, b: &str) -> bool {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x < y,
        _ => a < b,
    }
}

impl TimeSeriesDataset {
    pub fn new(names: Vec<String>, values: DMatrix<f64>, time_index: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(SulpError::DuplicateColumn(n.clone()));
            }
        }
        if values.ncols() != names.len() {
            return Err(SulpError::InvalidDesign(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if time_index.len() != values.nrows() {
            return Err(SulpError::InvalidDesign(format!(
                "{} time labels for {} rows",
                time_index.len(),
                values.nrows()
            )));
        }
        for (i, w) in time_index.windows(2).enumerate() {
            if !time_less(&w[0], &w[1]) {
                return Err(SulpError::NonMonotoneTime {
                    row: i + 2,
                    prev: w[0].clone(),
                    next: w[1].clone(),
                });
            }
        }
        Ok(Self {
            names,
            values,
            time_index,
        })
    }

    /// Dataset with a synthetic integer time index `1..=T`.
    pub fn from_columns(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let idx = (1..=values.nrows()).map(|i| i.to_string()).collect();
        Self::new(names, values, idx)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| SulpError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.values.column(j).iter().copied().collect())
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.values[(row, col)].is_nan()
    }

    /// Row-major missing-value mask.
    pub fn missing_mask(&self) -> Vec<Vec<bool>> {
        (0..self.n_rows())
            .map(|i| (0..self.n_cols()).map(|j| self.is_missing(i, j)).collect())
            .collect()
    }
}

/// Read a CSV file with a header row. `time_column` holds opaque labels;
/// every other column must be numeric, with empty cells or `NA` marking missing values.
pub fn load_csv(path: impl AsRef<Path>, time_column: &str) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| SulpError::io(path, e))?;
    read_csv(file, time_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, time_column: &str) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| SulpError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(SulpError::DuplicateColumn(h.clone()));
        }
    }
    let tcol = header
        .iter()
        .position(|h| h == time_column)
        .ok_or_else(|| SulpError::MissingColumn(time_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != tcol)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut times = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SulpError::Csv(e.to_string()))?;
        let row_no = i + 2;
        if rec.len() != header.len() {
            return Err(SulpError::RaggedRow {
                row: row_no,
                found: rec.len(),
                expected: header.len(),
            });
        }
        let mut vals = Vec::with_capacity(names.len());
        for (j, cell) in rec.iter().enumerate() {
            if j == tcol {
                times.push(cell.to_string());
                continue;
            }
            let v = if cell.is_empty() || cell == "NA" {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| SulpError::NonNumeric {
                    column: header[j].clone(),
                    row: row_no,
                    value: cell.to_string(),
                })?
            };
            vals.push(v);
        }
        rows.push(vals);
    }
    let values = DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]);
    TimeSeriesDataset::new(names, values, times)
}

/// Serialize with the time labels first; missing cells are written as `NA`.
pub fn to_csv_bytes(ds: &TimeSeriesDataset, time_column: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![time_column.to_string()];
    header.extend(ds.names.iter().cloned());
    w.write_record(&header).map_err(|e| SulpError::Csv(e.to_string()))?;
    for i in 0..ds.n_rows() {
        let mut rec = vec![ds.time_index[i].clone()];
        rec.extend(ds.values.row(i).iter().map(|v| if v.is_nan() { "NA".to_string() } else { format!("{v:?}") }));
        w.write_record(&rec).map_err(|e| SulpError::Csv(e.to_string()))?;
    }
    w.into_inner().map_err(|e| SulpError::Csv(e.to_string()))
}

/// Per-column location/scale used to standardize and to map estimates back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalingInfo {
    pub fn std_of(&self, name: &str) -> Result<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.std[j])
            .ok_or_else(|| SulpError::MissingScaling(name.to_string()))
    }

    pub fn identity(names: &[String]) -> Self {
        Self {
            names: names.to_vec(),
            mean: vec![0.0; names.len()],
            std: vec![1.0; names.len()],
        }
    }
}

/// Center and scale every column with the (T-1)-denominator sample std; missing cells stay missing.
pub fn standardize(ds: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, ScalingInfo)> {
    let mut out = ds.values.clone();
    let mut means = Vec::with_capacity(ds.n_cols());
    let mut stds = Vec::with_capacity(ds.n_cols());
    for j in 0..ds.n_cols() {
        let obs: Vec<f64> = ds.values.column(j).iter().copied().filter(|v| !v.is_nan()).collect();
        let distinct = obs.iter().any(|v| *v != obs[0]);
        if obs.len() < 2 || !distinct {
            return Err(SulpError::ConstantColumn(ds.names[j].clone()));
        }
        let n = obs.len() as f64;
        let m = obs.iter().sum::<f64>() / n;
        let s = (obs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(s > 0.0) {
            return Err(SulpError::ConstantColumn(ds.names[j].clone()));
        }
        for i in 0..ds.n_rows() {
            out[(i, j)] = (ds.values[(i, j)] - m) / s;
        }
        means.push(m);
        stds.push(s);
    }
    let scaled = TimeSeriesDataset {
        names: ds.names.clone(),
        values: out,
        time_index: ds.time_index.clone(),
    };
    Ok((
        scaled,
        ScalingInfo {
            names: ds.names.clone(),
            mean: means,
            std: stds,
        },
    ))
}

pub fn unstandardize(ds: &TimeSeriesDataset, scaling: &ScalingInfo) -> Result<TimeSeriesDataset> {
    let mut out = ds.values.clone();
    for (j, name) in ds.names.iter().enumerate() {
        let k = scaling
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| SulpError::MissingScaling(name.clone()))?;
        for i in 0..ds.n_rows() {
            out[(i, j)] = ds.values[(i, j)] * scaling.std[k] + scaling.mean[k];
        }
    }
    Ok(TimeSeriesDataset {
        names: ds.names.clone(),
        values: out,
        time_index: ds.time_index.clone(),
    })
}

/// Multiply impulse-response draws (any layout) by the target's standard deviation.
///
/// Latent shocks have unit unconditional variance already, so the response is
/// to a one-standard-deviation shock. For an observed shock column, pass its
/// name to express the response per unit of the original shock instead.
pub fn rescale_irf(
    draws: &DMatrix<f64>,
    scaling: &ScalingInfo,
    target: &str,
    shock: Option<&str>,
) -> Result<DMatrix<f64>> {
    Ok(draws * irf_scale(scaling, target, shock)?)
}

/// Factor applied by [`rescale_irf`].
pub fn irf_scale(scaling: &ScalingInfo, target: &str, shock: Option<&str>) -> Result<f64> {
    let s = scaling.std_of(target)?;
    match shock {
        Some(x) => Ok(s / scaling.std_of(x)?),
        None => Ok(s),
    }
}

/// How a structural shock enters the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockSource {
    /// The shock column is observed directly.
    Observed { column: String },
    /// The shock is latent and measured by one or more instruments.
    Instrumented {
        instruments: Vec<String>,
        /// Replace the instruments by their first principal component before estimation.
        #[serde(default)]
        principal_component: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: ShockSource,
}

/// Model variants that change which blocks the sampler runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelFlags {
    /// Stochastic volatility on every latent shock.
    pub stochastic_volatility: bool,
    /// Full covariance across instrument measurement errors.
    pub correlated_measurement_errors: bool,
}

/// What to estimate: roles of columns, lag order, horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub target: String,
    pub shocks: Vec<ShockSpec>,
    /// r_t: enter contemporaneously and with lags.
    #[serde(default)]
    pub contemporaneous_controls: Vec<String>,
    /// s_t: enter with lags only (target and shock/instrument lags are added automatically).
    #[serde(default)]
    pub lagged_controls: Vec<String>,
    pub lags: usize,
    pub max_horizon: usize,
    #[serde(default)]
    pub long_differences: bool,
    #[serde(default = "yes")]
    pub include_intercept: bool,
    #[serde(default)]
    pub include_trend: bool,
    /// Target measured in levels (drives the controls prior mean).
    #[serde(default)]
    pub target_in_levels: bool,
    #[serde(default)]
    pub flags: ModelFlags,
}

fn yes() -> bool {
    true
}

impl DesignSpec {
    /// Single observed shock, no extra controls.
    pub fn observed(target: &str, shock: &str, lags: usize, max_horizon: usize) -> Self {
        Self {
            target: target.to_string(),
            shocks: vec![ShockSpec {
                name: shock.to_string(),
                source: ShockSource::Observed {
                    column: shock.to_string(),
                },
            }],
            contemporaneous_controls: vec![],
            lagged_controls: vec![],
            lags,
            max_horizon,
            long_differences: false,
            include_intercept: true,
            include_trend: false,
            target_in_levels: false,
            flags: ModelFlags::default(),
        }
    }

    pub fn horizons(&self) -> usize {
        self.max_horizon + 1
    }

    /// Columns whose lags enter z_t after the contemporaneous block: target,
    /// shock sources (observed shocks or instruments), then lagged-only controls.
    pub fn lagged_only_columns(&self) -> Vec<String> {
        let mut cols = vec![self.target.clone()];
        for s in &self.shocks {
            match &s.source {
                ShockSource::Observed { column } => cols.push(column.clone()),
                ShockSource::Instrumented { instruments, .. } => cols.extend(instruments.iter().cloned()),
            }
        }
        cols.extend(self.lagged_controls.iter().cloned());
        let mut seen = HashSet::new();
        cols.retain(|c| seen.insert(c.clone()));
        cols
    }

    /// k = n_r + P(n_r + n_s) plus deterministic terms.
    pub fn n_controls(&self) -> usize {
        let nr = self.contemporaneous_controls.len();
        let ns = self.lagged_only_columns().len();
        nr + self.lags * (nr + ns) + self.include_intercept as usize + self.include_trend as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags < 1 {
            return Err(SulpError::InvalidDesign("lag order must be >= 1".into()));
        }
        if self.shocks.is_empty() {
            return Err(SulpError::InvalidDesign("at least one shock is required".into()));
        }
        if self.contemporaneous_controls.contains(&self.target) || self.lagged_controls.contains(&self.target) {
            return Err(SulpError::InvalidDesign("target listed among controls".into()));
        }
        let mut names = HashSet::new();
        for s in &self.shocks {
            if !names.insert(&s.name) {
                return Err(SulpError::InvalidDesign(format!("duplicate shock `{}`", s.name)));
            }
            if let ShockSource::Instrumented { instruments, .. } = &s.source {
                if instruments.is_empty() {
                    return Err(SulpError::InvalidDesign(format!("shock `{}` has no instruments", s.name)));
                }
            }
        }
        Ok(())
    }
}

/// Role of each control column, used to build the Minnesota-style prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ControlRole {
    Intercept,
    Trend,
    Contemporaneous,
    OwnLag { lag: usize },
    CrossLag { lag: usize },
}

impl ControlRole {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, ControlRole::Intercept | ControlRole::Trend | ControlRole::Contemporaneous)
    }
}

/// Instruments attached to latent shocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentBlock {
    pub names: Vec<String>,
    /// T × n_m (standardized instrument values, or their principal component).
    pub values: DMatrix<f64>,
    /// Shock index loaded by each instrument.
    pub loads_on: Vec<usize>,
}

/// Stacked SUR design ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SulpSystem {
    /// T × H responses; NaN at positions in `missing`.
    pub y: DMatrix<f64>,
    /// T × n_x shock values; columns of latent shocks hold their initial values.
    pub x: DMatrix<f64>,
    /// Which shocks are latent.
    pub latent: Vec<bool>,
    pub instruments: Option<InstrumentBlock>,
    /// T × k controls.
    pub z: DMatrix<f64>,
    pub control_names: Vec<String>,
    pub control_roles: Vec<ControlRole>,
    /// (row, horizon) of missing leads, row-major order.
    pub missing: Vec<(usize, usize)>,
    pub shock_names: Vec<String>,
    pub origins: Vec<String>,
    pub flags: ModelFlags,
}

impl SulpSystem {
    pub fn t(&self) -> usize {
        self.y.nrows()
    }
    pub fn h(&self) -> usize {
        self.y.ncols()
    }
    pub fn k(&self) -> usize {
        self.z.ncols()
    }
    pub fn n_shocks(&self) -> usize {
        self.x.ncols()
    }
    pub fn has_latent(&self) -> bool {
        self.latent.iter().any(|&l| l)
    }
    pub fn n_instruments(&self) -> usize {
        self.instruments.as_ref().map_or(0, |b| b.values.ncols())
    }

    /// Minimal observed-shock system from raw matrices (no missing entries).
    pub fn from_parts(y: DMatrix<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Self {
        let k = z.ncols();
        let n_x = x.ncols();
        let missing = (0..y.nrows())
            .flat_map(|t| (0..y.ncols()).map(move |h| (t, h)))
            .filter(|&(t, h)| y[(t, h)].is_nan())
            .collect();
        Self {
            origins: (1..=y.nrows()).map(|i| i.to_string()).collect(),
            y,
            latent: vec![false; n_x],
            x,
            instruments: None,
            control_names: (0..k).map(|j| format!("z{j}")).collect(),
            control_roles: vec![ControlRole::CrossLag { lag: 1 }; k],
            z,
            missing,
            shock_names: (0..n_x).map(|i| format!("shock{i}")).collect(),
            flags: ModelFlags::default(),
        }
    }
}

/// First principal component of the (complete) columns, scaled to unit variance,
/// signed so that it loads positively on the first column.
pub fn first_principal_component(cols: &DMatrix<f64>) -> Result<Vec<f64>> {
    let t = cols.nrows();
    let n = cols.ncols();
    if t < 2 {
        return Err(SulpError::InsufficientSample { needed: 2, available: t });
    }
    let mut c = cols.clone();
    for j in 0..n {
        let m = c.column(j).mean();
        c.column_mut(j).add_scalar_mut(-m);
    }
    let cov = c.transpose() * &c / (t as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut w = eig.eigenvectors.column(imax).into_owned();
    if w[0] < 0.0 {
        w = -w;
    }
    let pc = &c * w;
    let sd = (pc.norm_squared() / (t as f64 - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(SulpError::ConstantColumn("principal component".into()));
    }
    Ok(pc.iter().map(|v| v / sd).collect())
}

/// Build the SU-LP design. Origins run from the first period with all lags
/// available to the end of the sample; leads beyond the sample or at missing
/// target cells become missing entries. Origins with a missing regressor are dropped.
pub fn build_design(ds: &TimeSeriesDataset, spec: &DesignSpec) -> Result<SulpSystem> {
    spec.validate()?;
    let p = spec.lags;
    let hmax = spec.max_horizon;
    let h_count = hmax + 1;
    let t_raw = ds.n_rows();
    let needed = p + hmax + 2;
    if t_raw < needed {
        return Err(SulpError::InsufficientSample {
            needed,
            available: t_raw,
        });
    }
    let col = |name: &str| -> Result<Vec<f64>> { ds.column(name) };
    let w = col(&spec.target)?;
    let r_cols: Vec<Vec<f64>> = spec
        .contemporaneous_controls
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let lag_names = spec.lagged_only_columns();
    let s_cols: Vec<Vec<f64>> = lag_names.iter().map(|c| col(c)).collect::<Result<_>>()?;

    // shock values and instruments
    let mut shock_cols: Vec<Vec<f64>> = Vec::new();
    let mut latent = Vec::new();
    let mut inst_names = Vec::new();
    let mut inst_cols: Vec<Vec<f64>> = Vec::new();
    let mut loads_on = Vec::new();
    for (i, s) in spec.shocks.iter().enumerate() {
        match &s.source {
            ShockSource::Observed { column } => {
                shock_cols.push(col(column)?);
                latent.push(false);
            }
            ShockSource::Instrumented {
                instruments,
                principal_component,
            } => {
                let cols: Vec<Vec<f64>> = instruments.iter().map(|c| col(c)).collect::<Result<_>>()?;
                if *principal_component && cols.len() > 1 {
                    // PC over rows where every instrument is observed; NaN elsewhere.
                    let rows: Vec<usize> = (0..t_raw).filter(|&t| cols.iter().all(|c| !c[t].is_nan())).collect();
                    let m = DMatrix::from_fn(rows.len(), cols.len(), |r, j| cols[j][rows[r]]);
                    let pc = first_principal_component(&m)?;
                    let mut full = vec![f64::NAN; t_raw];
                    for (r, &t) in rows.iter().enumerate() {
                        full[t] = pc[r];
                    }
                    inst_names.push(format!("{}_pc1", s.name));
                    shock_cols.push(full.clone());
                    inst_cols.push(full);
                    loads_on.push(i);
                } else {
                    shock_cols.push(cols[0].clone());
                    for (name, c) in instruments.iter().zip(cols) {
                        inst_names.push(name.clone());
                        inst_cols.push(c);
                        loads_on.push(i);
                    }
                }
                latent.push(true);
            }
        }
    }

    // control names and roles
    let mut names = Vec::new();
    let mut roles = Vec::new();
    if spec.include_intercept {
        names.push("intercept".to_string());
        roles.push(ControlRole::Intercept);
    }
    if spec.include_trend {
        names.push("trend".to_string());
        roles.push(ControlRole::Trend);
    }
    for c in &spec.contemporaneous_controls {
        names.push(c.clone());
        roles.push(ControlRole::Contemporaneous);
    }
    let lagged_block: Vec<(&String, bool)> = spec
        .contemporaneous_controls
        .iter()
        .map(|c| (c, false))
        .chain(lag_names.iter().map(|c| (c, *c == spec.target)))
        .collect();
    for lag in 1..=p {
        for (c, own) in &lagged_block {
            names.push(format!("{c}_lag{lag}"));
            roles.push(if *own {
                ControlRole::OwnLag { lag }
            } else {
                ControlRole::CrossLag { lag }
            });
        }
    }
    let lagged_values: Vec<&Vec<f64>> = r_cols.iter().chain(s_cols.iter()).collect();

    let ld = spec.long_differences;
    let first = if ld { p + 1 } else { p };
    let trend = |t: usize| (t + 1) as f64 / t_raw as f64;
    // stochastic part of z_t at origin t (0-based), before differencing
    let z_stoch = |t: usize| -> Vec<f64> {
        let mut v: Vec<f64> = r_cols.iter().map(|c| c[t]).collect();
        for lag in 1..=p {
            for c in &lagged_values {
                v.push(c[t - lag]);
            }
        }
        v
    };

    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    let mut z_rows: Vec<Vec<f64>> = Vec::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut m_rows: Vec<Vec<f64>> = Vec::new();
    let mut origins = Vec::new();
    for t in first..t_raw {
        let mut zs = z_stoch(t);
        if ld {
            let prev = z_stoch(t - 1);
            for (a, b) in zs.iter_mut().zip(prev) {
                *a -= b;
            }
        }
        let xt: Vec<f64> = shock_cols.iter().map(|c| c[t]).collect();
        let mt: Vec<f64> = inst_cols.iter().map(|c| c[t]).collect();
        let obs_shock_missing = xt.iter().zip(&latent).any(|(v, l)| !l && v.is_nan());
        if zs.iter().any(|v| v.is_nan()) || obs_shock_missing || mt.iter().any(|v| v.is_nan()) || (ld && w[t - 1].is_nan()) {
            continue;
        }
        let base = if ld { w[t - 1] } else { 0.0 };
        let yt: Vec<f64> = (0..h_count)
            .map(|h| if t + h < t_raw { w[t + h] - base } else { f64::NAN })
            .collect();
        let mut zt = Vec::with_capacity(names.len());
        if spec.include_intercept {
            zt.push(1.0);
        }
        if spec.include_trend {
            zt.push(trend(t));
        }
        zt.extend(zs);
        y_rows.push(yt);
        z_rows.push(zt);
        x_rows.push(xt);
        m_rows.push(mt);
        origins.push(ds.time_index[t].clone());
    }
    let t_eff = y_rows.len();
    let k = names.len();
    if t_eff < 2 {
        return Err(SulpError::InsufficientSample {
            needed: needed,
            available: t_eff,
        });
    }
    let y = DMatrix::from_fn(t_eff, h_count, |i, h| y_rows[i][h]);
    let z = DMatrix::from_fn(t_eff, k, |i, j| z_rows[i][j]);
    let mut x = DMatrix::from_fn(t_eff, spec.shocks.len(), |i, j| x_rows[i][j]);
    // latent shocks start from the standardized first instrument
    for j in 0..x.ncols() {
        if latent[j] {
            let c = x.column(j).into_owned();
            let m = c.mean();
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t_eff as f64 - 1.0)).sqrt().max(1e-12);
            x.column_mut(j).copy_from(&c.map(|v| (v - m) / sd));
        }
    }
    let instruments = if inst_cols.is_empty() {
        None
    } else {
        Some(InstrumentBlock {
            names: inst_names,
            values: DMatrix::from_fn(t_eff, inst_cols.len(), |i, j| m_rows[i][j]),
            loads_on,
        })
    };
    let missing = (0..t_eff)
        .flat_map(|t| (0..h_count).map(move |h| (t, h)))
        .filter(|&(t, h)| y[(t, h)].is_nan())
        .collect();
    Ok(SulpSystem {
        y,
        x,
        latent,
        instruments,
        z,
        control_names: names,
        control_roles: roles,
        missing,
        shock_names: spec.shocks.iter().map(|s| s.name.clone()).collect(),
        origins,
        flags: spec.flags,
    })
}
