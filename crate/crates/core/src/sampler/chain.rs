//! Stored draws: columnar binary file, JSON manifest, CSV export.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SulpError};

pub const CHAIN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    /// Per-draw shape; the block holds `product(dims)` values per draw.
    pub dims: Vec<usize>,
    /// Byte offset of the block inside the binary file.
    pub offset: u64,
}

impl BlockInfo {
    pub fn width(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Provenance of a reweighted chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightInfo {
    pub c: f64,
    pub ess: f64,
    pub n_source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub format_version: u32,
    pub n_stored: usize,
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub config_hash: String,
    pub horizons: usize,
    pub shock_names: Vec<String>,
    pub origins: usize,
    /// Multiply β and μ_β draws by this to return to original units.
    pub target_scale: f64,
    /// Extra per-shock factor (1 / std of an observed shock column); empty means all ones.
    #[serde(default)]
    pub shock_scales: Vec<f64>,
    /// Final (ξ, ς) acceptance rates per shock.
    pub acceptance: Vec<[f64; 2]>,
    pub blocks: Vec<BlockInfo>,
    #[serde(default)]
    pub reweight: Option<ReweightInfo>,
}

/// Stored draws, one row per kept sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub manifest: ChainManifest,
    /// Draw-major values per block.
    pub data: BTreeMap<String, Vec<f64>>,
}

impl Chain {
    pub fn n_stored(&self) -> usize {
        self.manifest.n_stored
    }

    pub fn block_info(&self, name: &str) -> Option<&BlockInfo> {
        self.manifest.blocks.iter().find(|b| b.name == name)
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.data.contains_key(name)
    }

    /// S × width matrix view of a block.
    pub fn block(&self, name: &str) -> Result<DMatrix<f64>> {
        let info = self
            .block_info(name)
            .ok_or_else(|| SulpError::Schema(format!("chain has no block `{name}`")))?;
        let w = info.width();
        let v = &self.data[name];
        Ok(DMatrix::from_fn(self.n_stored(), w, |s, j| v[s * w + j]))
    }

    /// Factor from model units to original units for shock `i`.
    pub fn scale_of(&self, shock: usize) -> f64 {
        self.manifest.target_scale * self.manifest.shock_scales.get(shock).copied().unwrap_or(1.0)
    }

    pub fn log_lik(&self) -> Vec<f64> {
        self.data.get("log_lik").cloned().unwrap_or_default()
    }

    /// S × H draws of β for shock `i`, in model (standardized) units.
    pub fn beta_draws(&self, shock: usize) -> Result<DMatrix<f64>> {
        self.shock_slice("beta", shock)
    }

    pub fn mu_beta_draws(&self, shock: usize) -> Result<DMatrix<f64>> {
        self.shock_slice("mu_beta", shock)
    }

    fn shock_slice(&self, name: &str, shock: usize) -> Result<DMatrix<f64>> {
        let h = self.manifest.horizons;
        let all = self.block(name)?;
        if (shock + 1) * h > all.ncols() {
            return Err(SulpError::Schema(format!("shock {shock} out of range in `{name}`")));
        }
        Ok(all.columns(shock * h, h).into_owned())
    }

    /// Draws selected by index (with repetition), used for resampling.
    pub fn select(&self, idx: &[usize]) -> Chain {
        let mut data = BTreeMap::new();
        for b in &self.manifest.blocks {
            let w = b.width();
            let src = &self.data[&b.name];
            let mut v = Vec::with_capacity(idx.len() * w);
            for &s in idx {
                v.extend_from_slice(&src[s * w..(s + 1) * w]);
            }
            data.insert(b.name.clone(), v);
        }
        let mut manifest = self.manifest.clone();
        manifest.n_stored = idx.len();
        recompute_offsets(&mut manifest);
        Chain { manifest, data }
    }

    /// Write `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SulpError::io(dir, e))?;
        let mut manifest = self.manifest.clone();
        recompute_offsets(&mut manifest);
        let bin = dir.join(format!("{stem}.bin"));
        let mut buf = Vec::new();
        for b in &manifest.blocks {
            for v in &self.data[&b.name] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_atomic(&bin, &buf)?;
        let json = serde_json::to_string_pretty(&manifest)?;
        write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())?;
        Ok(())
    }

    /// Load from a manifest path (`*.json`); the binary sits next to it.
    pub fn load(manifest_path: &Path) -> Result<Chain> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| SulpError::io(manifest_path, e))?;
        let manifest: ChainManifest = serde_json::from_str(&text)?;
        if manifest.format_version != CHAIN_FORMAT_VERSION {
            return Err(SulpError::Schema(format!(
                "chain format version {} (expected {CHAIN_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let bin = manifest_path.with_extension("bin");
        let mut f = std::fs::File::open(&bin).map_err(|e| SulpError::io(&bin, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| SulpError::io(&bin, e))?;
        let mut data = BTreeMap::new();
        for b in &manifest.blocks {
            let n = b.width() * manifest.n_stored;
            let start = b.offset as usize;
            let end = start + 8 * n;
            if end > bytes.len() {
                return Err(SulpError::Schema(format!("binary too short for block `{}`", b.name)));
            }
            let v: Vec<f64> = bytes[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            data.insert(b.name.clone(), v);
        }
        Ok(Chain { manifest, data })
    }

    /// CSV with one row per draw: draw, shock, then β at each horizon in original units.
    pub fn export_beta_csv(&self, path: &Path) -> Result<()> {
        let h = self.manifest.horizons;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["draw".to_string(), "shock".to_string()];
        header.extend((0..h).map(|i| format!("h{i}")));
        w.write_record(&header).map_err(|e| SulpError::Csv(e.to_string()))?;
        for (i, name) in self.manifest.shock_names.iter().enumerate() {
            let b = self.beta_draws(i)?;
            let scale = self.scale_of(i);
            for s in 0..self.n_stored() {
                let mut rec = vec![s.to_string(), name.clone()];
                rec.extend((0..h).map(|j| fmt_f64(b[(s, j)] * scale)));
                w.write_record(&rec).map_err(|e| SulpError::Csv(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| SulpError::Csv(e.to_string()))?;
        write_atomic(path, &bytes)
    }
}

pub(crate) fn recompute_offsets(m: &mut ChainManifest) {
    let mut off = 0u64;
    for b in &mut m.blocks {
        b.offset = off;
        off += (b.width() * m.n_stored * 8) as u64;
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Write to a temporary sibling then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| SulpError::io(dir, e))?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| SulpError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| SulpError::io(&tmp, e))?;
        f.sync_all().map_err(|e| SulpError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| SulpError::io(path, e))
}

/// Builder that accumulates draws block by block.
#[derive(Debug, Default)]
pub struct ChainBuilder {
    pub blocks: Vec<BlockInfo>,
    pub data: BTreeMap<String, Vec<f64>>,
}

impl ChainBuilder {
    pub fn declare(&mut self, name: &str, dims: Vec<usize>, capacity: usize) {
        let w: usize = dims.iter().product();
        self.blocks.push(BlockInfo {
            name: name.to_string(),
            dims,
            offset: 0,
        });
        self.data.insert(name.to_string(), Vec::with_capacity(w * capacity));
    }

    pub fn push(&mut self, name: &str, values: impl IntoIterator<Item = f64>) {
        self.data.get_mut(name).expect("declared block").extend(values);
    }
}
