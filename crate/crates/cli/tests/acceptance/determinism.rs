//! Byte-identical outputs from repeated CLI runs with the same seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::common::Verdict;

/// Run-dependent files left out of the comparison.
const VOLATILE: [&str; 2] = ["runtime.json", "checkpoints"];

fn sulp(args: &[&str], config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_sulp"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .output()
        .map_err(|e| format!("cannot start sulp: {e}"))?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("sulp {} failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr).trim()))
    }
}

fn collect(root: &Path, dir: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).expect("output directory").flatten() {
        let path = entry.path();
        let name = entry.file_name();
        if VOLATILE.iter().any(|v| name == *v) {
            continue;
        }
        if path.is_dir() {
            collect(root, &path, into);
        } else {
            let rel = path.strip_prefix(root).expect("inside root").to_path_buf();
            into.insert(rel, std::fs::read(&path).expect("readable output"));
        }
    }
}

/// Names of files that differ between two output trees.
fn compare(a: &Path, b: &Path) -> (usize, Vec<String>) {
    let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
    collect(a, a, &mut fa);
    collect(b, b, &mut fb);
    let mut diff = Vec::new();
    for (k, v) in &fa {
        if fb.get(k) != Some(v) {
            diff.push(k.display().to_string());
        }
    }
    for k in fb.keys().filter(|k| !fa.contains_key(*k)) {
        diff.push(k.display().to_string());
    }
    (fa.len(), diff)
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("writable scratch directory");
}

fn scenario(root: &Path) -> Result<String, String> {
    let _ = std::fs::remove_dir_all(root);
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    let mut report = Vec::new();

    let sim_cfg = root.join("simulate.toml");
    write(&sim_cfg, "seed = 11\n\n[simulate]\ncalibration = \"ci\"\nalpha = 2.0\nt = 160\nmax_horizon = 6\n");
    for run in ["sim-a", "sim-b"] {
        sulp(&["simulate"], &sim_cfg, &root.join(run))?;
    }
    let (n, d) = compare(&root.join("sim-a"), &root.join("sim-b"));
    report.push(format!("simulate {n} files"));
    let mut diffs = d;

    let est_cfg = root.join("estimate.toml");
    write(
        &est_cfg,
        r#"seed = 5

[data]
path = "sim-a/data.csv"
time_column = "t"

[spec]
target = "y"
lags = 2
max_horizon = 6
shocks = [{ name = "shock", kind = "observed", column = "shock" }]

[sampler]
n_draws = 900
burn_in = 300
thin = 2
"#,
    );
    for run in ["est-a", "est-b"] {
        sulp(&["estimate"], &est_cfg, &root.join(run))?;
    }
    let (n, d) = compare(&root.join("est-a"), &root.join("est-b"));
    report.push(format!("estimate {n} files"));
    diffs.extend(d.into_iter().map(|f| format!("estimate/{f}")));

    let mc_cfg = root.join("montecarlo.toml");
    write(
        &mc_cfg,
        r#"seed = 3

[montecarlo]
n_reps = 3
calibration = "ci"
max_horizon = 4
lags = 2
c_grid = [0.9, 1.0]

[montecarlo.sampler]
n_draws = 600
burn_in = 200
thin = 2
store_controls = false
store_latent = false
"#,
    );
    // different thread counts must not change the results
    sulp(&["montecarlo", "--threads", "1"], &mc_cfg, &root.join("mc-a"))?;
    sulp(&["montecarlo", "--threads", "3"], &mc_cfg, &root.join("mc-b"))?;
    let (n, d) = compare(&root.join("mc-a"), &root.join("mc-b"));
    report.push(format!("montecarlo {n} files"));
    diffs.extend(d.into_iter().map(|f| format!("montecarlo/{f}")));

    if diffs.is_empty() {
        Ok(format!("identical reruns: {}", report.join(", ")))
    } else {
        Err(format!("differing files: {}", diffs.join(", ")))
    }
}

pub fn run() -> Verdict {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    match scenario(&root) {
        Ok(d) => Verdict::new(true, d),
        Err(e) => Verdict::new(false, e),
    }
}
