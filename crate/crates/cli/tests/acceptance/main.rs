//! Acceptance suite: one line per criterion.
//!
//! Criteria 4 to 6 reproduce a published Monte Carlo study and are reported
//! without gating the exit status; every other criterion gates it.
//! `ACCEPTANCE_CRITERIA=2,9` runs a subset.

mod desk;
mod determinism;
mod geweke;
mod kernel;
mod oracles;
mod power;

use std::process::ExitCode;
use std::time::Instant;

use common::Verdict;

fn report(id: usize, name: &str, gating: bool, v: &Verdict, secs: f64) -> bool {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let note = if gating { "" } else { " (reported, not gating)" };
    println!("criterion {id:02} {name}: {tag}{note} - {} [{secs:.1}s]", v.detail);
    v.pass || !gating
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Criterion ids selected through the environment; all when unset.
fn selected() -> Option<Vec<usize>> {
    let raw = std::env::var("ACCEPTANCE_CRITERIA").ok()?;
    Some(raw.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return ExitCode::SUCCESS;
        }
    }

    let pick = selected();
    let wanted = |id: usize| pick.as_ref().map_or(true, |p| p.contains(&id));
    let mut ok = true;
    let gated: [(usize, &str, fn() -> Verdict); 3] = [
        (1, "AR(1) recovery", recovery::run),
        (2, "conditional-posterior oracles", oracles::run),
        (3, "joint-distribution (Geweke) test", geweke::run),
    ];
    for (id, name, f) in gated.into_iter().filter(|g| wanted(g.0)) {
        let (v, s) = timed(f);
        ok &= report(id, name, true, &v, s);
    }

    if (4..=6).any(wanted) {
        let (desk, s) = timed(desk::run);
        let names = ["desk coverage", "baseline direction", "bias ordering"];
        for (i, v) in desk.iter().enumerate() {
            report(4 + i, names[i], false, v, if i == 0 { s } else { 0.0 });
        }
    }

    let rest: [(usize, &str, fn() -> Verdict); 5] = [
        (7, "true IRF", irf::run),
        (8, "power-posterior reweighting", power::run),
        (9, "GP kernel", kernel::run),
        (10, "GIG sampler", gig::run),
        (11, "determinism", determinism::run),
    ];
    for (id, name, f) in rest.into_iter().filter(|g| wanted(g.0)) {
        let (v, s) = timed(f);
        ok &= report(id, name, true, &v, s);
    }

    if ok {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: gating criteria failed");
        ExitCode::FAILURE
    }
}
