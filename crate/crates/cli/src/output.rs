//! Atomic file output and the run summary.

use std::fs;
use std::io::Write;
use std::path::Path;

use conformable_core::{GridSpacing, StartRule};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::run::Outcome;

/// Create `dir` if needed and make sure a file can be placed in it.
pub fn prepare_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    let probe = dir.join(format!(".cfrac-probe-{}", std::process::id()));
    fs::write(&probe, b"").map_err(|e| format!("output directory {} is not writable: {e}", dir.display()))?;
    fs::remove_file(&probe).map_err(|e| format!("cannot clean up {}: {e}", probe.display()))
}

/// Write `bytes` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let name = path.file_name().ok_or_else(|| format!("{} has no file name", path.display()))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        format!("cannot write {}: {e}", path.display())
    })
}

/// Seed, grid and version: enough to regenerate every data file.
pub fn reproducibility(cfg: &ExperimentConfig) -> Value {
    let sim = &cfg.simulation;
    let start = match sim.start {
        StartRule::AtOrigin => json!({ "mode": "origin", "t0": sim.window.start() }),
        StartRule::Truncated { eps } => json!({ "mode": "truncated", "eps": eps, "t0": sim.start_time() }),
    };
    let spacing = match sim.spacing {
        GridSpacing::Isometric => "isometric",
        GridSpacing::Uniform => "uniform",
    };
    json!({
        "seed": sim.master_seed,
        "grid": {
            "a": sim.window.start(),
            "t_end": sim.window.end(),
            "n_steps": sim.n_steps,
            "spacing": spacing,
            "start": start,
        },
        "version": env!("CARGO_PKG_VERSION"),
        "package": env!("CARGO_PKG_NAME"),
    })
}

pub fn summary(cfg: &ExperimentConfig, command: &str, outcome: &Outcome) -> Value {
    let config = serde_json::to_value(cfg.to_table()).expect("TOML tables map onto JSON");
    json!({
        "experiment": command,
        "status": if outcome.passed() { "pass" } else { "fail" },
        "checks": outcome.checks,
        "warnings": outcome.warnings,
        "results": outcome.results,
        "files": outcome.files.iter().map(|(name, _)| name).collect::<Vec<_>>(),
        "reproducibility": reproducibility(cfg),
        "config": config,
        "sigma": cfg.sigma.describe(),
    })
}

pub fn write_outputs(cfg: &ExperimentConfig, command: &str, outcome: &Outcome) -> Result<(), String> {
    let dir = &cfg.output_dir;
    for (name, bytes) in &outcome.files {
        write_atomic(&dir.join(name), bytes)?;
    }
    write_atomic(&dir.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    let mut text = serde_json::to_string_pretty(&summary(cfg, command, outcome)).expect("summary serialises");
    text.push('\n');
    write_atomic(&dir.join("summary.json"), text.as_bytes())
}
