//! Config-driven experiment runner for `postsel-core`.

pub mod config;
pub mod experiments;
pub mod manifest;

use std::path::Path;
use std::time::Instant;

use config::ExperimentConfig;
use experiments::RunError;
use manifest::{RunManifest, RunStatus};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_INVARIANT: u8 = 2;
pub const EXIT_CAPACITY: u8 = 3;

pub fn exit_code(e: &RunError) -> u8 {
    use postsel_core::Error::*;
    match e {
        RunError::Io(_) => EXIT_CONFIG,
        RunError::Core(Capacity(_)) => EXIT_CAPACITY,
        RunError::Core(Range { .. } | Dimension { .. } | InvalidInterval { .. } | Contract(_)) => {
            EXIT_CONFIG
        }
        RunError::Core(_) => EXIT_INVARIANT,
    }
}

/// Runs the experiment into `dir` and writes the manifest, also on failure.
pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> (RunManifest, u8) {
    let start = Instant::now();
    let result = experiments::run(cfg, dir);
    let (report, status, error, code) = match result {
        Ok(r) if r.violations.is_empty() => (r, RunStatus::Ok, None, EXIT_OK),
        Ok(r) => (r, RunStatus::InvariantViolation, None, EXIT_INVARIANT),
        Err(e) => (
            Default::default(),
            RunStatus::Error,
            Some(e.to_string()),
            exit_code(&e),
        ),
    };
    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        config: cfg.echo_map(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.run.master_seed,
        child_seeds: report.child_seeds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: report.outputs,
        invariant_violations: report.violations,
        status,
        error,
    };
    if let Err(e) = manifest.write(dir) {
        log::error!("cannot write manifest to {}: {e}", dir.display());
        return (manifest, EXIT_CONFIG);
    }
    (manifest, code)
}
