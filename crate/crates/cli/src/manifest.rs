use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    InvariantViolation,
    Error,
}

/// Record of one invocation, written last so its presence marks a finished run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub code_version: String,
    pub master_seed: u64,
    /// Child seeds of every ensemble, keyed by ensemble label.
    pub child_seeds: BTreeMap<String, Vec<u64>>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub invariant_violations: Vec<String>,
    pub status: RunStatus,
    pub error: Option<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        write_atomic(dir, MANIFEST_NAME, json.as_bytes())
    }
}
