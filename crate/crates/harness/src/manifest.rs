//! Run manifests: what ran, how long it took, and digests of what it wrote.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::RunError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A pass/fail comparison of one measured quantity against a tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance`. NaN never passes.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, passed: value <= tolerance }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, passed: value >= tolerance }
    }

    /// Passes when `value < tolerance`.
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check { name: name.into(), value, tolerance, passed: value < tolerance }
    }
}

/// Writes `check,<value_column>,tolerance,passed`.
pub fn write_checks<W: Write>(mut w: W, value_column: &str, checks: &[Check]) -> std::io::Result<()> {
    writeln!(w, "check,{value_column},tolerance,passed")?;
    for c in checks {
        writeln!(w, "{},{:e},{:e},{}", c.name, c.value, c.tolerance, c.passed)?;
    }
    w.flush()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStatus {
    pub seed: String,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl OutputFile {
    pub fn digest(out_dir: &Path, path: &Path) -> Result<Self, RunError> {
        let bytes = fs::read(path).map_err(RunError::io(path))?;
        let relative = path.strip_prefix(out_dir).unwrap_or(path);
        Ok(OutputFile {
            path: relative.to_string_lossy().into_owned(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub config: ExperimentConfig,
    pub workers: usize,
    pub cap: usize,
    pub wall_time_seconds: f64,
    /// High-water mark of the resident set, when the platform reports it.
    pub peak_rss_bytes: Option<u64>,
    pub seeds: Vec<SeedStatus>,
    pub outputs: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub error: Option<String>,
    pub exit_code: i32,
}

impl RunManifest {
    /// Writes `manifest.json` through a temporary file and a rename, so a
    /// reader never sees a partial manifest.
    pub fn write_atomic(&self, out_dir: &Path) -> Result<PathBuf, RunError> {
        let target = out_dir.join(MANIFEST_FILE);
        let temp = out_dir.join(format!(".{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let mut file = fs::File::create(&temp).map_err(RunError::io(&temp))?;
        file.write_all(text.as_bytes()).map_err(RunError::io(&temp))?;
        file.write_all(b"\n").map_err(RunError::io(&temp))?;
        file.sync_all().map_err(RunError::io(&temp))?;
        fs::rename(&temp, &target).map_err(RunError::io(&target))?;
        Ok(target)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(RunError::io(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::config("manifest", e))
    }

    /// Output digests keyed by relative path.
    pub fn digests(&self) -> Vec<(&str, &str)> {
        self.outputs.iter().map(|o| (o.path.as_str(), o.sha256.as_str())).collect()
    }
}

/// Peak resident set size of this process, from `VmHWM` on Linux.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}
