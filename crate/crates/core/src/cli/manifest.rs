use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::trainer::write_json;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Version of this build: the package version plus `git describe` output
/// when the source tree was a git checkout.
pub const VERSION: &str = env!("TABREDUCE_VERSION");

/// Record of one subcommand run. Written before any output and rewritten
/// with the outcome and timing when the command ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub version: String,
    pub command: String,
    /// Full command line; rerunning it reproduces the outputs.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_ms: u64,
    pub elapsed_secs: Option<f64>,
    /// `running`, `ok` or `failed: <message>`.
    pub status: String,
}

/// Where the manifest of a run writing `out` goes: inside `out` when it is
/// a directory-shaped output, next to it otherwise.
pub fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

pub(crate) struct Stage {
    path: PathBuf,
    manifest: RunManifest,
    start: Instant,
}

pub(crate) struct StagePlan<'a> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

impl Stage {
    pub fn begin(plan: StagePlan<'_>) -> Result<Stage, CliError> {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let stage = Stage {
            path: plan.manifest,
            manifest: RunManifest {
                format_version: MANIFEST_FORMAT_VERSION,
                version: VERSION.to_string(),
                command: plan.command.to_string(),
                argv: plan.argv.to_vec(),
                config: plan.config,
                seeds: plan.seeds,
                inputs: plan.inputs,
                outputs: plan.outputs,
                started_unix_ms,
                elapsed_secs: None,
                status: "running".into(),
            },
            start: Instant::now(),
        };
        stage.write()?;
        Ok(stage)
    }

    fn write(&self) -> Result<(), CliError> {
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_json(&self.path, &self.manifest)?;
        Ok(())
    }

    /// Run `work` and record its outcome.
    pub fn run<T>(mut self, work: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let result = work();
        self.manifest.elapsed_secs = Some(self.start.elapsed().as_secs_f64());
        self.manifest.status = match &result {
            Ok(_) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        };
        match (self.write(), result) {
            (_, Err(e)) => Err(e),
            (Err(e), Ok(_)) => Err(e),
            (Ok(()), Ok(v)) => Ok(v),
        }
    }
}
