//! Run directories and manifests.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub version: String,
    pub git_commit: Option<String>,
    pub output_dir: PathBuf,
    pub started_unix_s: u64,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, seed: Option<u64>, output_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().collect(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_commit: git_commit(),
            output_dir: output_dir.to_path_buf(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(ber_core::Error::from)?;
        std::fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn git_commit() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "--short", "HEAD"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let s = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!s.is_empty()).then_some(s)
}

/// Creates the output directory of a run.
///
/// An explicit `--out` must be absent or empty. Without one, `runs/<name>`
/// is used, with a numeric suffix when that name is taken.
pub fn prepare_dir(explicit: Option<&Path>, default_name: &str) -> Result<PathBuf, CliError> {
    let dir = match explicit {
        Some(p) => {
            if p.exists() && std::fs::read_dir(p)?.next().is_some() {
                return Err(CliError::Config(format!(
                    "output directory {} is not empty; choose a fresh one",
                    p.display()
                )));
            }
            p.to_path_buf()
        }
        None => {
            let base = Path::new("runs").join(default_name);
            let mut dir = base.clone();
            let mut k = 2;
            while dir.exists() {
                dir = PathBuf::from(format!("{}-{k}", base.display()));
                k += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn stem(path: Option<&Path>, fallback: &str) -> String {
    path.and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_string())
}
