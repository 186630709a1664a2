//! Run directory handling and exit-code classification.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::Config;

/// The run did its work but the agent never reached the success window.
#[derive(Debug)]
pub struct NotConverged(pub String);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not converged: {}", self.0)
    }
}

impl std::error::Error for NotConverged {}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_FAILURE: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_FAILURE
    }
}

/// Output directory of one run. Artifacts are never overwritten.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Fails if any of `names` already exists.
    pub fn claim(&self, names: &[String]) -> Result<()> {
        for n in names {
            if self.exists(n) {
                bail!(
                    "{} already exists; artifacts are not overwritten, choose another --out",
                    self.path(n).display()
                );
            }
        }
        Ok(())
    }

    /// Path of a prerequisite, or a diagnostic naming the step that makes it.
    pub fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            bail!("missing {} in {}: run `gg {producer}` first", name, self.root.display());
        }
        Ok(p)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text).with_context(|| format!("writing {name}"))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_text(name, &s)
    }

    pub fn csv_writer(&self, name: &str) -> Result<csv::Writer<fs::File>> {
        csv::Writer::from_path(self.path(name)).with_context(|| format!("creating {name}"))
    }

    /// Persists the effective config as `<command>.config.toml`.
    pub fn write_config(&self, command: &str, config: &Config) -> Result<()> {
        self.write_text(&format!("{command}.config.toml"), &config.to_toml()?)
    }

    /// Writes `<command>.manifest.json`, the only file carrying a timestamp.
    pub fn write_manifest(&self, command: &str, config: &Config, files: &[String], extra: serde_json::Value) -> Result<()> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = serde_json::json!({
            "command": command,
            "master_seed": config.master_seed,
            "created_unix": created,
            "files": files,
            "details": extra,
        });
        self.write_json(&format!("{command}.manifest.json"), &manifest)
    }
}

/// Output names of a command: its own files plus the config snapshot and
/// manifest.
pub fn outputs(command: &str, files: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = files.iter().map(|s| s.to_string()).collect();
    v.push(format!("{command}.config.toml"));
    v.push(format!("{command}.manifest.json"));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claim_refuses_existing_files() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::open(dir.path()).unwrap();
        run.claim(&["a.txt".into()]).unwrap();
        run.write_text("a.txt", "x").unwrap();
        assert!(run.claim(&["a.txt".into()]).is_err());
    }

    #[test]
    fn missing_prerequisite_names_the_producer() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::open(dir.path()).unwrap();
        let e = run.require("ae2.ggnn", "train --stage ae2").unwrap_err();
        assert!(e.to_string().contains("gg train --stage ae2"));
    }

    #[test]
    fn non_convergence_maps_to_its_own_code() {
        assert_eq!(exit_code(&anyhow::Error::new(NotConverged("x".into()))), EXIT_NOT_CONVERGED);
        assert_eq!(exit_code(&anyhow::anyhow!("boom")), EXIT_FAILURE);
    }
}
