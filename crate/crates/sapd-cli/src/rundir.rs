//! Run directories: config, outputs and a manifest for re-running.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{usage, Status};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    cli_version: &'static str,
    library_version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config_sha256: &'a str,
    config: &'a serde_json::Value,
    threads: usize,
    started_unix_s: f64,
    wall_time_s: f64,
    status: &'static str,
    outputs: &'a [String],
}

/// SHA-256 of the compact JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(config)?)))
}

pub struct RunDir {
    path: PathBuf,
    command: &'static str,
    config: serde_json::Value,
    hash: String,
    started: SystemTime,
    clock: Instant,
    outputs: Vec<String>,
}

impl RunDir {
    /// Creates the directory (default `runs/<command>-<unix ms>`) and writes
    /// `config.json`. A directory that already holds a manifest is refused.
    pub fn create<T: Serialize>(out: Option<&Path>, command: &'static str, config: &T) -> Result<Self> {
        let started = SystemTime::now();
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let ms = started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
                PathBuf::from("runs").join(format!("{command}-{ms}"))
            }
        };
        if path.join("manifest.json").exists() {
            return Err(usage(format!("{} already holds a run; choose another --out", path.display())));
        }
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut dir = Self {
            path,
            command,
            config: serde_json::to_value(config)?,
            hash: config_hash(config)?,
            started,
            clock: Instant::now(),
            outputs: Vec::new(),
        };
        let cfg = dir.config.clone();
        dir.write_json("config.json", &cfg)?;
        Ok(dir)
    }

    /// Registers `name` as an output and returns its full path.
    pub fn output(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.path.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.outputs.push(name.to_string());
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.output(name)?;
        fs::write(&p, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.output(name)?;
        sapd::bench::write_csv(&p, rows).with_context(|| format!("writing {}", p.display()))
    }

    /// Writes `manifest.json` and reports the directory on stderr.
    pub fn finish(self, status: Status) -> Result<Status> {
        let manifest = Manifest {
            tool: "sapd",
            cli_version: env!("CARGO_PKG_VERSION"),
            library_version: sapd::VERSION,
            command: self.command,
            argv: std::env::args().collect(),
            config_sha256: &self.hash,
            config: &self.config,
            threads: rayon::current_num_threads(),
            started_unix_s: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_time_s: self.clock.elapsed().as_secs_f64(),
            status: status.name(),
            outputs: &self.outputs,
        };
        let p = self.path.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n")?;
        eprintln!("run directory: {}", self.path.display());
        Ok(status)
    }
}

/// File-name-safe form of a solver label.
pub fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}
