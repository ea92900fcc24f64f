use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// One file of a run directory.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json(name: &str, value: &impl Serialize) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
        bytes.push(b'\n');
        Artifact {
            name: name.into(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        if self.detail.is_empty() {
            format!("{tag} {}", self.name)
        } else {
            format!("{tag} {}: {}", self.name, self.detail)
        }
    }
}

/// What a command produced, before anything is written.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Probe constants used by the run (Gronwall `C`, `β`, ...).
    pub constants: BTreeMap<String, f64>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

/// Plain number formatting: shortest round-trip, exponent form outside
/// `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// CSV with a header row; every row must have the header's width.
pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn csv_artifact(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Artifact {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    Artifact {
        name: name.into(),
        bytes: csv_bytes(&header, &rows),
    }
}

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_file: &'static str,
    config_sha256: String,
    rerun: String,
    status: &'static str,
    checks: &'a [Check],
    constants: &'a BTreeMap<String, f64>,
    files: Vec<FileEntry>,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Write the echoed config, every artifact and the manifest into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, outcome: &Outcome) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let echo = cfg.to_toml();
    std::fs::write(dir.join(CONFIG_FILE), &echo)?;
    let mut files = Vec::with_capacity(outcome.artifacts.len());
    for a in &outcome.artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
        files.push(FileEntry {
            name: a.name.clone(),
            sha256: hex::encode(Sha256::digest(&a.bytes)),
            bytes: a.bytes.len(),
        });
    }
    let manifest = Manifest {
        tool: "pgflow",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.to_string(),
        config_file: CONFIG_FILE,
        config_sha256: cfg.hash(),
        rerun: format!("pgflow {} --config {CONFIG_FILE}", cfg.command),
        status: if outcome.passed() { "PASS" } else { "FAIL" },
        checks: &outcome.checks,
        constants: &outcome.constants,
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(&path, bytes)?;
    Ok(path)
}
