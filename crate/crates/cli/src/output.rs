//! Writing tables and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::CampaignConfig;
use crate::scenarios::{OutageCount, ScenarioOutput};

/// Bumped whenever a CSV column or manifest field changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub rows: usize,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub scenario: String,
    pub seed: u64,
    pub config: Map<String, Value>,
    pub data_source: Option<&'static str>,
    pub files: Vec<FileEntry>,
    /// SHA-256 over the file hashes in listed order.
    pub content_hash: String,
    pub outage: OutageCount,
    pub workers: usize,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest(cfg: &CampaignConfig, out: &ScenarioOutput, wall_time_s: f64) -> Manifest {
    let files: Vec<FileEntry> = out
        .tables
        .iter()
        .map(|t| FileEntry {
            name: t.name.clone(),
            sha256: sha256_hex(&t.bytes),
            rows: t.rows,
            columns: t.columns.clone(),
        })
        .collect();
    let mut h = Sha256::new();
    for f in &files {
        h.update(f.sha256.as_bytes());
    }
    Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        scenario: out.scenario.to_string(),
        seed: cfg.campaign.seed,
        config: cfg.to_flat(),
        data_source: out.data_source,
        files,
        content_hash: hex::encode(h.finalize()),
        outage: out.outage,
        workers: rayon::current_num_threads(),
        wall_time_s,
    }
}

/// Writes every table plus `<scenario>_manifest.json` into `dir`; returns the paths written.
pub fn write_outputs(dir: &Path, manifest: &Manifest, out: &ScenarioOutput) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &out.tables {
        let p = dir.join(&t.name);
        std::fs::write(&p, &t.bytes)?;
        written.push(p);
    }
    let p = dir.join(format!("{}_manifest.json", out.scenario));
    let json = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(&p, json + "\n")?;
    written.push(p);
    Ok(written)
}
