use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Assertion { name: name.to_string(), pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, T>(&mut self, row: I)
    where
        I: IntoIterator<Item = T>,
        T: ToString,
    {
        self.rows.push(row.into_iter().map(|v| v.to_string()).collect());
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub code_version: String,
    pub wall_time_s: f64,
    /// SHA-256 of the canonical config (output directory excluded).
    pub input_hash: String,
    /// SHA-256 of the serialized payload.
    pub payload_hash: String,
    pub assertions: Vec<Assertion>,
    pub payload: serde_json::Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub attachments: Vec<(String, Vec<u8>)>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn stem(&self) -> String {
        format!("{}-{}", self.config.experiment.name(), &self.input_hash[..16])
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn input_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out = None;
    let json = serde_json::to_vec(&c).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(sha256_hex(&json))
}

pub fn payload_hash(payload: &serde_json::Value) -> Result<String> {
    let json = serde_json::to_vec(payload).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(sha256_hex(&json))
}

/// Writes `<stem>.json`, one `<stem>-<table>.csv` per table and the binary
/// attachments; names depend only on the config, so reruns overwrite.
pub fn write_record(rec: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = rec.stem();
    let mut paths = Vec::new();
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, rec.to_json()?)?;
    paths.push(json_path);
    for t in &rec.tables {
        let p = dir.join(format!("{stem}-{}.csv", t.name));
        let mut w = csv::Writer::from_path(&p).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        w.write_record(&t.header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for r in &t.rows {
            w.write_record(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        paths.push(p);
    }
    for (suffix, bytes) in &rec.attachments {
        let p = dir.join(format!("{stem}-{suffix}"));
        std::fs::write(&p, bytes)?;
        paths.push(p);
    }
    Ok(paths)
}
