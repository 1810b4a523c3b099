//! On-disk layout of one experiment:
//!
//! ```text
//! <data_dir>/<id>/experiment.json   items and settings, written once
//! <data_dir>/<id>/votes.jsonl       append-only vote log, fsynced per vote
//! <data_dir>/<id>/snapshot.json     latest published estimate (a cache)
//! ```
//!
//! The vote log is the source of truth. A torn final line left by a crash
//! is cut off on open; it was never acknowledged.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::record::VoteRecord;

pub const META_FILE: &str = "experiment.json";
pub const LOG_FILE: &str = "votes.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Per-experiment settings fixed at creation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub quadrature_order: usize,
    pub staleness_secs: u64,
    pub free_voting: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMeta {
    pub id: String,
    pub items: Vec<String>,
    pub created: String,
    pub settings: ExperimentSettings,
}

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)?.sync_all()?;
    Ok(())
}

/// Writes `bytes` to `path` via a synced temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("file path has a parent");
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_dir(dir)
}

/// Creates the experiment directory, its metadata and an empty log.
pub fn create_experiment_dir(data_dir: &Path, meta: &ExperimentMeta) -> Result<PathBuf> {
    fs::create_dir_all(data_dir)?;
    let dir = data_dir.join(&meta.id);
    fs::create_dir(&dir)?;
    write_atomic(
        &dir.join(META_FILE),
        &serde_json::to_vec_pretty(meta).expect("meta serializes"),
    )?;
    File::create(dir.join(LOG_FILE))?.sync_all()?;
    sync_dir(&dir)?;
    sync_dir(data_dir)?;
    Ok(dir)
}

pub fn read_meta(dir: &Path) -> Result<ExperimentMeta> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt(format!("{}: {e}", dir.join(META_FILE).display())))
}

/// Append handle on `votes.jsonl`.
#[derive(Debug)]
pub struct VoteLog {
    file: File,
}

impl VoteLog {
    pub fn open(dir: &Path) -> Result<Self> {
        let file = OpenOptions::new().append(true).open(dir.join(LOG_FILE))?;
        Ok(Self { file })
    }

    /// Appends one line and waits for it to reach stable storage.
    pub fn append(&mut self, record: &VoteRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads every complete record of `votes.jsonl`, truncating a torn tail.
///
/// Only the final line may be incomplete or unparsable; damage anywhere
/// else is reported as corruption.
pub fn replay_log(dir: &Path) -> Result<Vec<VoteRecord>> {
    let path = dir.join(LOG_FILE);
    let bytes = fs::read(&path)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |k| k + 1);
    let mut records = Vec::new();
    let mut keep = complete;
    let lines: Vec<&[u8]> = bytes[..complete]
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .collect();
    let mut offset = 0usize;
    for (k, line) in lines.iter().enumerate() {
        match serde_json::from_slice::<VoteRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) if k + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), error = %e, "dropping unparsable final log line");
                keep = offset;
            }
            Err(e) => {
                return Err(ServiceError::Corrupt(format!("{} line {}: {e}", path.display(), k + 1)));
            }
        }
        offset += line.len() + 1;
    }
    if keep < bytes.len() {
        tracing::warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating torn vote log tail");
        let f = OpenOptions::new().write(true).open(&path)?;
        f.set_len(keep as u64)?;
        f.sync_all()?;
    }
    Ok(records)
}

/// Cached estimate; only used to warm-start the refit after a restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub fitted_votes: u64,
    pub scores: Vec<f64>,
}

pub fn write_snapshot(dir: &Path, snap: &Snapshot) -> Result<()> {
    write_atomic(
        &dir.join(SNAPSHOT_FILE),
        &serde_json::to_vec(snap).expect("snapshot serializes"),
    )
}

pub fn read_snapshot(dir: &Path) -> Option<Snapshot> {
    let text = fs::read_to_string(dir.join(SNAPSHOT_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}
