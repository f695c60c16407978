//! Local session directory layout.
//!
//! ```text
//! <data_dir>/session-<started_at>[-n]/
//!     session.json    user, start time and the list of sources
//!     source-<i>.<protocol>   raw bytes exactly as received
//!     summary.json    the session summary
//!     batch.json      the upload body, written once and never modified
//!     receipt.json    the server's receipt, after a successful upload
//! ```

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use bodynet_core::Protocol;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use uuid::Uuid;

pub const MANIFEST: &str = "session.json";
pub const SUMMARY: &str = "summary.json";
pub const BATCH: &str = "batch.json";
pub const RECEIPT: &str = "receipt.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub protocol: Protocol,
    pub address: String,
    /// Raw stream file, relative to the session directory.
    pub raw_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub user_id: Uuid,
    pub started_at: i64,
    pub sources: Vec<SourceEntry>,
}

pub fn raw_file_name(index: usize, protocol: Protocol) -> String {
    format!("source-{index}.{protocol}")
}

/// Creates a fresh directory for a session starting at `started_at`.
pub fn create_session_dir(data_dir: &Path, started_at: i64) -> std::io::Result<PathBuf> {
    fs::create_dir_all(data_dir)?;
    for n in 1u32.. {
        let name = if n == 1 {
            format!("session-{started_at}")
        } else {
            format!("session-{started_at}-{n}")
        };
        let dir = data_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("u32 suffixes exhausted")
}

/// Writes JSON through a temporary file and a rename, so readers never see
/// a partial file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

/// Session directories under `data_dir` with a batch but no receipt, oldest
/// first.
pub fn pending_batches(data_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = match fs::read_dir(data_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e),
    };
    for entry in entries {
        let dir = entry?.path();
        if dir.join(BATCH).is_file() && !dir.join(RECEIPT).exists() {
            out.push(dir);
        }
    }
    out.sort();
    Ok(out)
}
