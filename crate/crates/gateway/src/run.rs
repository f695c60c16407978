//! Running a session: concurrent readers, a single aggregator, local
//! persistence, then upload according to policy.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use bodynet_core::metrics::SessionSummary;
use bodynet_core::wire::{workout_id, WorkoutReceipt, WorkoutUpload};
use bodynet_core::{Protocol, Session};
use thiserror::Error;
use uuid::Uuid;

use crate::config::{GatewayConfig, SourceConfig, UploadMode, UploadPolicy};
use crate::persist::{self, Manifest, SourceEntry, BATCH, MANIFEST, SUMMARY};
use crate::source::{spawn_reader, Event};
use crate::upload::{upload, upload_pending, UploadError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("a session needs at least one source")]
    NoSources,
    #[error("more than one {0} source; a session takes one stream per protocol")]
    DuplicateProtocol(Protocol),
    #[error("source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GatewayError + '_ {
    move |source| GatewayError::Io { path: path.to_path_buf(), source }
}

/// Where and when a session runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub data_dir: PathBuf,
    /// Unix ms; the current time when absent.
    pub started_at: Option<i64>,
    /// Readers stop after this much wall time.
    pub max_duration: Option<Duration>,
}

impl SessionOptions {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), started_at: None, max_duration: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceReport {
    pub bytes: u64,
    pub connects: u32,
    pub disconnects: u32,
    /// Set when the source could never be reached.
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct SessionReport {
    pub summary: SessionSummary,
    pub session_dir: PathBuf,
    pub workout_id: Uuid,
    pub sources: Vec<SourceReport>,
    /// Outcome of the upload of this session, when the policy called for one.
    pub upload: Option<Result<WorkoutReceipt, UploadError>>,
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

struct PeriodicUploader {
    stop: mpsc::Sender<()>,
    thread: JoinHandle<()>,
}

impl PeriodicUploader {
    fn start(data_dir: PathBuf, policy: UploadPolicy) -> Self {
        let (stop, rx) = mpsc::channel::<()>();
        let period = Duration::from_secs(policy.period_s.max(1) as u64);
        let thread = std::thread::spawn(move || {
            while let Err(RecvTimeoutError::Timeout) = rx.recv_timeout(period) {
                // Failures stay pending and are retried next period.
                let _ = upload_pending(&data_dir, &policy);
            }
        });
        Self { stop, thread }
    }

    fn finish(self) {
        let _ = self.stop.send(());
        let _ = self.thread.join();
    }
}

/// Reads every source concurrently into one session for `user_id`.
///
/// Raw bytes are appended to the session directory before they reach the
/// aggregator, so everything received survives an interrupted upload. In
/// manual mode nothing is sent anywhere; call [`upload`] (or
/// [`upload_pending`]) when the user asks. In periodic mode pending batches
/// are flushed every period and this session is uploaded when it ends.
pub fn run_session(
    sources: &[SourceConfig],
    policy: &UploadPolicy,
    user_id: Uuid,
    options: &SessionOptions,
) -> Result<SessionReport, GatewayError> {
    if sources.is_empty() {
        return Err(GatewayError::NoSources);
    }
    let mut session = Session::new();
    for s in sources {
        session
            .add_stream(s.protocol)
            .map_err(|d| GatewayError::DuplicateProtocol(d.0))?;
    }

    let started_at = options.started_at.unwrap_or_else(now_ms);
    let dir = persist::create_session_dir(&options.data_dir, started_at).map_err(io_err(&options.data_dir))?;
    let manifest = Manifest {
        user_id,
        started_at,
        sources: sources
            .iter()
            .enumerate()
            .map(|(i, s)| SourceEntry {
                protocol: s.protocol,
                address: s.address.clone(),
                raw_file: persist::raw_file_name(i, s.protocol),
            })
            .collect(),
    };
    let manifest_path = dir.join(MANIFEST);
    persist::write_json(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;
    let mut raw: Vec<(PathBuf, File)> = Vec::with_capacity(sources.len());
    for entry in &manifest.sources {
        let path = dir.join(&entry.raw_file);
        let f = OpenOptions::new().create_new(true).append(true).open(&path).map_err(io_err(&path))?;
        raw.push((path, f));
    }

    let periodic = (policy.mode == UploadMode::Periodic)
        .then(|| PeriodicUploader::start(options.data_dir.clone(), policy.clone()));

    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    let mut readers = Vec::with_capacity(sources.len());
    for (i, s) in sources.iter().enumerate() {
        let h = spawn_reader(i, s.clone(), tx.clone(), stop.clone()).map_err(io_err(&dir))?;
        readers.push(h);
    }
    drop(tx);

    let mut reports = vec![SourceReport::default(); sources.len()];
    let mut live = sources.len();
    let t0 = Instant::now();
    let mut failure = None;
    while live > 0 {
        match rx.recv_timeout(Duration::from_millis(100)) {
            Ok(Event::Data(i, bytes)) => {
                let (path, file) = &mut raw[i];
                if let Err(e) = file.write_all(&bytes) {
                    failure.get_or_insert(GatewayError::Io { path: path.clone(), source: e });
                    stop.store(true, Ordering::Relaxed);
                    continue;
                }
                reports[i].bytes += bytes.len() as u64;
                session.push(sources[i].protocol, &bytes);
            }
            Ok(Event::Connected(i)) => reports[i].connects += 1,
            Ok(Event::Disconnected(i)) => reports[i].disconnects += 1,
            Ok(Event::Finished { source, error }) => {
                reports[source].error = error;
                live -= 1;
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if options.max_duration.is_some_and(|m| t0.elapsed() >= m) {
            stop.store(true, Ordering::Relaxed);
        }
    }
    for h in readers {
        let _ = h.join();
    }
    for (path, f) in &raw {
        f.sync_all().map_err(io_err(path))?;
    }
    if let Some(e) = failure {
        if let Some(p) = periodic {
            p.finish();
        }
        return Err(e);
    }
    if reports.iter().all(|r| r.error.is_some()) {
        if let Some(p) = periodic {
            p.finish();
        }
        let msg = reports.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>().join("; ");
        return Err(GatewayError::SourceUnreachable(msg));
    }

    let (summary, batch) = finalize(&dir, &manifest, &session)?;

    let upload = match periodic {
        Some(p) => {
            p.finish();
            Some(upload(&dir, policy))
        }
        None => None,
    };
    Ok(SessionReport { summary, session_dir: dir, workout_id: batch.workout_id, sources: reports, upload })
}

/// Runs a session described by a config file.
pub fn run_from_config(config: &GatewayConfig) -> Result<SessionReport, GatewayError> {
    let options = SessionOptions {
        data_dir: config.data_dir.clone(),
        started_at: config.started_at,
        max_duration: config.max_duration,
    };
    run_session(&config.sources, &config.policy, config.user_id, &options)
}

fn read_raw(dir: &Path, manifest: &Manifest) -> Result<Vec<Vec<u8>>, GatewayError> {
    manifest
        .sources
        .iter()
        .map(|s| {
            let p = dir.join(&s.raw_file);
            fs::read(&p).map_err(io_err(&p))
        })
        .collect()
}

/// Writes `summary.json` and the immutable `batch.json`.
fn finalize(dir: &Path, manifest: &Manifest, session: &Session) -> Result<(SessionSummary, WorkoutUpload), GatewayError> {
    let raw = read_raw(dir, manifest)?;
    let streams: Vec<&[u8]> = raw.iter().map(Vec::as_slice).collect();
    let summary = session.summary();
    let batch = WorkoutUpload {
        user_id: manifest.user_id,
        workout_id: workout_id(manifest.user_id, &streams),
        started_at: manifest.started_at,
        duration_s: summary.duration_s,
        summary: summary.clone(),
        samples: session.samples(),
    };
    let p = dir.join(SUMMARY);
    persist::write_json(&p, &summary).map_err(io_err(&p))?;
    let p = dir.join(BATCH);
    persist::write_json(&p, &batch).map_err(io_err(&p))?;
    Ok((summary, batch))
}

/// Rebuilds the summary of a persisted session from its raw streams alone.
pub fn replay_session(session_dir: &Path) -> Result<SessionSummary, GatewayError> {
    Ok(replay(session_dir)?.summary())
}

fn replay(session_dir: &Path) -> Result<Session, GatewayError> {
    let p = session_dir.join(MANIFEST);
    let manifest: Manifest = persist::read_json(&p).map_err(io_err(&p))?;
    let raw = read_raw(session_dir, &manifest)?;
    let mut session = Session::new();
    for (entry, bytes) in manifest.sources.iter().zip(&raw) {
        session
            .add_stream(entry.protocol)
            .map_err(|d| GatewayError::DuplicateProtocol(d.0))?;
        session.push(entry.protocol, bytes);
    }
    Ok(session)
}

/// Rebuilds `summary.json` and `batch.json` for a session whose run was cut
/// short before they were written. Existing batches are left alone.
pub fn recover_session(session_dir: &Path) -> Result<Option<WorkoutUpload>, GatewayError> {
    if session_dir.join(BATCH).exists() {
        return Ok(None);
    }
    let p = session_dir.join(MANIFEST);
    let manifest: Manifest = persist::read_json(&p).map_err(io_err(&p))?;
    let session = replay(session_dir)?;
    Ok(Some(finalize(session_dir, &manifest, &session)?.1))
}
