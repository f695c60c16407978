//! Sending persisted batches to the ingestion service.
//!
//! Uploads only ever read `batch.json` from a finished session directory;
//! they never touch live session state.

use std::path::{Path, PathBuf};
use std::time::Duration;

use bodynet_core::wire::{ApiError, WorkoutReceipt, WorkoutUpload};
use thiserror::Error;

use crate::config::UploadPolicy;
use crate::persist::{self, BATCH, RECEIPT};

#[derive(Debug, Error)]
pub enum UploadError {
    #[error("no upload endpoint configured")]
    NoEndpoint,
    #[error("cannot read {path}: {source}")]
    Local { path: PathBuf, source: std::io::Error },
    /// Network failure or server error; safe to retry.
    #[error("upload failed: {0}")]
    Failed(String),
    /// The server refused the batch; retrying the same batch will not help.
    #[error("rejected with status {status}: {message}")]
    Rejected { status: u16, message: String },
}

impl UploadError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, UploadError::Failed(_))
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .new_agent()
}

/// Posts one upload body. One request per call.
pub fn post_workout(body: &WorkoutUpload, policy: &UploadPolicy) -> Result<WorkoutReceipt, UploadError> {
    if policy.endpoint.is_empty() {
        return Err(UploadError::NoEndpoint);
    }
    let url = format!("{}/v1/workouts", policy.endpoint.trim_end_matches('/'));
    let resp = agent()
        .post(&url)
        .header("authorization", &format!("Bearer {}", policy.auth_token))
        .send_json(body)
        .map_err(|e| UploadError::Failed(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .into_body()
        .read_to_string()
        .map_err(|e| UploadError::Failed(e.to_string()))?;
    match status {
        200 | 201 => serde_json::from_str(&text).map_err(|e| UploadError::Failed(format!("bad receipt: {e}"))),
        400..=499 => {
            let message = serde_json::from_str::<ApiError>(&text).map_or(text, |e| e.error);
            Err(UploadError::Rejected { status, message })
        }
        _ => Err(UploadError::Failed(format!("server answered {status}"))),
    }
}

/// Uploads the batch stored in `session_dir` and records the receipt.
pub fn upload(session_dir: &Path, policy: &UploadPolicy) -> Result<WorkoutReceipt, UploadError> {
    let batch_path = session_dir.join(BATCH);
    let body: WorkoutUpload = persist::read_json(&batch_path)
        .map_err(|source| UploadError::Local { path: batch_path.clone(), source })?;
    let receipt = post_workout(&body, policy)?;
    let receipt_path = session_dir.join(RECEIPT);
    persist::write_json(&receipt_path, &receipt)
        .map_err(|source| UploadError::Local { path: receipt_path, source })?;
    Ok(receipt)
}

/// Uploads every batch under `data_dir` that has no receipt yet.
pub fn upload_pending(
    data_dir: &Path,
    policy: &UploadPolicy,
) -> std::io::Result<Vec<(PathBuf, Result<WorkoutReceipt, UploadError>)>> {
    Ok(persist::pending_batches(data_dir)?
        .into_iter()
        .map(|dir| {
            let r = upload(&dir, policy);
            (dir, r)
        })
        .collect())
}
