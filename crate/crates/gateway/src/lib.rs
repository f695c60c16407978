//! The base station.
//!
//! A gateway session reads every configured sensor stream on its own
//! thread, folds them into one [`Session`](bodynet_core::Session), keeps
//! the raw bytes on disk and uploads the finished workout only when the
//! [`UploadPolicy`] allows it. In manual mode nothing leaves the machine
//! until [`upload`] is called.
//!
//! ```no_run
//! use bodynet_core::Protocol;
//! use bodynet_gateway::{run_session, upload, SessionOptions, SourceConfig, UploadPolicy};
//! use uuid::Uuid;
//!
//! let sources = [SourceConfig::file("hr.bin", Protocol::Hxm)];
//! let policy = UploadPolicy::manual("http://127.0.0.1:8080", "token");
//! let report = run_session(&sources, &policy, Uuid::nil(), &SessionOptions::new("sessions")).unwrap();
//! println!("{:?}", report.summary.avg_hr_bpm);
//! // later, when the user agrees:
//! upload(&report.session_dir, &policy).unwrap();
//! ```

pub mod config;
pub mod persist;
pub mod run;
mod source;
pub mod upload;

pub use bodynet_core::status::format_status;
pub use config::{reconnect, GatewayConfig, Reconnect, SourceConfig, SourceKind, UploadMode, UploadPolicy};
pub use run::{
    recover_session, replay_session, run_from_config, run_session, GatewayError, SessionOptions,
    SessionReport, SourceReport,
};
pub use upload::{post_workout, upload, upload_pending, UploadError};
