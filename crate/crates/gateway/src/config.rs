//! Gateway configuration.
//!
//! ```text
//! user_id=6f1c9d3e-0000-4000-8000-000000000001
//! data_dir=sessions
//! started_at=1700000000000        # optional, unix ms; default now
//! max_duration_s=3600             # optional wall-clock cap per session
//! upload.mode=manual              # or periodic
//! upload.period_s=60
//! upload.endpoint=http://127.0.0.1:8080
//! upload.token=secret
//! source.0.kind=file              # or tcp
//! source.0.address=hr.bin         # path, or host:port
//! source.0.protocol=hxm           # or shimmer
//! source.0.reconnect_max_attempts=5
//! source.0.reconnect_backoff_ms=500
//! ```
//!
//! Sources are numbered from 0 without gaps. Relative paths are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use bodynet_core::kv::{KvError, KvMap};
use bodynet_core::Protocol;
use thiserror::Error;
use uuid::Uuid;

/// Longest delay between reconnect attempts.
pub const MAX_RECONNECT_DELAY_MS: u64 = 30_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    File,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// File path or `host:port`.
    pub address: String,
    pub protocol: Protocol,
    pub reconnect_max_attempts: u32,
    pub reconnect_backoff_ms: u32,
}

impl SourceConfig {
    pub fn file(path: impl Into<String>, protocol: Protocol) -> Self {
        Self {
            kind: SourceKind::File,
            address: path.into(),
            protocol,
            reconnect_max_attempts: 3,
            reconnect_backoff_ms: 500,
        }
    }

    pub fn tcp(addr: impl Into<String>, protocol: Protocol) -> Self {
        Self { kind: SourceKind::Tcp, ..Self::file(addr, protocol) }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.reconnect_backoff_ms == 0 {
            return Err(invalid("reconnect_backoff_ms must be positive"));
        }
        if self.address.is_empty() {
            return Err(invalid("source address must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconnect {
    /// Wait this long, then try again.
    After(Duration),
    GiveUp,
}

/// Delay before reconnect `attempt` (1-based): the backoff doubled for each
/// earlier attempt, capped at 30 s. Past the configured maximum the answer
/// is [`Reconnect::GiveUp`].
pub fn reconnect(source: &SourceConfig, attempt: u32) -> Reconnect {
    if attempt == 0 || attempt > source.reconnect_max_attempts {
        return Reconnect::GiveUp;
    }
    let factor = 1u64.checked_shl(attempt - 1).unwrap_or(u64::MAX);
    let ms = (source.reconnect_backoff_ms as u64)
        .saturating_mul(factor)
        .min(MAX_RECONNECT_DELAY_MS);
    Reconnect::After(Duration::from_millis(ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UploadMode {
    /// Upload only when the user asks.
    Manual,
    /// Upload finished sessions every `period_s` while running, and at the
    /// end of each session.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadPolicy {
    pub mode: UploadMode,
    pub period_s: u32,
    /// Base URL of the ingestion service.
    pub endpoint: String,
    pub auth_token: String,
}

impl UploadPolicy {
    pub fn manual(endpoint: impl Into<String>, token: impl Into<String>) -> Self {
        Self { mode: UploadMode::Manual, period_s: 60, endpoint: endpoint.into(), auth_token: token.into() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mode == UploadMode::Periodic && self.period_s == 0 {
            return Err(invalid("upload.period_s must be positive in periodic mode"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub user_id: Uuid,
    pub data_dir: PathBuf,
    pub started_at: Option<i64>,
    pub max_duration: Option<Duration>,
    pub sources: Vec<SourceConfig>,
    pub policy: UploadPolicy,
}

impl GatewayConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let kv = KvMap::parse(text)?;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
        };
        let user_id = Uuid::parse_str(kv.require("user_id")?).map_err(|_| invalid("user_id must be a UUID"))?;
        let mode = match kv.get("upload.mode").unwrap_or("manual") {
            "manual" => UploadMode::Manual,
            "periodic" => UploadMode::Periodic,
            other => return Err(invalid(format!("upload.mode must be manual or periodic, not {other:?}"))),
        };
        let policy = UploadPolicy {
            mode,
            period_s: kv.parsed_or("upload.period_s", 60)?,
            endpoint: kv.get("upload.endpoint").unwrap_or("").to_string(),
            auth_token: kv.get("upload.token").unwrap_or("").to_string(),
        };
        policy.validate()?;

        let mut sources = Vec::new();
        for i in 0.. {
            let key = |k: &str| format!("source.{i}.{k}");
            let Some(kind) = kv.get(&key("kind")) else { break };
            let kind = match kind {
                "file" => SourceKind::File,
                "tcp" => SourceKind::Tcp,
                other => return Err(invalid(format!("source.{i}.kind must be file or tcp, not {other:?}"))),
            };
            let address = kv.require(&key("address"))?;
            let protocol: Protocol = kv.require(&key("protocol"))?.parse().map_err(ConfigError::Invalid)?;
            let s = SourceConfig {
                kind,
                address: match kind {
                    SourceKind::File => resolve(address).display().to_string(),
                    SourceKind::Tcp => address.to_string(),
                },
                protocol,
                reconnect_max_attempts: kv.parsed_or(&key("reconnect_max_attempts"), 3)?,
                reconnect_backoff_ms: kv.parsed_or(&key("reconnect_backoff_ms"), 500)?,
            };
            s.validate()?;
            sources.push(s);
        }
        if sources.is_empty() {
            return Err(invalid("at least one source.N.kind entry is required"));
        }
        Ok(Self {
            user_id,
            data_dir: resolve(kv.get("data_dir").unwrap_or("sessions")),
            started_at: kv.parsed("started_at")?,
            max_duration: kv.parsed::<f64>("max_duration_s")?.map(Duration::from_secs_f64),
            sources,
            policy,
        })
    }
}
