//! `serve` configuration file.
//!
//! ```text
//! listen=127.0.0.1:8080
//! database=bodynet.sqlite
//! tokens=tokens.txt
//! webhook_timeout_ms=5000
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! `database=:memory:` keeps everything in memory.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bodynet_core::kv::{KvError, KvMap};

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub database: Option<PathBuf>,
    pub tokens: PathBuf,
    pub webhook_timeout: Duration,
}

impl ServerConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, KvError> {
        let kv = KvMap::parse(text)?;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
        };
        let database = match kv.require("database")? {
            ":memory:" => None,
            p => Some(resolve(p)),
        };
        Ok(Self {
            listen: kv.parsed_or("listen", SocketAddr::from(([127, 0, 0, 1], 8080)))?,
            database,
            tokens: resolve(kv.require("tokens")?),
            webhook_timeout: Duration::from_millis(kv.parsed_or("webhook_timeout_ms", 5000u64)?),
        })
    }
}
