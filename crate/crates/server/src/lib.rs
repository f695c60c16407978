//! Workout ingestion service.
//!
//! [`store`] is the relational datastore (users, teams, memberships,
//! workouts and one sample table per sensor). [`api`] exposes it over the
//! `/v1` HTTP API with bearer-token authentication from [`auth`].
//!
//! ```
//! use bodynet_server::store::Store;
//! use bodynet_core::wire::{NewTeam, NewUser};
//! use uuid::Uuid;
//!
//! let store = Store::in_memory().unwrap();
//! let ada = Uuid::from_u128(1);
//! store.upsert_user(&NewUser { user_id: ada, display_name: "Ada".into(), external_ids: Default::default() }).unwrap();
//! let (team, _) = store.create_team(&NewTeam { team_id: None, name: "Harriers".into() }).unwrap();
//! assert!(store.join_team(team.team_id, ada).unwrap());
//! assert!(!store.join_team(team.team_id, ada).unwrap()); // already a member
//! ```

pub mod api;
pub mod auth;
pub mod config;
pub mod store;

use std::path::Path;

pub use api::{router, AppState, ServerHandle};
pub use auth::{Principal, TokenTable};
pub use config::ServerConfig;
pub use store::{Store, StoreError, TimeRange};

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("token table: {0}")]
    Tokens(#[from] auth::TokenError),
    #[error("datastore: {0}")]
    Store(#[from] StoreError),
}

/// Opens the datastore and token table named by `config`.
pub fn state_from_config(config: &ServerConfig) -> Result<AppState, StartError> {
    let tokens_text = std::fs::read_to_string(&config.tokens).map_err(|source| StartError::Io {
        path: config.tokens.display().to_string(),
        source,
    })?;
    let tokens = TokenTable::parse(&tokens_text)?;
    let store = match &config.database {
        Some(p) => open_store(p)?,
        None => Store::in_memory()?,
    };
    Ok(AppState::new(store, tokens, config.webhook_timeout))
}

fn open_store(path: &Path) -> Result<Store, StartError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| StartError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    Ok(Store::open(path)?)
}
