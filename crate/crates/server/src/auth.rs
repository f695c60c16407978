//! Static bearer-token table.
//!
//! The token file has one `token=user_id` entry per line, or `token=*` for
//! an administrator. Blank lines and `#` comments are ignored.

use std::collections::HashMap;

use bodynet_core::kv::{KvError, KvMap};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principal {
    Admin,
    User(Uuid),
}

impl Principal {
    /// True when this principal may act on behalf of `user`.
    pub fn acts_as(&self, user: Uuid) -> bool {
        match self {
            Principal::Admin => true,
            Principal::User(u) => *u == user,
        }
    }
}

#[derive(Debug, Error)]
pub enum TokenError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("token {token:?}: {value:?} is neither a UUID nor '*'")]
    BadPrincipal { token: String, value: String },
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    tokens: HashMap<String, Principal>,
}

impl TokenTable {
    pub fn parse(text: &str) -> Result<Self, TokenError> {
        let kv = KvMap::parse(text)?;
        let mut tokens = HashMap::new();
        for (token, value) in kv.iter() {
            let p = if value == "*" {
                Principal::Admin
            } else {
                Principal::User(Uuid::parse_str(value).map_err(|_| TokenError::BadPrincipal {
                    token: token.to_string(),
                    value: value.to_string(),
                })?)
            };
            tokens.insert(token.to_string(), p);
        }
        Ok(Self { tokens })
    }

    pub fn insert(&mut self, token: impl Into<String>, p: Principal) {
        self.tokens.insert(token.into(), p);
    }

    pub fn lookup(&self, token: &str) -> Option<Principal> {
        self.tokens.get(token).copied()
    }

    /// Resolves an `Authorization` header value.
    pub fn authenticate(&self, header: Option<&str>) -> Option<Principal> {
        let token = header?.strip_prefix("Bearer ")?.trim();
        self.lookup(token)
    }
}
