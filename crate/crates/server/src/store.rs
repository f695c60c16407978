//! Relational workout store on SQLite.
//!
//! Tables: `users`, `teams`, `users_to_teams`, `workouts`, one sample table
//! per sensor (`hr_samples`, `distance_samples`, `strides_samples`,
//! `emg_samples`) and `shares`. Sample rows carry a per-workout `seq` so a
//! workout's samples read back in exactly the order they were uploaded.
//!
//! All access goes through one connection behind a mutex, so writes are
//! serialised and readers only ever see committed transactions.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use bodynet_core::wire::{
    LeaderboardMetric, LeaderboardRow, NewTeam, NewUser, SampleRecord, SensorKind, TeamCreated,
    WorkoutRecord,
};
use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("team name {0:?} is already taken")]
    DuplicateTeamName(String),
    #[error("team name must not be empty")]
    EmptyTeamName,
    #[error("unknown user {0}")]
    UnknownUser(Uuid),
    #[error("unknown team {0}")]
    UnknownTeam(Uuid),
    #[error("unknown workout {0}")]
    UnknownWorkout(Uuid),
    #[error("malformed samples: {0}")]
    MalformedSamples(String),
    #[error("invalid workout: {0}")]
    InvalidWorkout(String),
    #[error("invalid range: from {from} is after to {to}")]
    InvalidRange { from: i64, to: i64 },
    #[error("dump line {line}: {msg}")]
    Import { line: usize, msg: String },
    #[error(transparent)]
    Sql(#[from] rusqlite::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

const SCHEMA: &str = "
PRAGMA foreign_keys = ON;
CREATE TABLE IF NOT EXISTS users (
    user_id      TEXT PRIMARY KEY,
    display_name TEXT NOT NULL,
    external_ids TEXT NOT NULL DEFAULT '{}'
);
CREATE TABLE IF NOT EXISTS teams (
    team_id TEXT PRIMARY KEY,
    name    TEXT NOT NULL UNIQUE CHECK (length(name) > 0)
);
CREATE TABLE IF NOT EXISTS users_to_teams (
    user_id   TEXT NOT NULL REFERENCES users(user_id),
    team_id   TEXT NOT NULL REFERENCES teams(team_id),
    joined_at INTEGER NOT NULL,
    PRIMARY KEY (user_id, team_id)
);
CREATE TABLE IF NOT EXISTS workouts (
    workout_id       TEXT PRIMARY KEY,
    user_id          TEXT NOT NULL REFERENCES users(user_id),
    started_at       INTEGER NOT NULL,
    duration_s       REAL NOT NULL CHECK (duration_s >= 0),
    summary          TEXT NOT NULL,
    summary_mismatch INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS workouts_by_user ON workouts(user_id, started_at);
CREATE TABLE IF NOT EXISTS hr_samples (
    workout_id TEXT NOT NULL REFERENCES workouts(workout_id),
    seq INTEGER NOT NULL, offset_ms INTEGER NOT NULL, value REAL NOT NULL,
    PRIMARY KEY (workout_id, seq)
);
CREATE TABLE IF NOT EXISTS distance_samples (
    workout_id TEXT NOT NULL REFERENCES workouts(workout_id),
    seq INTEGER NOT NULL, offset_ms INTEGER NOT NULL, value REAL NOT NULL,
    PRIMARY KEY (workout_id, seq)
);
CREATE TABLE IF NOT EXISTS strides_samples (
    workout_id TEXT NOT NULL REFERENCES workouts(workout_id),
    seq INTEGER NOT NULL, offset_ms INTEGER NOT NULL, value REAL NOT NULL,
    PRIMARY KEY (workout_id, seq)
);
CREATE TABLE IF NOT EXISTS emg_samples (
    workout_id TEXT NOT NULL REFERENCES workouts(workout_id),
    seq INTEGER NOT NULL, offset_ms INTEGER NOT NULL, value REAL NOT NULL,
    PRIMARY KEY (workout_id, seq)
);
CREATE TABLE IF NOT EXISTS shares (
    share_key  TEXT PRIMARY KEY,
    workout_id TEXT NOT NULL REFERENCES workouts(workout_id),
    target     TEXT NOT NULL,
    text       TEXT NOT NULL,
    delivered  INTEGER NOT NULL,
    status     INTEGER,
    error      TEXT,
    attempts   INTEGER NOT NULL
);
";

fn sample_table(kind: SensorKind) -> &'static str {
    match kind {
        SensorKind::Hr => "hr_samples",
        SensorKind::Distance => "distance_samples",
        SensorKind::Strides => "strides_samples",
        SensorKind::Emg => "emg_samples",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: Uuid,
    pub display_name: String,
    pub external_ids: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub user_id: Uuid,
    pub team_id: Uuid,
    pub joined_at: i64,
}

/// Half-open `[from, to)` interval of workout start times, unix ms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeRange {
    pub from: Option<i64>,
    pub to: Option<i64>,
}

impl TimeRange {
    pub const ALL: TimeRange = TimeRange { from: None, to: None };

    pub fn new(from: Option<i64>, to: Option<i64>) -> Result<Self> {
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(StoreError::InvalidRange { from: f, to: t });
            }
        }
        Ok(Self { from, to })
    }

    pub fn contains(&self, t: i64) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t < e)
    }

    fn bounds(&self) -> (i64, i64) {
        (self.from.unwrap_or(i64::MIN), self.to.unwrap_or(i64::MAX))
    }
}

/// Outcome of a share, as recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareRecord {
    pub share_key: String,
    pub workout_id: Uuid,
    pub target: String,
    pub text: String,
    pub delivered: bool,
    pub status: Option<u16>,
    pub error: Option<String>,
    pub attempts: u32,
}

/// Row counts per table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TableCounts {
    pub users: u64,
    pub teams: u64,
    pub memberships: u64,
    pub workouts: u64,
    pub samples: u64,
    pub shares: u64,
}

/// One line of a dump. Lines appear in this variant order: users, teams,
/// memberships, workouts, samples, shares; within a table by primary key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum DumpLine {
    User(User),
    Team(TeamCreated),
    Membership(Membership),
    Workout(Box<WorkoutRecord>),
    Sample(DumpSample),
    Share(ShareRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpSample {
    pub workout_id: Uuid,
    pub seq: u64,
    pub sensor: SensorKind,
    pub offset_ms: u64,
    pub value: f64,
}

pub struct Store {
    conn: Mutex<Connection>,
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

fn uuid_col(row: &rusqlite::Row<'_>, idx: usize) -> rusqlite::Result<Uuid> {
    let s: String = row.get(idx)?;
    Uuid::parse_str(&s).map_err(|e| {
        rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, Box::new(e))
    })
}

fn json_col<T: serde::de::DeserializeOwned>(row: &rusqlite::Row<'_>, idx: usize) -> rusqlite::Result<T> {
    let s: String = row.get(idx)?;
    serde_json::from_str(&s).map_err(|e| {
        rusqlite::Error::FromSqlConversionFailure(idx, rusqlite::types::Type::Text, Box::new(e))
    })
}

fn workout_from_row(row: &rusqlite::Row<'_>) -> rusqlite::Result<WorkoutRecord> {
    Ok(WorkoutRecord {
        workout_id: uuid_col(row, 0)?,
        user_id: uuid_col(row, 1)?,
        started_at: row.get(2)?,
        duration_s: row.get(3)?,
        summary: json_col(row, 4)?,
        summary_mismatch: row.get(5)?,
    })
}

const WORKOUT_COLS: &str =
    "workout_id, user_id, started_at, duration_s, summary, summary_mismatch";

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn: Mutex::new(conn) })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        // A panic while holding the lock cannot leave a transaction open:
        // rusqlite rolls back on drop.
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Inserts or updates a user. Returns `true` when the user is new.
    pub fn upsert_user(&self, u: &NewUser) -> Result<bool> {
        let ext = serde_json::to_string(&u.external_ids).expect("string map");
        let conn = self.conn();
        let existed = user_exists(&conn, u.user_id)?;
        conn.execute(
            "INSERT INTO users (user_id, display_name, external_ids) VALUES (?1, ?2, ?3)
             ON CONFLICT(user_id) DO UPDATE SET display_name = ?2, external_ids = ?3",
            params![u.user_id.to_string(), u.display_name, ext],
        )?;
        Ok(!existed)
    }

    pub fn user(&self, id: Uuid) -> Result<Option<User>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT user_id, display_name, external_ids FROM users WHERE user_id = ?1",
                [id.to_string()],
                |r| {
                    Ok(User {
                        user_id: uuid_col(r, 0)?,
                        display_name: r.get(1)?,
                        external_ids: json_col(r, 2)?,
                    })
                },
            )
            .optional()?)
    }

    /// Creates a team. A repeated request with the same `team_id` and name
    /// returns the existing team with `false`.
    pub fn create_team(&self, t: &NewTeam) -> Result<(TeamCreated, bool)> {
        if t.name.trim().is_empty() {
            return Err(StoreError::EmptyTeamName);
        }
        let conn = self.conn();
        let existing: Option<(String, String)> = conn
            .query_row("SELECT team_id, name FROM teams WHERE name = ?1", [&t.name], |r| {
                Ok((r.get(0)?, r.get(1)?))
            })
            .optional()?;
        if let Some((id, name)) = existing {
            let id = Uuid::parse_str(&id).expect("stored uuid");
            return match t.team_id {
                Some(req) if req == id => Ok((TeamCreated { team_id: id, name }, false)),
                _ => Err(StoreError::DuplicateTeamName(t.name.clone())),
            };
        }
        let team_id = t.team_id.unwrap_or_else(Uuid::new_v4);
        conn.execute(
            "INSERT INTO teams (team_id, name) VALUES (?1, ?2)",
            params![team_id.to_string(), t.name],
        )?;
        Ok((TeamCreated { team_id, name: t.name.clone() }, true))
    }

    pub fn team(&self, id: Uuid) -> Result<Option<TeamCreated>> {
        Ok(self
            .conn()
            .query_row("SELECT team_id, name FROM teams WHERE team_id = ?1", [id.to_string()], |r| {
                Ok(TeamCreated { team_id: uuid_col(r, 0)?, name: r.get(1)? })
            })
            .optional()?)
    }

    /// Adds `user` to `team`. Joining again is a successful no-op that
    /// returns `false`.
    pub fn join_team(&self, team: Uuid, user: Uuid) -> Result<bool> {
        let conn = self.conn();
        if !team_exists(&conn, team)? {
            return Err(StoreError::UnknownTeam(team));
        }
        if !user_exists(&conn, user)? {
            return Err(StoreError::UnknownUser(user));
        }
        let n = conn.execute(
            "INSERT OR IGNORE INTO users_to_teams (user_id, team_id, joined_at) VALUES (?1, ?2, ?3)",
            params![user.to_string(), team.to_string(), now_ms()],
        )?;
        Ok(n == 1)
    }

    pub fn team_members(&self, team: Uuid) -> Result<Vec<User>> {
        let conn = self.conn();
        if !team_exists(&conn, team)? {
            return Err(StoreError::UnknownTeam(team));
        }
        let mut stmt = conn.prepare(
            "SELECT u.user_id, u.display_name, u.external_ids FROM users u
             JOIN users_to_teams m ON m.user_id = u.user_id
             WHERE m.team_id = ?1 ORDER BY u.user_id",
        )?;
        let rows = stmt.query_map([team.to_string()], |r| {
            Ok(User {
                user_id: uuid_col(r, 0)?,
                display_name: r.get(1)?,
                external_ids: json_col(r, 2)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn is_member(&self, team: Uuid, user: Uuid) -> Result<bool> {
        Ok(self
            .conn()
            .query_row(
                "SELECT 1 FROM users_to_teams WHERE team_id = ?1 AND user_id = ?2",
                [team.to_string(), user.to_string()],
                |_| Ok(()),
            )
            .optional()?
            .is_some())
    }

    /// True when the two users are the same or share at least one team.
    pub fn share_team(&self, a: Uuid, b: Uuid) -> Result<bool> {
        if a == b {
            return Ok(true);
        }
        Ok(self
            .conn()
            .query_row(
                "SELECT 1 FROM users_to_teams x JOIN users_to_teams y ON x.team_id = y.team_id
                 WHERE x.user_id = ?1 AND y.user_id = ?2 LIMIT 1",
                [a.to_string(), b.to_string()],
                |_| Ok(()),
            )
            .optional()?
            .is_some())
    }

    /// Stores a workout and its samples in one transaction. Returns the id
    /// and whether a new row was written; a workout id that is already
    /// stored is left untouched.
    pub fn insert_workout(&self, w: &WorkoutRecord, samples: &[SampleRecord]) -> Result<(Uuid, bool)> {
        if !(w.duration_s >= 0.0 && w.duration_s.is_finite()) {
            return Err(StoreError::InvalidWorkout("duration_s must be a non-negative number".into()));
        }
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        if !user_exists(&tx, w.user_id)? {
            return Err(StoreError::UnknownUser(w.user_id));
        }
        let n = tx.execute(
            &format!("INSERT OR IGNORE INTO workouts ({WORKOUT_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6)"),
            params![
                w.workout_id.to_string(),
                w.user_id.to_string(),
                w.started_at,
                w.duration_s,
                serde_json::to_string(&w.summary).expect("summary serialises"),
                w.summary_mismatch,
            ],
        )?;
        if n == 0 {
            return Ok((w.workout_id, false));
        }
        // Rows are checked as they are written; an error here drops the
        // transaction and with it the workout row above.
        insert_samples(&tx, w.workout_id, samples)?;
        tx.commit()?;
        Ok((w.workout_id, true))
    }

    pub fn workout(&self, id: Uuid) -> Result<Option<WorkoutRecord>> {
        Ok(self
            .conn()
            .query_row(
                &format!("SELECT {WORKOUT_COLS} FROM workouts WHERE workout_id = ?1"),
                [id.to_string()],
                workout_from_row,
            )
            .optional()?)
    }

    /// A workout's samples in upload order.
    pub fn samples(&self, workout: Uuid) -> Result<Vec<SampleRecord>> {
        let conn = self.conn();
        if !workout_exists(&conn, workout)? {
            return Err(StoreError::UnknownWorkout(workout));
        }
        let mut rows: Vec<(u64, SampleRecord)> = Vec::new();
        for kind in SensorKind::ALL {
            let mut stmt = conn.prepare_cached(&format!(
                "SELECT seq, offset_ms, value FROM {} WHERE workout_id = ?1",
                sample_table(kind)
            ))?;
            let it = stmt.query_map([workout.to_string()], |r| {
                Ok((
                    r.get::<_, i64>(0)? as u64,
                    SampleRecord { sensor: kind, offset_ms: r.get::<_, i64>(1)? as u64, value: r.get(2)? },
                ))
            })?;
            for row in it {
                rows.push(row?);
            }
        }
        rows.sort_by_key(|(seq, _)| *seq);
        Ok(rows.into_iter().map(|(_, s)| s).collect())
    }

    /// A user's workouts starting within `range`, oldest first.
    pub fn query_history(&self, user: Uuid, range: TimeRange) -> Result<Vec<WorkoutRecord>> {
        let conn = self.conn();
        if !user_exists(&conn, user)? {
            return Err(StoreError::UnknownUser(user));
        }
        history(&conn, user, range)
    }

    /// Per-member aggregate over workouts in `range`, highest first. Ties
    /// go to the alphabetically first display name. Members without
    /// workouts score 0.
    pub fn leaderboard(
        &self,
        team: Uuid,
        range: TimeRange,
        metric: LeaderboardMetric,
    ) -> Result<Vec<LeaderboardRow>> {
        let members = self.team_members(team)?;
        let conn = self.conn();
        let mut rows = Vec::with_capacity(members.len());
        for m in members {
            let workouts = history(&conn, m.user_id, range)?;
            rows.push(LeaderboardRow {
                user_id: m.user_id,
                display_name: m.display_name,
                value: aggregate(&workouts, metric),
            });
        }
        rows.sort_by(|a, b| {
            b.value
                .total_cmp(&a.value)
                .then_with(|| a.display_name.cmp(&b.display_name))
                .then_with(|| a.user_id.cmp(&b.user_id))
        });
        Ok(rows)
    }

    pub fn share(&self, key: &str) -> Result<Option<ShareRecord>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT share_key, workout_id, target, text, delivered, status, error, attempts
                 FROM shares WHERE share_key = ?1",
                [key],
                share_from_row,
            )
            .optional()?)
    }

    /// Records the outcome of a share attempt, replacing any earlier attempt
    /// under the same key.
    pub fn record_share(&self, rec: &ShareRecord) -> Result<()> {
        let conn = self.conn();
        if !workout_exists(&conn, rec.workout_id)? {
            return Err(StoreError::UnknownWorkout(rec.workout_id));
        }
        conn.execute(
            "INSERT INTO shares (share_key, workout_id, target, text, delivered, status, error, attempts)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)
             ON CONFLICT(share_key) DO UPDATE SET text = ?4, delivered = ?5, status = ?6,
                 error = ?7, attempts = ?8",
            params![
                rec.share_key,
                rec.workout_id.to_string(),
                rec.target,
                rec.text,
                rec.delivered,
                rec.status,
                rec.error,
                rec.attempts,
            ],
        )?;
        Ok(())
    }

    pub fn counts(&self) -> Result<TableCounts> {
        let conn = self.conn();
        let count = |sql: &str| conn.query_row(sql, [], |r| r.get::<_, i64>(0)).map(|n| n as u64);
        let mut samples = 0;
        for kind in SensorKind::ALL {
            samples += count(&format!("SELECT COUNT(*) FROM {}", sample_table(kind)))?;
        }
        Ok(TableCounts {
            users: count("SELECT COUNT(*) FROM users")?,
            teams: count("SELECT COUNT(*) FROM teams")?,
            memberships: count("SELECT COUNT(*) FROM users_to_teams")?,
            workouts: count("SELECT COUNT(*) FROM workouts")?,
            samples,
            shares: count("SELECT COUNT(*) FROM shares")?,
        })
    }

    /// Dangling references, one description per violation. Empty when the
    /// store is consistent.
    pub fn integrity_violations(&self) -> Result<Vec<String>> {
        let conn = self.conn();
        let mut out = Vec::new();
        let mut stmt = conn.prepare("PRAGMA foreign_key_check")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(2)?)))?;
        for row in rows {
            let (table, parent) = row?;
            out.push(format!("{table} row references missing {parent} row"));
        }
        Ok(out)
    }

    /// Line-delimited JSON of every table. See [`DumpLine`] for the order.
    pub fn dump(&self) -> Result<String> {
        let conn = self.conn();
        let mut lines = Vec::new();
        {
            let mut stmt = conn.prepare(
                "SELECT user_id, display_name, external_ids FROM users ORDER BY user_id",
            )?;
            let rows = stmt.query_map([], |r| {
                Ok(User { user_id: uuid_col(r, 0)?, display_name: r.get(1)?, external_ids: json_col(r, 2)? })
            })?;
            for u in rows {
                lines.push(DumpLine::User(u?));
            }
            let mut stmt = conn.prepare("SELECT team_id, name FROM teams ORDER BY team_id")?;
            let rows = stmt.query_map([], |r| Ok(TeamCreated { team_id: uuid_col(r, 0)?, name: r.get(1)? }))?;
            for t in rows {
                lines.push(DumpLine::Team(t?));
            }
            let mut stmt = conn.prepare(
                "SELECT user_id, team_id, joined_at FROM users_to_teams ORDER BY user_id, team_id",
            )?;
            let rows = stmt.query_map([], |r| {
                Ok(Membership { user_id: uuid_col(r, 0)?, team_id: uuid_col(r, 1)?, joined_at: r.get(2)? })
            })?;
            for m in rows {
                lines.push(DumpLine::Membership(m?));
            }
            let mut stmt =
                conn.prepare(&format!("SELECT {WORKOUT_COLS} FROM workouts ORDER BY workout_id"))?;
            let workouts: Vec<WorkoutRecord> =
                stmt.query_map([], workout_from_row)?.collect::<rusqlite::Result<_>>()?;
            for w in &workouts {
                lines.push(DumpLine::Workout(Box::new(w.clone())));
            }
            for w in &workouts {
                let mut rows: Vec<DumpSample> = Vec::new();
                for kind in SensorKind::ALL {
                    let mut stmt = conn.prepare_cached(&format!(
                        "SELECT seq, offset_ms, value FROM {} WHERE workout_id = ?1",
                        sample_table(kind)
                    ))?;
                    let it = stmt.query_map([w.workout_id.to_string()], |r| {
                        Ok(DumpSample {
                            workout_id: w.workout_id,
                            seq: r.get::<_, i64>(0)? as u64,
                            sensor: kind,
                            offset_ms: r.get::<_, i64>(1)? as u64,
                            value: r.get(2)?,
                        })
                    })?;
                    for s in it {
                        rows.push(s?);
                    }
                }
                rows.sort_by_key(|s| s.seq);
                lines.extend(rows.into_iter().map(DumpLine::Sample));
            }
            let mut stmt = conn.prepare(
                "SELECT share_key, workout_id, target, text, delivered, status, error, attempts
                 FROM shares ORDER BY share_key",
            )?;
            for s in stmt.query_map([], share_from_row)? {
                lines.push(DumpLine::Share(s?));
            }
        }
        let mut out = String::new();
        for l in lines {
            out.push_str(&serde_json::to_string(&l).expect("dump line serialises"));
            out.push('\n');
        }
        Ok(out)
    }

    /// Loads a dump into this store in one transaction. Rows whose key
    /// already exists are kept as they are.
    pub fn import(&self, text: &str) -> Result<()> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| StoreError::Import { line: i + 1, msg };
            let row: DumpLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let res = match row {
                DumpLine::User(u) => tx.execute(
                    "INSERT OR IGNORE INTO users (user_id, display_name, external_ids) VALUES (?1, ?2, ?3)",
                    params![u.user_id.to_string(), u.display_name, serde_json::to_string(&u.external_ids).unwrap()],
                ),
                DumpLine::Team(t) => tx.execute(
                    "INSERT OR IGNORE INTO teams (team_id, name) VALUES (?1, ?2)",
                    params![t.team_id.to_string(), t.name],
                ),
                DumpLine::Membership(m) => tx.execute(
                    "INSERT OR IGNORE INTO users_to_teams (user_id, team_id, joined_at) VALUES (?1, ?2, ?3)",
                    params![m.user_id.to_string(), m.team_id.to_string(), m.joined_at],
                ),
                DumpLine::Workout(w) => tx.execute(
                    &format!("INSERT OR IGNORE INTO workouts ({WORKOUT_COLS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6)"),
                    params![
                        w.workout_id.to_string(),
                        w.user_id.to_string(),
                        w.started_at,
                        w.duration_s,
                        serde_json::to_string(&w.summary).unwrap(),
                        w.summary_mismatch
                    ],
                ),
                DumpLine::Sample(s) => tx.execute(
                    &format!(
                        "INSERT OR IGNORE INTO {} (workout_id, seq, offset_ms, value) VALUES (?1, ?2, ?3, ?4)",
                        sample_table(s.sensor)
                    ),
                    params![s.workout_id.to_string(), s.seq as i64, s.offset_ms as i64, s.value],
                ),
                DumpLine::Share(s) => tx.execute(
                    "INSERT OR IGNORE INTO shares (share_key, workout_id, target, text, delivered, status, error, attempts)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                    params![s.share_key, s.workout_id.to_string(), s.target, s.text, s.delivered, s.status, s.error, s.attempts],
                ),
            };
            res.map_err(|e| err(e.to_string()))?;
        }
        tx.commit()?;
        Ok(())
    }

    /// SHA-256 of the dump, hex encoded. Equal digests mean equal contents.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.dump()?.as_bytes())))
    }
}

fn share_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<ShareRecord> {
    Ok(ShareRecord {
        share_key: r.get(0)?,
        workout_id: uuid_col(r, 1)?,
        target: r.get(2)?,
        text: r.get(3)?,
        delivered: r.get(4)?,
        status: r.get(5)?,
        error: r.get(6)?,
        attempts: r.get(7)?,
    })
}

fn exists(conn: &Connection, sql: &str, id: Uuid) -> rusqlite::Result<bool> {
    Ok(conn.query_row(sql, [id.to_string()], |_| Ok(())).optional()?.is_some())
}

fn user_exists(conn: &Connection, id: Uuid) -> rusqlite::Result<bool> {
    exists(conn, "SELECT 1 FROM users WHERE user_id = ?1", id)
}

fn team_exists(conn: &Connection, id: Uuid) -> rusqlite::Result<bool> {
    exists(conn, "SELECT 1 FROM teams WHERE team_id = ?1", id)
}

fn workout_exists(conn: &Connection, id: Uuid) -> rusqlite::Result<bool> {
    exists(conn, "SELECT 1 FROM workouts WHERE workout_id = ?1", id)
}

fn history(conn: &Connection, user: Uuid, range: TimeRange) -> Result<Vec<WorkoutRecord>> {
    let (from, to) = range.bounds();
    let mut stmt = conn.prepare_cached(&format!(
        "SELECT {WORKOUT_COLS} FROM workouts
         WHERE user_id = ?1 AND started_at >= ?2 AND (?3 = ?4 OR started_at < ?3)
         ORDER BY started_at, workout_id"
    ))?;
    let rows = stmt.query_map(params![user.to_string(), from, to, i64::MAX], workout_from_row)?;
    Ok(rows.collect::<rusqlite::Result<_>>()?)
}

fn insert_samples(tx: &Transaction<'_>, workout: Uuid, samples: &[SampleRecord]) -> Result<()> {
    let id = workout.to_string();
    let mut last: HashMap<SensorKind, u64> = HashMap::new();
    for (seq, s) in samples.iter().enumerate() {
        if !s.value.is_finite() {
            return Err(StoreError::MalformedSamples(format!("sample {seq}: value is not finite")));
        }
        if s.offset_ms > i64::MAX as u64 {
            return Err(StoreError::MalformedSamples(format!("sample {seq}: offset out of range")));
        }
        let prev = last.entry(s.sensor).or_insert(s.offset_ms);
        if s.offset_ms < *prev {
            return Err(StoreError::MalformedSamples(format!(
                "sample {seq}: {} offset_ms decreases",
                s.sensor.as_str()
            )));
        }
        *prev = s.offset_ms;
        let mut stmt = tx.prepare_cached(&format!(
            "INSERT INTO {} (workout_id, seq, offset_ms, value) VALUES (?1, ?2, ?3, ?4)",
            sample_table(s.sensor)
        ))?;
        stmt.execute(params![id, seq as i64, s.offset_ms as i64, s.value])?;
    }
    Ok(())
}

/// The leaderboard value of one member's workouts, folded in start order.
pub fn aggregate(workouts: &[WorkoutRecord], metric: LeaderboardMetric) -> f64 {
    match metric {
        LeaderboardMetric::TotalDurationS => workouts.iter().map(|w| w.duration_s).sum(),
        LeaderboardMetric::WorkoutCount => workouts.len() as f64,
        LeaderboardMetric::TotalDistanceM => workouts.iter().map(|w| w.summary.distance_m).sum(),
        LeaderboardMetric::AvgHrBpm => {
            let hrs: Vec<f64> = workouts.iter().filter_map(|w| w.summary.avg_hr_bpm).collect();
            if hrs.is_empty() {
                0.0
            } else {
                hrs.iter().sum::<f64>() / hrs.len() as f64
            }
        }
    }
}
