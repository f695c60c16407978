//! JSON bodies of the `/v1` ingestion API, shared by client and server.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::metrics::SessionSummary;

/// Client summaries further than this from the server's recomputation are
/// flagged.
pub const HR_TOLERANCE_BPM: f64 = 1.0;
pub const DISTANCE_TOLERANCE_M: f64 = 0.1;

pub const FLAG_SUMMARY_MISMATCH: &str = "summary-mismatch";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    /// One row per recovered beat, value in bpm (`60000 / IBI`).
    Hr,
    /// Cumulative metres, one row per message.
    Distance,
    /// Cumulative strides, one row per message.
    Strides,
    /// EMG millivolts, one row per sample.
    Emg,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] = [Self::Hr, Self::Distance, Self::Strides, Self::Emg];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hr => "hr",
            Self::Distance => "distance",
            Self::Strides => "strides",
            Self::Emg => "emg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sensor: SensorKind,
    pub offset_ms: u64,
    pub value: f64,
}

/// `POST /v1/workouts` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkoutUpload {
    pub user_id: Uuid,
    pub workout_id: Uuid,
    /// Unix time in milliseconds.
    pub started_at: i64,
    pub duration_s: f64,
    pub summary: SessionSummary,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("duration must be finite and non-negative")]
    BadDuration,
    #[error("sample {index}: value is not finite")]
    NonFiniteSample { index: usize },
    #[error("sample {index}: offset_ms decreases for sensor {sensor}")]
    DecreasingOffset { index: usize, sensor: &'static str },
}

impl WorkoutUpload {
    pub fn validate(&self) -> Result<(), WireError> {
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(WireError::BadDuration);
        }
        let mut last: BTreeMap<SensorKind, u64> = BTreeMap::new();
        for (index, s) in self.samples.iter().enumerate() {
            if !s.value.is_finite() {
                return Err(WireError::NonFiniteSample { index });
            }
            let prev = last.entry(s.sensor).or_insert(s.offset_ms);
            if s.offset_ms < *prev {
                return Err(WireError::DecreasingOffset {
                    index,
                    sensor: s.sensor.as_str(),
                });
            }
            *prev = s.offset_ms;
        }
        Ok(())
    }
}

/// Deterministic workout id: a name-based UUID over the user and the raw
/// bytes of every stream, so re-uploading the same recording always reuses
/// the same id.
pub fn workout_id(user_id: Uuid, streams: &[&[u8]]) -> Uuid {
    let mut name = Vec::with_capacity(16 + streams.iter().map(|s| s.len() + 8).sum::<usize>());
    name.extend_from_slice(user_id.as_bytes());
    for s in streams {
        name.extend_from_slice(&(s.len() as u64).to_le_bytes());
        name.extend_from_slice(s);
    }
    Uuid::new_v5(&WORKOUT_NAMESPACE, &name)
}

const WORKOUT_NAMESPACE: Uuid = Uuid::from_u128(0x6b1f_3c52_8d0e_4a47_9a61_2f5e_0c8d_b7a4);

/// Quantities the server can rebuild from raw samples alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recomputed {
    pub avg_hr_bpm: Option<f64>,
    pub distance_m: f64,
}

pub fn recompute(samples: &[SampleRecord]) -> Recomputed {
    let (ibi_sum, beats) = samples
        .iter()
        .filter(|s| s.sensor == SensorKind::Hr && s.value > 0.0)
        .fold((0.0, 0usize), |(sum, n), s| (sum + 60_000.0 / s.value, n + 1));
    let distance_m = samples
        .iter()
        .filter(|s| s.sensor == SensorKind::Distance)
        .map(|s| s.value)
        .next_back()
        .unwrap_or(0.0);
    Recomputed {
        avg_hr_bpm: (beats > 0).then(|| 60_000.0 * beats as f64 / ibi_sum),
        distance_m,
    }
}

/// True when the client's summary disagrees with `server` beyond tolerance.
pub fn summary_mismatch(summary: &SessionSummary, server: &Recomputed) -> bool {
    let hr = match (summary.avg_hr_bpm, server.avg_hr_bpm) {
        (Some(a), Some(b)) => (a - b).abs() > HR_TOLERANCE_BPM,
        (None, None) => false,
        _ => true,
    };
    hr || (summary.distance_m - server.distance_m).abs() > DISTANCE_TOLERANCE_M
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkoutReceipt {
    pub workout_id: Uuid,
    /// `false` when the workout id was already stored.
    pub created: bool,
    #[serde(default)]
    pub flags: Vec<String>,
    pub recomputed: Option<Recomputed>,
}

/// A stored workout as returned by history queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkoutRecord {
    pub workout_id: Uuid,
    pub user_id: Uuid,
    pub started_at: i64,
    pub duration_s: f64,
    pub summary: SessionSummary,
    #[serde(default)]
    pub summary_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewUser {
    pub user_id: Uuid,
    pub display_name: String,
    #[serde(default)]
    pub external_ids: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewTeam {
    #[serde(default)]
    pub team_id: Option<Uuid>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamCreated {
    pub team_id: Uuid,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinTeam {
    pub user_id: Uuid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderboardMetric {
    TotalDurationS,
    WorkoutCount,
    TotalDistanceM,
    AvgHrBpm,
}

impl LeaderboardMetric {
    pub const ALL: [Self; 4] = [
        Self::TotalDurationS,
        Self::WorkoutCount,
        Self::TotalDistanceM,
        Self::AvgHrBpm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TotalDurationS => "total_duration_s",
            Self::WorkoutCount => "workout_count",
            Self::TotalDistanceM => "total_distance_m",
            Self::AvgHrBpm => "avg_hr_bpm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub user_id: Uuid,
    pub display_name: String,
    pub value: f64,
}

/// `POST /v1/share` body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareRequest {
    pub user_id: Uuid,
    pub workout_id: Uuid,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareReceipt {
    pub delivered: bool,
    pub text: String,
    pub status: Option<u16>,
    pub error: Option<String>,
}

/// Body posted to a share webhook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookMessage {
    pub user_id: Uuid,
    pub workout_id: Uuid,
    pub text: String,
}

/// Error body returned with every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub request_id: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upload(samples: Vec<SampleRecord>) -> WorkoutUpload {
        WorkoutUpload {
            user_id: Uuid::nil(),
            workout_id: Uuid::nil(),
            started_at: 0,
            duration_s: 10.0,
            summary: SessionSummary::empty(10.0),
            samples,
        }
    }

    fn rec(sensor: SensorKind, offset_ms: u64, value: f64) -> SampleRecord {
        SampleRecord { sensor, offset_ms, value }
    }

    #[test]
    fn offsets_must_not_decrease_per_sensor() {
        let ok = upload(vec![
            rec(SensorKind::Hr, 1000, 60.0),
            rec(SensorKind::Emg, 0, 0.1),
            rec(SensorKind::Hr, 1000, 60.0),
            rec(SensorKind::Hr, 2000, 60.0),
        ]);
        assert_eq!(ok.validate(), Ok(()));
        let bad = upload(vec![rec(SensorKind::Hr, 2000, 60.0), rec(SensorKind::Hr, 1000, 60.0)]);
        assert!(matches!(bad.validate(), Err(WireError::DecreasingOffset { index: 1, .. })));
        let nan = upload(vec![rec(SensorKind::Emg, 0, f64::NAN)]);
        assert!(nan.validate().is_err());
    }

    #[test]
    fn workout_ids_are_stable_and_content_addressed() {
        let u = Uuid::from_u128(7);
        let a = workout_id(u, &[b"abc", b""]);
        assert_eq!(a, workout_id(u, &[b"abc", b""]));
        assert_ne!(a, workout_id(u, &[b"ab", b"c"]));
        assert_ne!(a, workout_id(Uuid::from_u128(8), &[b"abc", b""]));
        assert_eq!(a.get_version_num(), 5);
    }

    #[test]
    fn recompute_hr_and_distance() {
        let r = recompute(&[
            rec(SensorKind::Hr, 0, 120.0),
            rec(SensorKind::Hr, 500, 60.0),
            rec(SensorKind::Distance, 1000, 3.5),
            rec(SensorKind::Distance, 2000, 7.0),
        ]);
        // IBIs 500 and 1000 ms
        assert_eq!(r.avg_hr_bpm, Some(80.0));
        assert_eq!(r.distance_m, 7.0);
        let mut s = SessionSummary::empty(2.0);
        s.avg_hr_bpm = Some(80.5);
        s.distance_m = 7.05;
        assert!(!summary_mismatch(&s, &r));
        s.distance_m = 7.2;
        assert!(summary_mismatch(&s, &r));
    }

    #[test]
    fn metric_names() {
        for m in LeaderboardMetric::ALL {
            assert_eq!(LeaderboardMetric::parse(m.as_str()), Some(m));
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert_eq!(LeaderboardMetric::parse("calories"), None);
    }
}
