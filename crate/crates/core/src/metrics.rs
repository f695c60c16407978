//! Session-level statistics from decoded message streams.
//!
//! The heart-rate monitor reports modular counters and a sliding window of
//! the 15 most recent beat timestamps. Totals are rebuilt from counter
//! deltas, and the timestamp window lets up to 15 beats per message gap be
//! recovered exactly; anything older than the window is counted as lost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emg::EmgReport;
use crate::hxm::{HxmMessage, DISTANCE_MODULUS, TIMESTAMP_SLOTS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("raw value {raw} out of range for modulus {modulus}")]
    InvalidRaw { raw: u32, modulus: u32 },
    #[error("no inter-beat intervals recovered")]
    NoData,
    #[error("session ends before it starts ({t0} > {t1})")]
    InvalidSpan { t0: f64, t1: f64 },
}

/// Reconstructs a monotonic total from a wrapping hardware counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloverCounter {
    modulus: u32,
    last_raw: Option<u32>,
    total: u64,
}

impl RolloverCounter {
    pub fn new(modulus: u32) -> Self {
        assert!(modulus > 0, "modulus must be positive");
        Self {
            modulus,
            last_raw: None,
            total: 0,
        }
    }

    /// A counter whose reference reading is already known, e.g. the value
    /// the device reports at power-on.
    pub fn with_origin(modulus: u32, origin: u32) -> Self {
        let mut c = Self::new(modulus);
        c.last_raw = Some(origin % modulus);
        c
    }

    /// Distance counter in 1/16 m units.
    pub fn distance() -> Self {
        Self::new(DISTANCE_MODULUS)
    }

    pub fn strides() -> Self {
        Self::new(256)
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn last_raw(&self) -> Option<u32> {
        self.last_raw
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Folds in a new reading and returns how much the total advanced.
    /// The first reading only establishes the reference.
    pub fn update(&mut self, raw: u32) -> Result<u64, MetricsError> {
        if raw >= self.modulus {
            return Err(MetricsError::InvalidRaw {
                raw,
                modulus: self.modulus,
            });
        }
        let delta = match self.last_raw {
            None => 0,
            Some(last) => ((raw + self.modulus - last) % self.modulus) as u64,
        };
        self.total += delta;
        self.last_raw = Some(raw);
        Ok(delta)
    }
}

/// Accepted inter-beat interval range, matching the 30-240 bpm validity
/// window of the heart-rate field.
pub const IBI_MIN_MS: u32 = 250;
pub const IBI_MAX_MS: u32 = 2000;

/// A beat whose timestamp was recovered from a message window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredBeat {
    /// Milliseconds since the first recovered beat of the session.
    pub offset_ms: u64,
    /// Interval from the previous beat, when that beat is known.
    pub ibi_ms: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSessionState {
    last_beat_number: Option<u8>,
    last_timestamps: Option<[u16; TIMESTAMP_SLOTS]>,
    /// Beats recorded since a known power-on origin, if there is one.
    beats_since_origin: Option<u64>,
    pub beats_total: u64,
    pub beats_unrecovered: u64,
    pub messages_seen: u64,
    beats: Vec<RecoveredBeat>,
    beat_clock: RolloverCounter,
    hr_sum: u64,
    hr_count: u64,
    hr_min: Option<u8>,
    hr_max: Option<u8>,
}

impl Default for HrSessionState {
    fn default() -> Self {
        Self::new()
    }
}

impl HrSessionState {
    /// State for a stream joined mid-way: the first message is only a
    /// reference point.
    pub fn new() -> Self {
        Self {
            last_beat_number: None,
            last_timestamps: None,
            beats_since_origin: None,
            beats_total: 0,
            beats_unrecovered: 0,
            messages_seen: 0,
            beats: Vec::new(),
            beat_clock: RolloverCounter::new(1 << 16),
            hr_sum: 0,
            hr_count: 0,
            hr_min: None,
            hr_max: None,
        }
    }

    /// State for a device whose beat counter is known to start at
    /// `beat_number` with no beats recorded yet.
    pub fn with_origin(beat_number: u8) -> Self {
        Self {
            last_beat_number: Some(beat_number),
            beats_since_origin: Some(0),
            ..Self::new()
        }
    }

    pub fn beats(&self) -> &[RecoveredBeat] {
        &self.beats
    }

    pub fn ibis_ms(&self) -> impl Iterator<Item = u32> + '_ {
        self.beats.iter().filter_map(|b| b.ibi_ms)
    }

    pub fn ingest(&mut self, msg: &HxmMessage) {
        self.messages_seen += 1;
        if msg.heart_rate != 0 {
            self.hr_sum += msg.heart_rate as u64;
            self.hr_count += 1;
            self.hr_min = Some(self.hr_min.map_or(msg.heart_rate, |m| m.min(msg.heart_rate)));
            self.hr_max = Some(self.hr_max.map_or(msg.heart_rate, |m| m.max(msg.heart_rate)));
        }

        let Some(prev) = self.last_beat_number else {
            self.last_beat_number = Some(msg.heart_beat_number);
            self.last_timestamps = Some(msg.beat_timestamps);
            return;
        };
        let delta = msg.heart_beat_number.wrapping_sub(prev) as usize;
        self.last_beat_number = Some(msg.heart_beat_number);
        let previous_window = self.last_timestamps.replace(msg.beat_timestamps);
        if delta == 0 {
            return;
        }

        self.beats_total += delta as u64;
        let recovered = delta.min(TIMESTAMP_SLOTS);
        self.beats_unrecovered += (delta - recovered) as u64;

        let ts = &msg.beat_timestamps;
        let prior = self.beats_since_origin;
        if let Some(n) = self.beats_since_origin.as_mut() {
            *n += delta as u64;
        }
        // oldest new beat first
        for slot in (0..recovered).rev() {
            // zero-based index of this beat since power-on
            let first_ever = prior.is_some_and(|p| p + (delta - 1 - slot) as u64 == 0);
            let predecessor = if first_ever {
                None
            } else if slot + 1 < TIMESTAMP_SLOTS {
                Some(ts[slot + 1])
            } else if delta == TIMESTAMP_SLOTS {
                previous_window.map(|w| w[0])
            } else {
                None
            };
            let ibi = predecessor.map(|p| ts[slot].wrapping_sub(p) as u32);
            let ibi = match ibi {
                Some(v) if !(IBI_MIN_MS..=IBI_MAX_MS).contains(&v) => {
                    self.beats_unrecovered += 1;
                    continue;
                }
                other => other,
            };
            self.beat_clock
                .update(ts[slot] as u32)
                .expect("u16 timestamps fit the clock modulus");
            self.beats.push(RecoveredBeat {
                offset_ms: self.beat_clock.total(),
                ibi_ms: ibi,
            });
        }
    }

    /// Beat-weighted average heart rate, `60000 / mean(IBI)`.
    pub fn average_hr(&self) -> Result<f64, MetricsError> {
        let (sum, n) = self
            .ibis_ms()
            .fold((0u64, 0u64), |(s, n), v| (s + v as u64, n + 1));
        if n == 0 {
            return Err(MetricsError::NoData);
        }
        Ok(60_000.0 * n as f64 / sum as f64)
    }

    /// Mean of the non-zero heart-rate fields of the messages seen.
    pub fn message_average_hr(&self) -> Option<f64> {
        (self.hr_count > 0).then(|| self.hr_sum as f64 / self.hr_count as f64)
    }

    pub fn min_hr(&self) -> Option<u8> {
        self.hr_min
    }

    pub fn max_hr(&self) -> Option<u8> {
        self.hr_max
    }
}

/// Stream-health counters carried alongside a summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames_ok: u64,
    pub frames_rejected: u64,
    pub bytes_skipped: u64,
    pub unknown_type_packets: u64,
    pub sequence_gaps: u64,
    pub low_battery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub duration_s: f64,
    pub avg_hr_bpm: Option<f64>,
    pub msg_avg_hr_bpm: Option<f64>,
    pub min_hr_bpm: Option<u8>,
    pub max_hr_bpm: Option<u8>,
    pub distance_m: f64,
    pub strides_total: u64,
    pub beats_total: u64,
    pub beats_unrecovered: u64,
    pub loss_fraction: f64,
    pub emg: Option<EmgReport>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl SessionSummary {
    pub fn empty(duration_s: f64) -> Self {
        Self {
            duration_s,
            avg_hr_bpm: None,
            msg_avg_hr_bpm: None,
            min_hr_bpm: None,
            max_hr_bpm: None,
            distance_m: 0.0,
            strides_total: 0,
            beats_total: 0,
            beats_unrecovered: 0,
            loss_fraction: 0.0,
            emg: None,
            diagnostics: Diagnostics::default(),
        }
    }
}

pub fn summarize(
    hr: &HrSessionState,
    distance: &RolloverCounter,
    strides: &RolloverCounter,
    emg: Option<EmgReport>,
    t0: f64,
    t1: f64,
) -> Result<SessionSummary, MetricsError> {
    if t1 < t0 {
        return Err(MetricsError::InvalidSpan { t0, t1 });
    }
    let loss_fraction = if hr.beats_total == 0 {
        0.0
    } else {
        hr.beats_unrecovered as f64 / hr.beats_total as f64
    };
    Ok(SessionSummary {
        duration_s: t1 - t0,
        avg_hr_bpm: hr.average_hr().ok(),
        msg_avg_hr_bpm: hr.message_average_hr(),
        min_hr_bpm: hr.min_hr(),
        max_hr_bpm: hr.max_hr(),
        distance_m: distance.total() as f64 / 16.0,
        strides_total: strides.total(),
        beats_total: hr.beats_total,
        beats_unrecovered: hr.beats_unrecovered,
        loss_fraction: loss_fraction.min(1.0),
        emg,
        diagnostics: Diagnostics::default(),
    })
}
