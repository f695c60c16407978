//! Golden-frame fixture formats.
//!
//! Frames are stored as hex dumps, one frame per line, bytes separated by
//! spaces (`02 26 34 ...`). Expected field values live in an adjacent
//! `key=value` file; with several frames the keys are prefixed by the
//! zero-based frame index (`0.heart_rate=72`).

use thiserror::Error;

use crate::hxm::{HxmMessage, TIMESTAMP_SLOTS};
use crate::kv::{join_list, KvError, KvMap};
use crate::shimmer::ShimmerPacket;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixtureError {
    #[error("line {line}: invalid hex byte {token:?}")]
    BadHex { line: usize, token: String },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("expected {expected} beat timestamps, got {got}")]
    TimestampCount { expected: usize, got: usize },
}

pub fn to_hex_line(frame: &[u8]) -> String {
    frame
        .iter()
        .map(|b| format!("{b:02X}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_hex_dump<'a>(frames: impl IntoIterator<Item = &'a [u8]>) -> String {
    frames
        .into_iter()
        .map(|f| to_hex_line(f) + "\n")
        .collect()
}

/// Parses a hex dump. Blank lines and `#` comments are skipped.
pub fn parse_hex_dump(text: &str) -> Result<Vec<Vec<u8>>, FixtureError> {
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let frame = line
            .split_whitespace()
            .map(|tok| {
                u8::from_str_radix(tok, 16).map_err(|_| FixtureError::BadHex {
                    line: i + 1,
                    token: tok.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        frames.push(frame);
    }
    Ok(frames)
}

fn prefixed(prefix: &str, key: &str) -> String {
    format!("{prefix}{key}")
}

pub fn hxm_fields_into(kv: &mut KvMap, prefix: &str, m: &HxmMessage) {
    kv.insert(prefixed(prefix, "firmware_id"), m.firmware_id);
    kv.insert(prefixed(prefix, "firmware_version"), m.firmware_version);
    kv.insert(prefixed(prefix, "hardware_id"), m.hardware_id);
    kv.insert(prefixed(prefix, "hardware_version"), m.hardware_version);
    kv.insert(prefixed(prefix, "battery_charge"), m.battery_charge);
    kv.insert(prefixed(prefix, "heart_rate"), m.heart_rate);
    kv.insert(prefixed(prefix, "heart_beat_number"), m.heart_beat_number);
    kv.insert(prefixed(prefix, "beat_timestamps"), join_list(m.beat_timestamps));
    kv.insert(prefixed(prefix, "distance_raw"), m.distance_raw);
    kv.insert(prefixed(prefix, "speed_raw"), m.speed_raw);
    kv.insert(prefixed(prefix, "strides"), m.strides);
}

pub fn hxm_fields(m: &HxmMessage) -> String {
    let mut kv = KvMap::default();
    hxm_fields_into(&mut kv, "", m);
    kv.to_text()
}

pub fn hxm_from_fields(kv: &KvMap, prefix: &str) -> Result<HxmMessage, FixtureError> {
    let get = |k: &str| prefixed(prefix, k);
    let ts: Vec<u16> = kv.list(&get("beat_timestamps"))?;
    let beat_timestamps: [u16; TIMESTAMP_SLOTS] =
        ts.as_slice().try_into().map_err(|_| FixtureError::TimestampCount {
            expected: TIMESTAMP_SLOTS,
            got: ts.len(),
        })?;
    Ok(HxmMessage {
        firmware_id: kv.require_parsed(&get("firmware_id"))?,
        firmware_version: kv.require_parsed(&get("firmware_version"))?,
        hardware_id: kv.require_parsed(&get("hardware_id"))?,
        hardware_version: kv.require_parsed(&get("hardware_version"))?,
        battery_charge: kv.require_parsed(&get("battery_charge"))?,
        heart_rate: kv.require_parsed(&get("heart_rate"))?,
        heart_beat_number: kv.require_parsed(&get("heart_beat_number"))?,
        beat_timestamps,
        distance_raw: kv.require_parsed(&get("distance_raw"))?,
        speed_raw: kv.require_parsed(&get("speed_raw"))?,
        strides: kv.require_parsed(&get("strides"))?,
    })
}

pub fn shimmer_fields_into(kv: &mut KvMap, prefix: &str, p: &ShimmerPacket) {
    kv.insert(prefixed(prefix, "sensor_id"), p.sensor_id);
    kv.insert(prefixed(prefix, "data_type"), p.data_type);
    kv.insert(prefixed(prefix, "sequence"), p.sequence);
    kv.insert(prefixed(prefix, "timestamp_ms"), p.timestamp_ms);
    kv.insert(prefixed(prefix, "emg_len"), p.emg_len);
    kv.insert(prefixed(prefix, "emg_raw"), p.emg_raw);
    kv.insert(prefixed(prefix, "battery_mv"), p.battery_mv);
}

pub fn shimmer_fields(p: &ShimmerPacket) -> String {
    let mut kv = KvMap::default();
    shimmer_fields_into(&mut kv, "", p);
    kv.to_text()
}

pub fn shimmer_from_fields(kv: &KvMap, prefix: &str) -> Result<ShimmerPacket, FixtureError> {
    let get = |k: &str| prefixed(prefix, k);
    Ok(ShimmerPacket {
        sensor_id: kv.require_parsed(&get("sensor_id"))?,
        data_type: kv.require_parsed(&get("data_type"))?,
        sequence: kv.require_parsed(&get("sequence"))?,
        timestamp_ms: kv.require_parsed(&get("timestamp_ms"))?,
        emg_len: kv.require_parsed(&get("emg_len"))?,
        emg_raw: kv.require_parsed(&get("emg_raw"))?,
        battery_mv: kv.require_parsed(&get("battery_mv"))?,
    })
}
