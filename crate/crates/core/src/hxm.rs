//! Heart-rate monitor standard data message.
//!
//! ```text
//! +-----+--------+-----+--------------------+------+-----+
//! | STX | MSG ID | DLC | PAYLOAD (52 bytes) | CRC8 | ETX |
//! +-----+--------+-----+--------------------+------+-----+
//!  0x02   0x26     52                          over   0x03
//!                                             payload
//! ```
//!
//! Payload layout, multi-byte fields little-endian:
//!
//! ```text
//! off  len  field
//!   0    2  firmware id
//!   2    2  firmware version
//!   4    2  hardware id
//!   6    2  hardware version
//!   8    1  battery charge (%)
//!   9    1  heart rate (bpm, 0 = none detected)
//!  10    1  heart beat number (mod 256)
//!  11   30  15 beat timestamps (ms mod 65536), newest first
//!  41    3  reserved
//!  44    2  distance (1/16 m, mod 4096)
//!  46    2  instantaneous speed (1/256 m/s)
//!  48    1  strides (mod 256)
//!  49    3  reserved
//! ```
//!
//! Reserved bytes are written as zero and ignored when decoding. They are
//! still covered by the CRC.

use serde::{Deserialize, Serialize};

use crate::crc::crc8;
use crate::error::{DecodeError, InvalidField};
use crate::framer::{FrameFormat, FramerState};

pub const STX: u8 = 0x02;
pub const ETX: u8 = 0x03;
pub const MSG_ID: u8 = 0x26;
pub const PAYLOAD_LEN: usize = 52;
pub const FRAME_LEN: usize = PAYLOAD_LEN + 5;
pub const TIMESTAMP_SLOTS: usize = 15;

pub const HR_MIN_BPM: u8 = 30;
pub const HR_MAX_BPM: u8 = 240;
pub const SPEED_RAW_MAX: u16 = 4095;
pub const BATTERY_MAX_PERCENT: u8 = 100;

/// Distance counter modulus in raw units: 256 m at 16 raw per metre.
pub const DISTANCE_MODULUS: u32 = 4096;

const OFF_FIRMWARE_ID: usize = 0;
const OFF_FIRMWARE_VERSION: usize = 2;
const OFF_HARDWARE_ID: usize = 4;
const OFF_HARDWARE_VERSION: usize = 6;
const OFF_BATTERY: usize = 8;
const OFF_HEART_RATE: usize = 9;
const OFF_BEAT_NUMBER: usize = 10;
const OFF_TIMESTAMPS: usize = 11;
const OFF_DISTANCE: usize = 44;
const OFF_SPEED: usize = 46;
const OFF_STRIDES: usize = 48;

/// One decoded standard data message, fields in their raw wire units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HxmMessage {
    pub firmware_id: u16,
    pub firmware_version: u16,
    pub hardware_id: u16,
    pub hardware_version: u16,
    pub battery_charge: u8,
    pub heart_rate: u8,
    pub heart_beat_number: u8,
    /// Index 0 is the newest beat.
    pub beat_timestamps: [u16; TIMESTAMP_SLOTS],
    pub distance_raw: u16,
    pub speed_raw: u16,
    pub strides: u8,
}

impl HxmMessage {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.heart_rate != 0 && !(HR_MIN_BPM..=HR_MAX_BPM).contains(&self.heart_rate) {
            return Err(InvalidField::new("heart_rate", self.heart_rate));
        }
        if self.speed_raw > SPEED_RAW_MAX {
            return Err(InvalidField::new("speed_raw", self.speed_raw));
        }
        if self.distance_raw as u32 >= DISTANCE_MODULUS {
            return Err(InvalidField::new("distance_raw", self.distance_raw));
        }
        if self.battery_charge > BATTERY_MAX_PERCENT {
            return Err(InvalidField::new("battery_charge", self.battery_charge));
        }
        Ok(())
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_raw as f64 / 256.0
    }

    pub fn distance_m(&self) -> f64 {
        distance_m(self.distance_raw)
    }
}

/// Converts a raw speed reading to metres per second.
pub fn speed_mps(speed_raw: u16) -> Result<f64, InvalidField> {
    if speed_raw > SPEED_RAW_MAX {
        return Err(InvalidField::new("speed_raw", speed_raw));
    }
    Ok(speed_raw as f64 / 256.0)
}

/// Converts a raw distance reading to metres (modulo 256 m).
pub fn distance_m(distance_raw: u16) -> f64 {
    distance_raw as f64 / 16.0
}

pub fn encode_hxm(msg: &HxmMessage) -> Result<[u8; FRAME_LEN], InvalidField> {
    msg.validate()?;
    let mut frame = [0u8; FRAME_LEN];
    frame[0] = STX;
    frame[1] = MSG_ID;
    frame[2] = PAYLOAD_LEN as u8;
    {
        let p = &mut frame[3..3 + PAYLOAD_LEN];
        put_u16(p, OFF_FIRMWARE_ID, msg.firmware_id);
        put_u16(p, OFF_FIRMWARE_VERSION, msg.firmware_version);
        put_u16(p, OFF_HARDWARE_ID, msg.hardware_id);
        put_u16(p, OFF_HARDWARE_VERSION, msg.hardware_version);
        p[OFF_BATTERY] = msg.battery_charge;
        p[OFF_HEART_RATE] = msg.heart_rate;
        p[OFF_BEAT_NUMBER] = msg.heart_beat_number;
        for (i, ts) in msg.beat_timestamps.iter().enumerate() {
            put_u16(p, OFF_TIMESTAMPS + 2 * i, *ts);
        }
        put_u16(p, OFF_DISTANCE, msg.distance_raw);
        put_u16(p, OFF_SPEED, msg.speed_raw);
        p[OFF_STRIDES] = msg.strides;
    }
    frame[3 + PAYLOAD_LEN] = crc8(&frame[3..3 + PAYLOAD_LEN]);
    frame[FRAME_LEN - 1] = ETX;
    Ok(frame)
}

pub fn decode_hxm(frame: &[u8]) -> Result<HxmMessage, DecodeError> {
    if frame.len() != FRAME_LEN {
        return Err(DecodeError::BadFrame("length"));
    }
    if frame[0] != STX {
        return Err(DecodeError::BadFrame("start marker"));
    }
    if frame[1] != MSG_ID {
        return Err(DecodeError::BadFrame("message id"));
    }
    if frame[2] as usize != PAYLOAD_LEN {
        return Err(DecodeError::BadFrame("data length code"));
    }
    if frame[FRAME_LEN - 1] != ETX {
        return Err(DecodeError::BadFrame("end marker"));
    }
    let p = &frame[3..3 + PAYLOAD_LEN];
    let computed = crc8(p);
    let received = frame[3 + PAYLOAD_LEN];
    if computed != received {
        return Err(DecodeError::BadCrc {
            computed: computed.into(),
            received: received.into(),
        });
    }
    let mut beat_timestamps = [0u16; TIMESTAMP_SLOTS];
    for (i, ts) in beat_timestamps.iter_mut().enumerate() {
        *ts = get_u16(p, OFF_TIMESTAMPS + 2 * i);
    }
    let msg = HxmMessage {
        firmware_id: get_u16(p, OFF_FIRMWARE_ID),
        firmware_version: get_u16(p, OFF_FIRMWARE_VERSION),
        hardware_id: get_u16(p, OFF_HARDWARE_ID),
        hardware_version: get_u16(p, OFF_HARDWARE_VERSION),
        battery_charge: p[OFF_BATTERY],
        heart_rate: p[OFF_HEART_RATE],
        heart_beat_number: p[OFF_BEAT_NUMBER],
        beat_timestamps,
        distance_raw: get_u16(p, OFF_DISTANCE),
        speed_raw: get_u16(p, OFF_SPEED),
        strides: p[OFF_STRIDES],
    };
    msg.validate()?;
    Ok(msg)
}

/// [`FrameFormat`] marker for the heart-rate monitor stream.
pub struct Hxm;

impl FrameFormat for Hxm {
    type Item = HxmMessage;
    const START: u8 = STX;
    const FRAME_LEN: usize = FRAME_LEN;

    fn decode(frame: &[u8]) -> Result<HxmMessage, DecodeError> {
        decode_hxm(frame)
    }
}

/// Feeds a chunk of a heart-rate monitor byte stream through `state`.
pub fn scan(state: &mut FramerState, chunk: &[u8]) -> Vec<HxmMessage> {
    state.scan::<Hxm>(chunk)
}

#[inline]
fn put_u16(buf: &mut [u8], off: usize, v: u16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

#[inline]
fn get_u16(buf: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([buf[off], buf[off + 1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HxmMessage {
        let mut ts = [0u16; TIMESTAMP_SLOTS];
        for (i, t) in ts.iter_mut().enumerate() {
            *t = 30_000u16.wrapping_sub(800 * i as u16);
        }
        HxmMessage {
            firmware_id: 9500,
            firmware_version: 0x4A31,
            hardware_id: 7800,
            hardware_version: 0x4131,
            battery_charge: 87,
            heart_rate: 75,
            heart_beat_number: 201,
            beat_timestamps: ts,
            distance_raw: 4000,
            speed_raw: 1024,
            strides: 250,
        }
    }

    #[test]
    fn frame_has_fixed_envelope() {
        let f = encode_hxm(&sample()).unwrap();
        assert_eq!(f.len(), 57);
        assert_eq!(&f[..3], &[0x02, 0x26, 52]);
        assert_eq!(f[56], 0x03);
        assert_eq!(f[55], crc8(&f[3..55]));
        // reserved regions
        assert_eq!(&f[3 + 41..3 + 44], &[0, 0, 0]);
        assert_eq!(&f[3 + 49..3 + 52], &[0, 0, 0]);
    }

    #[test]
    fn zero_heart_rate_is_encoded_as_zero() {
        let mut m = sample();
        m.heart_rate = 0;
        let f = encode_hxm(&m).unwrap();
        assert_eq!(f[3 + OFF_HEART_RATE], 0x00);
        assert_eq!(decode_hxm(&f).unwrap(), m);
    }

    #[test]
    fn all_zero_message_round_trips() {
        let m = HxmMessage::default();
        let f = encode_hxm(&m).unwrap();
        assert_eq!(decode_hxm(&f).unwrap(), m);
    }

    #[test]
    fn speed_scaling() {
        let mut m = sample();
        m.speed_raw = 256;
        let back = decode_hxm(&encode_hxm(&m).unwrap()).unwrap();
        assert_eq!(back.speed_mps(), 1.0);
        assert!((speed_mps(4095).unwrap() - 15.996).abs() <= 1.0 / 512.0);
        assert_eq!(speed_mps(0).unwrap(), 0.0);
        assert_eq!(
            speed_mps(4096),
            Err(InvalidField {
                field: "speed_raw",
                value: 4096
            })
        );
        assert_eq!(distance_m(16), 1.0);
    }

    #[test]
    fn encode_rejects_out_of_range_fields() {
        for hr in [1u8, 29, 241, 255] {
            let mut m = sample();
            m.heart_rate = hr;
            assert_eq!(encode_hxm(&m).unwrap_err().field, "heart_rate");
        }
        let mut m = sample();
        m.speed_raw = 4096;
        assert_eq!(encode_hxm(&m).unwrap_err().field, "speed_raw");
        let mut m = sample();
        m.distance_raw = 4096;
        assert_eq!(encode_hxm(&m).unwrap_err().field, "distance_raw");
        for hr in [0u8, 30, 240] {
            let mut m = sample();
            m.heart_rate = hr;
            assert!(encode_hxm(&m).is_ok());
        }
    }

    /// Writes raw payload bytes with a correct CRC, bypassing validation.
    fn forge(mut f: [u8; FRAME_LEN], off: usize, value: u8) -> [u8; FRAME_LEN] {
        f[3 + off] = value;
        f[3 + PAYLOAD_LEN] = crc8(&f[3..3 + PAYLOAD_LEN]);
        f
    }

    #[test]
    fn out_of_range_heart_rate_with_good_crc_is_bad_field() {
        let golden = encode_hxm(&sample()).unwrap();
        for hr in [1u8, 17, 20, 29, 241] {
            let f = forge(golden, OFF_HEART_RATE, hr);
            assert!(matches!(decode_hxm(&f), Err(DecodeError::BadField(_))));
        }
        let mut f = golden;
        f[3 + OFF_SPEED + 1] = 0x10; // speed_raw = 0x1000 = 4096
        f[3 + PAYLOAD_LEN] = crc8(&f[3..3 + PAYLOAD_LEN]);
        assert!(matches!(decode_hxm(&f), Err(DecodeError::BadField(_))));
        // A distance past the 256 m wrap would corrupt the rollover total.
        let f = forge(golden, OFF_DISTANCE + 1, 0x10);
        assert!(matches!(decode_hxm(&f), Err(DecodeError::BadField(e)) if e.field == "distance_raw"));
    }

    #[test]
    fn reserved_bytes_are_ignored() {
        let golden = encode_hxm(&sample()).unwrap();
        let f = forge(golden, 42, 0xEE);
        assert_eq!(decode_hxm(&f).unwrap(), sample());
    }

    #[test]
    fn envelope_errors_are_bad_frame() {
        let golden = encode_hxm(&sample()).unwrap();
        assert!(matches!(decode_hxm(&golden[..56]), Err(DecodeError::BadFrame(_))));
        for idx in [0usize, 1, 2, 56] {
            let mut f = golden;
            f[idx] ^= 0x40;
            assert!(matches!(decode_hxm(&f), Err(DecodeError::BadFrame(_))), "index {idx}");
        }
    }

    #[test]
    fn every_single_bit_flip_in_payload_is_bad_crc() {
        let golden = encode_hxm(&sample()).unwrap();
        for byte in 3..3 + PAYLOAD_LEN {
            for bit in 0..8 {
                let mut f = golden;
                f[byte] ^= 1 << bit;
                assert!(
                    matches!(decode_hxm(&f), Err(DecodeError::BadCrc { .. })),
                    "byte {byte} bit {bit}"
                );
            }
        }
    }

    #[test]
    fn split_frames_are_reassembled() {
        let a = encode_hxm(&sample()).unwrap();
        let mut m2 = sample();
        m2.heart_beat_number = 202;
        let b = encode_hxm(&m2).unwrap();
        let stream: Vec<u8> = a.iter().chain(b.iter()).copied().collect();
        let mut st = FramerState::new();
        let mut got = scan(&mut st, &stream[..20]);
        got.extend(scan(&mut st, &stream[20..80]));
        got.extend(scan(&mut st, &stream[80..]));
        assert_eq!(got, vec![sample(), m2]);
        assert_eq!(st.frames_ok, 2);
        assert_eq!(st.bytes_skipped, 0);
    }

    #[test]
    fn back_to_back_frames_skip_nothing() {
        let f = encode_hxm(&sample()).unwrap();
        let stream: Vec<u8> = std::iter::repeat_n(f, 25).flatten().collect();
        let mut st = FramerState::new();
        assert_eq!(scan(&mut st, &stream).len(), 25);
        assert_eq!(st.bytes_skipped, 0);
        assert_eq!(st.frames_rejected, 0);
    }
}
