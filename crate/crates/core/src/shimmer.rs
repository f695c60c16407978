//! Fixed 14-byte EMG packet.
//!
//! ```text
//! byte  0     BOF 0x02
//! byte  1     sensor id
//! byte  2     data type (0x45 = EMG)
//! byte  3     sequence (mod 256)
//! bytes 4-5   timestamp, ms mod 65536
//! byte  6     EMG length (valid payload bytes, 0..=2)
//! bytes 7-8   EMG sample, 12-bit ADC counts
//! bytes 9-10  battery millivolts, 0 unless the low-battery indication fired
//! bytes 11-12 CRC-16/CCITT-FALSE over bytes 1..=10
//! byte  13    EOF 0x03
//! ```
//!
//! All multi-byte fields are little-endian.

use serde::{Deserialize, Serialize};

use crate::crc::crc16;
use crate::error::{DecodeError, InvalidField};
use crate::framer::{FrameFormat, FramerState};

pub const BOF: u8 = 0x02;
pub const EOF: u8 = 0x03;
pub const FRAME_LEN: usize = 14;
pub const DATA_TYPE_EMG: u8 = 0x45;
pub const EMG_RAW_MAX: u16 = 4095;
pub const EMG_LEN_MAX: u8 = 2;
/// Battery voltage is only reported once it falls to the regulator value.
pub const LOW_BATTERY_MV: u16 = 3000;
pub const SAMPLE_RATE_HZ: f64 = 500.0;
pub const DEFAULT_ADC_SPAN_MV: f64 = 3000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShimmerPacket {
    pub sensor_id: u8,
    pub data_type: u8,
    pub sequence: u8,
    pub timestamp_ms: u16,
    pub emg_len: u8,
    pub emg_raw: u16,
    /// 0 means no low-battery condition.
    pub battery_mv: u16,
}

impl ShimmerPacket {
    pub fn validate(&self) -> Result<(), InvalidField> {
        if self.emg_len > EMG_LEN_MAX {
            return Err(InvalidField::new("emg_len", self.emg_len));
        }
        if self.emg_raw > EMG_RAW_MAX {
            return Err(InvalidField::new("emg_raw", self.emg_raw));
        }
        if self.battery_mv > LOW_BATTERY_MV {
            return Err(InvalidField::new("battery_mv", self.battery_mv));
        }
        Ok(())
    }

    pub fn is_emg(&self) -> bool {
        self.data_type == DATA_TYPE_EMG
    }

    pub fn has_sample(&self) -> bool {
        self.emg_len > 0
    }

    pub fn low_battery(&self) -> bool {
        self.battery_mv != 0
    }

    /// EMG sample in millivolts for an ADC spanning `adc_span_mv`.
    pub fn emg_mv(&self, adc_span_mv: f64) -> f64 {
        raw_to_mv(self.emg_raw, adc_span_mv)
    }
}

/// Centred ADC conversion: mid-scale maps to 0 mV.
pub fn raw_to_mv(raw: u16, adc_span_mv: f64) -> f64 {
    (raw as f64 / EMG_RAW_MAX as f64 - 0.5) * adc_span_mv
}

/// Inverse of [`raw_to_mv`], rounded to the nearest count and clipped to
/// the converter range.
pub fn mv_to_raw(mv: f64, adc_span_mv: f64) -> u16 {
    let counts = ((mv / adc_span_mv + 0.5) * EMG_RAW_MAX as f64).round();
    counts.clamp(0.0, EMG_RAW_MAX as f64) as u16
}

pub fn encode_shimmer(p: &ShimmerPacket) -> Result<[u8; FRAME_LEN], InvalidField> {
    p.validate()?;
    let mut f = [0u8; FRAME_LEN];
    f[0] = BOF;
    f[1] = p.sensor_id;
    f[2] = p.data_type;
    f[3] = p.sequence;
    f[4..6].copy_from_slice(&p.timestamp_ms.to_le_bytes());
    f[6] = p.emg_len;
    f[7..9].copy_from_slice(&p.emg_raw.to_le_bytes());
    f[9..11].copy_from_slice(&p.battery_mv.to_le_bytes());
    let crc = crc16(&f[1..11]);
    f[11..13].copy_from_slice(&crc.to_le_bytes());
    f[13] = EOF;
    Ok(f)
}

pub fn decode_shimmer(frame: &[u8]) -> Result<ShimmerPacket, DecodeError> {
    if frame.len() != FRAME_LEN {
        return Err(DecodeError::BadFrame("length"));
    }
    if frame[0] != BOF {
        return Err(DecodeError::BadFrame("start marker"));
    }
    if frame[13] != EOF {
        return Err(DecodeError::BadFrame("end marker"));
    }
    let computed = crc16(&frame[1..11]);
    let received = u16::from_le_bytes([frame[11], frame[12]]);
    if computed != received {
        return Err(DecodeError::BadCrc { computed, received });
    }
    let p = ShimmerPacket {
        sensor_id: frame[1],
        data_type: frame[2],
        sequence: frame[3],
        timestamp_ms: u16::from_le_bytes([frame[4], frame[5]]),
        emg_len: frame[6],
        emg_raw: u16::from_le_bytes([frame[7], frame[8]]),
        battery_mv: u16::from_le_bytes([frame[9], frame[10]]),
    };
    p.validate()?;
    Ok(p)
}

/// [`FrameFormat`] marker for the EMG packet stream.
pub struct Shimmer;

impl FrameFormat for Shimmer {
    type Item = ShimmerPacket;
    const START: u8 = BOF;
    const FRAME_LEN: usize = FRAME_LEN;

    fn decode(frame: &[u8]) -> Result<ShimmerPacket, DecodeError> {
        decode_shimmer(frame)
    }
}

pub fn scan_shimmer(state: &mut FramerState, chunk: &[u8]) -> Vec<ShimmerPacket> {
    state.scan::<Shimmer>(chunk)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> ShimmerPacket {
        ShimmerPacket {
            sensor_id: 0,
            data_type: DATA_TYPE_EMG,
            sequence: 0,
            timestamp_ms: 0,
            emg_len: 2,
            emg_raw: 0,
            battery_mv: 0,
        }
    }

    #[test]
    fn golden_frame() {
        // Hand-checked against the layout: crc16 of
        // [00 45 00 00 00 02 00 00 00 00] computed by the bitwise reference
        // in crc.rs tests.
        let f = encode_shimmer(&quiet()).unwrap();
        assert_eq!(f[0], 0x02);
        assert_eq!(&f[1..11], &[0x00, 0x45, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00]);
        assert_eq!(f[13], 0x03);
        assert_eq!(decode_shimmer(&f).unwrap(), quiet());
    }

    #[test]
    fn battery_bytes_empty_when_not_reporting() {
        let f = encode_shimmer(&quiet()).unwrap();
        assert_eq!(&f[9..11], &[0, 0]);
        let mut p = quiet();
        p.battery_mv = 2950;
        let f = encode_shimmer(&p).unwrap();
        assert_eq!(u16::from_le_bytes([f[9], f[10]]), 2950);
    }

    #[test]
    fn invalid_fields_rejected_on_encode() {
        let mut p = quiet();
        p.emg_len = 3;
        assert_eq!(encode_shimmer(&p).unwrap_err().field, "emg_len");
        let mut p = quiet();
        p.emg_raw = 4096;
        assert_eq!(encode_shimmer(&p).unwrap_err().field, "emg_raw");
        let mut p = quiet();
        p.battery_mv = 3001;
        assert_eq!(encode_shimmer(&p).unwrap_err().field, "battery_mv");
    }

    #[test]
    fn short_frame_is_bad_frame() {
        let f = encode_shimmer(&quiet()).unwrap();
        assert_eq!(decode_shimmer(&f[..13]), Err(DecodeError::BadFrame("length")));
    }

    #[test]
    fn single_bit_flips_in_covered_bytes_are_bad_crc() {
        let golden = encode_shimmer(&quiet()).unwrap();
        for byte in 1..13 {
            for bit in 0..8 {
                let mut f = golden;
                f[byte] ^= 1 << bit;
                assert!(
                    matches!(decode_shimmer(&f), Err(DecodeError::BadCrc { .. })),
                    "byte {byte} bit {bit}"
                );
            }
        }
    }

    #[test]
    fn crc_valid_out_of_range_sample_is_bad_field() {
        let mut f = encode_shimmer(&quiet()).unwrap();
        f[7..9].copy_from_slice(&5000u16.to_le_bytes());
        let crc = crc16(&f[1..11]);
        f[11..13].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_shimmer(&f), Err(DecodeError::BadField(_))));
    }

    #[test]
    fn adc_conversion() {
        assert_eq!(raw_to_mv(0, 3000.0), -1500.0);
        assert_eq!(raw_to_mv(4095, 3000.0), 1500.0);
        for raw in [0u16, 1, 2047, 2048, 4094, 4095] {
            assert_eq!(mv_to_raw(raw_to_mv(raw, 3000.0), 3000.0), raw);
        }
        assert_eq!(mv_to_raw(1e9, 3000.0), 4095);
        assert_eq!(mv_to_raw(-1e9, 3000.0), 0);
    }

    #[test]
    fn corrupt_packet_between_good_ones() {
        let mut a = quiet();
        a.sequence = 1;
        a.emg_raw = 0x0555; // keep BOF/EOF values out of the body
        let mut b = a;
        b.sequence = 2;
        let mut c = a;
        c.sequence = 3;
        let mut mid = encode_shimmer(&b).unwrap();
        mid[12] ^= 0x10;
        let mut stream = encode_shimmer(&a).unwrap().to_vec();
        stream.extend(mid);
        stream.extend(encode_shimmer(&c).unwrap());
        let mut st = FramerState::new();
        let got = scan_shimmer(&mut st, &stream);
        assert_eq!(got, vec![a, c]);
        assert_eq!(st.frames_rejected, 1);
    }
}
