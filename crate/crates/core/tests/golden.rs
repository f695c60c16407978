use bodynet_core::fixtures::{hxm_from_fields, parse_hex_dump, shimmer_from_fields};
use bodynet_core::hxm::{decode_hxm, encode_hxm};
use bodynet_core::kv::KvMap;
use bodynet_core::shimmer::{decode_shimmer, encode_shimmer};

const HXM_HEX: &str = include_str!("fixtures/hxm_golden.hex");
const HXM_FIELDS: &str = include_str!("fixtures/hxm_golden.fields");
const SHIMMER_HEX: &str = include_str!("fixtures/shimmer_golden.hex");
const SHIMMER_FIELDS: &str = include_str!("fixtures/shimmer_golden.fields");

// Independent bit-at-a-time references.
fn crc8_ref(data: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in data {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0x8C } else { crc >> 1 };
        }
    }
    crc
}

fn crc16_ref(data: &[u8]) -> u16 {
    let mut crc = 0xFFFFu16;
    for &b in data {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

#[test]
fn hxm_golden_frame_layout() {
    let frames = parse_hex_dump(HXM_HEX).unwrap();
    assert_eq!(frames.len(), 1);
    let f = &frames[0];
    assert_eq!(f.len(), 57);
    assert_eq!((f[0], f[1], f[2], f[56]), (0x02, 0x26, 52, 0x03));
    assert_eq!(f[55], crc8_ref(&f[3..55]));
    // heart rate and beat number sit right after the battery byte
    assert_eq!((f[3 + 8], f[3 + 9], f[3 + 10]), (87, 72, 213));
}

#[test]
fn hxm_golden_fields_decode_and_reencode() {
    let frame = &parse_hex_dump(HXM_HEX).unwrap()[0];
    let expected = hxm_from_fields(&KvMap::parse(HXM_FIELDS).unwrap(), "").unwrap();
    let decoded = decode_hxm(frame).unwrap();
    assert_eq!(decoded, expected);
    assert_eq!(encode_hxm(&decoded).unwrap().as_slice(), frame.as_slice());
    assert_eq!(decoded.speed_mps(), 3.0);
    assert!((decoded.distance_m() - 4003.0 / 16.0).abs() < 1e-12);
}

#[test]
fn shimmer_golden_frames() {
    let frames = parse_hex_dump(SHIMMER_HEX).unwrap();
    let kv = KvMap::parse(SHIMMER_FIELDS).unwrap();
    assert_eq!(frames.len(), 2);
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f.len(), 14);
        assert_eq!((f[0], f[13]), (0x02, 0x03));
        assert_eq!(u16::from_le_bytes([f[11], f[12]]), crc16_ref(&f[1..11]));
        let expected = shimmer_from_fields(&kv, &format!("{i}.")).unwrap();
        let decoded = decode_shimmer(f).unwrap();
        assert_eq!(decoded, expected);
        assert_eq!(encode_shimmer(&decoded).unwrap().as_slice(), f.as_slice());
    }
    let low = decode_shimmer(&frames[1]).unwrap();
    assert!(low.low_battery() && !low.has_sample());
}
