//! Frame check sequences for the two sensor protocols.
//!
//! Both are table driven. The tables are built at compile time from the
//! polynomial so there is nothing to keep in sync by hand.

/// Reflected form of the CRC-8 polynomial x^8 + x^5 + x^4 + 1 (0x31).
pub const CRC8_POLY_REFLECTED: u8 = 0x8C;
pub const CRC8_INIT: u8 = 0x00;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out.
pub const CRC16_POLY: u16 = 0x1021;
pub const CRC16_INIT: u16 = 0xFFFF;

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ CRC8_POLY_REFLECTED
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

const CRC16_TABLE: [u16; 256] = {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ CRC16_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

/// CRC-8 used by the heart-rate monitor frames, computed over the payload only.
pub fn crc8(data: &[u8]) -> u8 {
    data.iter()
        .fold(CRC8_INIT, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

/// CRC-16 used by the EMG packets.
pub fn crc16(data: &[u8]) -> u16 {
    data.iter().fold(CRC16_INIT, |crc, &b| {
        (crc << 8) ^ CRC16_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bit-at-a-time references, written straight from the register
    // description and sharing nothing with the table code above.
    fn crc8_bitwise(data: &[u8]) -> u8 {
        let mut reg: u8 = 0;
        for &byte in data {
            for i in 0..8 {
                let input = (byte >> i) & 1;
                let fb = (reg & 1) ^ input;
                reg >>= 1;
                if fb != 0 {
                    reg ^= 0x8C;
                }
            }
        }
        reg
    }

    fn crc16_bitwise(data: &[u8]) -> u16 {
        let mut reg: u16 = 0xFFFF;
        for &byte in data {
            for i in (0..8).rev() {
                let input = ((byte >> i) & 1) as u16;
                let fb = ((reg >> 15) & 1) ^ input;
                reg <<= 1;
                if fb != 0 {
                    reg ^= 0x1021;
                }
            }
        }
        reg
    }

    #[test]
    fn crc8_empty_is_init() {
        assert_eq!(crc8(&[]), 0x00);
    }

    #[test]
    fn crc8_single_byte_matches_reference() {
        assert_eq!(crc8(&[0x01]), crc8_bitwise(&[0x01]));
        // frozen from the bitwise reference
        assert_eq!(crc8(&[0x01]), 0x5E);
    }

    #[test]
    fn crc8_check_value() {
        // Dallas/Maxim 1-Wire check value for "123456789"
        assert_eq!(crc8_bitwise(b"123456789"), 0xA1);
        assert_eq!(crc8(b"123456789"), 0xA1);
    }

    #[test]
    fn crc8_trailing_zero_changes_value() {
        for data in [&b"\x01"[..], b"\x26\x34\x00\x7f", b"hello"] {
            let base = crc8(data);
            let mut ext = data.to_vec();
            ext.push(0);
            if base != 0 {
                assert_ne!(crc8(&ext), base);
            }
            assert_eq!(crc8(&ext), crc8_bitwise(&ext));
        }
    }

    #[test]
    fn crc16_empty_is_init() {
        assert_eq!(crc16(&[]), 0xFFFF);
    }

    #[test]
    fn crc16_check_value() {
        assert_eq!(crc16_bitwise(b"123456789"), 0x29B1);
        assert_eq!(crc16(b"123456789"), 0x29B1);
    }

    #[test]
    fn crc16_residue_is_zero() {
        // No reflection and no xor-out: appending the register MSB first
        // drives it to zero.
        for data in [&b"123456789"[..], b"\x01\x45\x00", b""] {
            let c = crc16_bitwise(data);
            let mut ext = data.to_vec();
            ext.extend_from_slice(&c.to_be_bytes());
            assert_eq!(crc16(&ext), 0x0000);
        }
    }

    proptest::proptest! {
        #[test]
        fn tables_match_bitwise(data in proptest::collection::vec(proptest::num::u8::ANY, 0..128)) {
            proptest::prop_assert_eq!(crc8(&data), crc8_bitwise(&data));
            proptest::prop_assert_eq!(crc16(&data), crc16_bitwise(&data));
        }
    }
}
