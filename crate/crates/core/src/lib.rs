//! Wire codecs, signal processing and session statistics for a wearable
//! body sensor network: a chest-strap heart-rate monitor streaming one
//! 57-byte message per second and an EMG sensor streaming 14-byte packets
//! at 500 Hz.
//!
//! * [`hxm`] and [`shimmer`] encode and decode the two frame formats;
//!   [`framer`] recovers frames from an arbitrarily chunked byte stream.
//! * [`emg`] is the filter / rectify / smooth / quantify chain.
//! * [`metrics`] turns decoded messages into session totals, recovering
//!   lost beats from the monitor's timestamp window.
//! * [`sim`] generates byte streams with exact ground truth.
//! * [`wire`] and [`status`] are shared with the gateway and the
//!   ingestion server.
//!
//! ```
//! use bodynet_core::hxm::{decode_hxm, encode_hxm, HxmMessage};
//!
//! let msg = HxmMessage { heart_rate: 72, speed_raw: 512, ..Default::default() };
//! let frame = encode_hxm(&msg).unwrap();
//! assert_eq!(frame.len(), 57);
//! assert_eq!(decode_hxm(&frame).unwrap().speed_mps(), 2.0);
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod crc;
pub mod emg;
pub mod error;
pub mod fixtures;
pub mod framer;
pub mod hxm;
pub mod kv;
pub mod metrics;
pub mod session;
pub mod shimmer;
pub mod sim;
pub mod status;
pub mod wire;

pub use error::{DecodeError, InvalidField};
pub use framer::FramerState;
pub use hxm::HxmMessage;
pub use metrics::{HrSessionState, RolloverCounter, SessionSummary};
pub use session::Session;
pub use shimmer::ShimmerPacket;

/// Which sensor protocol a byte stream carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Hxm,
    Shimmer,
}

impl Protocol {
    pub fn frame_len(self) -> usize {
        match self {
            Protocol::Hxm => hxm::FRAME_LEN,
            Protocol::Shimmer => shimmer::FRAME_LEN,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Hxm => "hxm",
            Protocol::Shimmer => "shimmer",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hxm" => Ok(Protocol::Hxm),
            "shimmer" => Ok(Protocol::Shimmer),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}
