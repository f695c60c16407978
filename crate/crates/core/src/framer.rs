//! Incremental resynchronising framer shared by both sensor protocols.
//!
//! Bytes arrive in arbitrary chunks. The framer looks for a start marker,
//! waits until a whole fixed-length frame is buffered, and hands it to the
//! protocol decoder. Anything that does not decode costs exactly one byte:
//! the scan restarts one byte past the failed start marker.

use crate::error::DecodeError;

/// A fixed-length frame format with a one-byte start marker.
pub trait FrameFormat {
    type Item;

    const START: u8;
    const FRAME_LEN: usize;

    fn decode(frame: &[u8]) -> Result<Self::Item, DecodeError>;
}

/// Per-stream framing state and counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FramerState {
    pending: Vec<u8>,
    /// Frames that decoded and validated.
    pub frames_ok: u64,
    /// Candidates whose markers and length matched but whose CRC or field
    /// validation failed.
    pub frames_rejected: u64,
    pub crc_errors: u64,
    pub field_errors: u64,
    /// Bytes discarded while searching for a valid frame.
    pub bytes_skipped: u64,
}

impl FramerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Buffered bytes not yet resolved into a frame or skipped.
    pub fn pending(&self) -> &[u8] {
        &self.pending
    }

    /// Feeds one chunk and returns every item completed by it, in order.
    pub fn scan<F: FrameFormat>(&mut self, chunk: &[u8]) -> Vec<F::Item> {
        let mut out = Vec::new();
        self.scan_with::<F>(chunk, |item| out.push(item));
        out
    }

    /// Like [`scan`](Self::scan) but hands items to a callback instead of
    /// collecting them.
    pub fn scan_with<F: FrameFormat>(&mut self, chunk: &[u8], mut emit: impl FnMut(F::Item)) {
        if chunk.is_empty() {
            return;
        }
        // Avoid copying when nothing is carried over.
        let owned;
        let buf: &[u8] = if self.pending.is_empty() {
            chunk
        } else {
            self.pending.extend_from_slice(chunk);
            owned = std::mem::take(&mut self.pending);
            &owned
        };

        let mut pos = 0;
        let mut keep_from = buf.len();
        while pos < buf.len() {
            let Some(offset) = buf[pos..].iter().position(|&b| b == F::START) else {
                self.bytes_skipped += (buf.len() - pos) as u64;
                break;
            };
            self.bytes_skipped += offset as u64;
            pos += offset;
            if buf.len() - pos < F::FRAME_LEN {
                keep_from = pos;
                break;
            }
            match F::decode(&buf[pos..pos + F::FRAME_LEN]) {
                Ok(item) => {
                    self.frames_ok += 1;
                    pos += F::FRAME_LEN;
                    emit(item);
                }
                Err(err) => {
                    match err {
                        DecodeError::BadFrame(_) => {}
                        DecodeError::BadCrc { .. } => {
                            self.frames_rejected += 1;
                            self.crc_errors += 1;
                        }
                        DecodeError::BadField(_) => {
                            self.frames_rejected += 1;
                            self.field_errors += 1;
                        }
                    }
                    self.bytes_skipped += 1;
                    pos += 1;
                }
            }
        }
        self.pending = buf[keep_from.min(buf.len())..].to_vec();
    }
}
