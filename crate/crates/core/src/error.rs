use thiserror::Error;

/// A field value outside the range its protocol allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid field {field}: {value}")]
pub struct InvalidField {
    pub field: &'static str,
    pub value: u32,
}

impl InvalidField {
    pub(crate) fn new(field: &'static str, value: impl Into<u32>) -> Self {
        Self {
            field,
            value: value.into(),
        }
    }
}

/// Why a candidate frame was not accepted.
///
/// The three classes are kept apart so stream framers can count marker
/// noise separately from frames that synchronised but failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad frame: {0}")]
    BadFrame(&'static str),
    #[error("bad crc: computed {computed:#06x}, received {received:#06x}")]
    BadCrc { computed: u16, received: u16 },
    #[error("bad field: {0}")]
    BadField(#[from] InvalidField),
}
