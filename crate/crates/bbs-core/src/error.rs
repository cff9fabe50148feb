use thiserror::Error;

/// Errors surfaced by compression, planning, and the storage format.
///
/// `Config` covers caller mistakes (bad parameters, impossible shapes).
/// `Format` and `Decode` cover malformed byte streams; the distinction is
/// that `Format` means the framing is wrong (magic, truncation, counts)
/// while `Decode` means a well-framed record carries invalid contents.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} does not fit in {width}-bit two's complement")]
    ValueOutOfRange { value: i32, width: u8 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
