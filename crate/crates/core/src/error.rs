use thiserror::Error;

use crate::trace::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Inputs that are well-formed but violate a model invariant.
    Validation,
    /// File system or stream failures, including truncated inputs.
    Io,
    /// Malformed inputs and out-of-range parameters.
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("invalid frame plane: {0}")]
    InvalidPlane(String),
    #[error("frame count mismatch: original has {original}, distorted has {distorted}")]
    FrameCountMismatch { original: usize, distorted: usize },
    #[error("truncated stream: partial frame of {remaining} bytes at byte offset {offset} (frame size {frame_bytes})")]
    Truncated {
        offset: u64,
        remaining: usize,
        frame_bytes: usize,
    },
    #[error("empty series")]
    EmptySeries,
    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("zero variance input")]
    ZeroVariance,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("invalid trace: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidTrace(Vec<Violation>),
    #[error("dependency cycle through frame {frame}")]
    DependencyCycle { frame: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty packet list")]
    EmptyPacketList,
    #[error("no start code found")]
    NoStartCode,
    #[error("no VCL units in stream")]
    NoVclUnits,
    #[error("NAL unit type {0} is not a VCL slice")]
    NotVcl(u8),
    #[error("truncated slice header")]
    TruncatedPayload,
    #[error("exp-Golomb code overflow")]
    ExpGolombOverflow,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidTrace(_) | Error::DependencyCycle { .. } => ErrorClass::Validation,
            Error::Io(_) | Error::Truncated { .. } => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
