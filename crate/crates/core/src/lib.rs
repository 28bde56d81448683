//! Pixel Loss Rate (XLR) toolkit.
//!
//! XLR is the fraction of a frame's pixels whose decoded value differs from
//! the pristine picture. This crate computes it two ways:
//!
//! * [`fr`]: exactly, by comparing original and impaired raw luma planes;
//! * [`nr`]: predictively, from a packet/frame [`StreamTrace`] only, using
//!   the impaired share of each lost packet carried along frame dependencies.
//!
//! Supporting modules:
//!
//! * [`oracle`] propagates per-pixel loss masks by brute force;
//! * [`channel`] is a simplified Gilbert loss model;
//! * [`stats`] compares series;
//! * [`ingest`] turns H.264 Annex-B streams into traces;
//! * [`sweep`] runs experiment grids.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! pin the common `f64` instantiations.

pub mod channel;
pub mod error;
pub mod fixtures;
pub mod fr;
pub mod ingest;
pub mod nr;
pub mod oracle;
pub mod scalar;
pub mod series_io;
pub mod stats;
pub mod structure;
pub mod sweep;
pub mod trace;
pub mod trace_io;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;
pub use structure::{PredictionStructure, StructureName};
pub use trace::{
    validate_trace, FrameMeta, FramePlane, FrameType, PacketRecord, Provenance, StreamTrace,
    Violation, XlrSeries,
};

/// Per-frame XLR series in double precision.
pub type Series = XlrSeries<f64>;
/// Per-frame XLR series in single precision.
pub type SeriesF32 = XlrSeries<f32>;
/// Cubic mapping fit in double precision.
pub type Fit = stats::CubicFit<f64>;
/// Real-vs-estimated comparison report in double precision.
pub type Report = stats::EvalReport<f64>;
/// Per-loss impact with a double precision impaired area.
pub type Impact = nr::LossImpact<f64>;

/// Name of the pseudo-random generator used by every seeded component.
pub const RNG_ALGORITHM: &str = "ChaCha8";
