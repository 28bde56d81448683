//! Shared domain types: frame planes and metadata, plus the packet traces and
//! XLR series built from them.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::structure::PredictionStructure;

/// A single 8-bit luma plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePlane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl FramePlane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidPlane(format!(
                "{width}x{height} has no pixels"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::InvalidPlane(format!(
                "{} samples for a {width}x{height} plane",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Plane with every sample set to `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.samples.len()
    }

    pub(crate) fn check_same_shape(&self, other: &FramePlane) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            });
        }
        Ok(())
    }
}

/// Coding type of a frame within its prediction structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Idr,
    I,
    P,
    /// B frame used as a reference by other B frames (B1 in hierarchical GOPs).
    BRef,
    /// B frame nobody predicts from.
    BNonRef,
}

impl FrameType {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::Idr => "IDR",
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::BRef => "B_ref",
            FrameType::BNonRef => "B_nonref",
        }
    }

    /// Whether other frames may predict from this one.
    pub fn is_reference(self) -> bool {
        !matches!(self, FrameType::BNonRef)
    }

    pub fn is_intra(self) -> bool {
        matches!(self, FrameType::Idr | FrameType::I)
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "IDR" => FrameType::Idr,
            "I" => FrameType::I,
            "P" => FrameType::P,
            "B_ref" => FrameType::BRef,
            "B_nonref" => FrameType::BNonRef,
            other => return Err(format!("unknown frame type `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMeta {
    pub decode_index: usize,
    /// Picture order count.
    pub display_index: usize,
    pub frame_type: FrameType,
    /// Decode indices of the frames this one predicts from.
    pub direct_refs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketRecord {
    pub global_index: usize,
    pub frame_decode_index: usize,
    /// 1-based position among the owning frame's packets.
    pub index_in_frame: usize,
    pub size_octets: u64,
    pub lost: bool,
}

/// Everything the no-reference estimator gets to see.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamTrace {
    pub frames: Vec<FrameMeta>,
    pub packets: Vec<PacketRecord>,
    pub structure: Option<PredictionStructure>,
    /// Non-fatal notes collected while building the trace.
    pub warnings: Vec<String>,
}

impl StreamTrace {
    pub fn new(frames: Vec<FrameMeta>, packets: Vec<PacketRecord>) -> Self {
        Self {
            frames,
            packets,
            structure: None,
            warnings: Vec::new(),
        }
    }

    pub fn lost_count(&self) -> usize {
        self.packets.iter().filter(|p| p.lost).count()
    }

    /// Packets grouped by owning frame position. Packets naming unknown frames
    /// are skipped; call [`validate_trace`] first if that matters.
    pub fn packets_by_frame(&self) -> Vec<Vec<&PacketRecord>> {
        let mut grouped = vec![Vec::new(); self.frames.len()];
        for p in &self.packets {
            if let Some(slot) = grouped.get_mut(p.frame_decode_index) {
                slot.push(p);
            }
        }
        grouped
    }

    /// Frame positions (decode order) sorted by display index.
    pub fn display_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.frames.len()).collect();
        order.sort_by_key(|&i| (self.frames[i].display_index, i));
        order
    }

    /// Returns an error carrying every violation if the trace is malformed.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_trace(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTrace(violations))
        }
    }
}

/// A single broken trace invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoFrames,
    FirstFrameNotIdr {
        frame: usize,
    },
    DecodeIndexOutOfOrder {
        position: usize,
        decode_index: usize,
    },
    DuplicateDisplayIndex {
        frame: usize,
        display_index: usize,
    },
    IdrWithReferences {
        frame: usize,
    },
    NonCausalReference {
        frame: usize,
        reference: usize,
    },
    ReferenceToNonReference {
        frame: usize,
        reference: usize,
    },
    ReferenceAcrossIdr {
        frame: usize,
        reference: usize,
    },
    PacketUnknownFrame {
        packet: usize,
        frame: usize,
    },
    PacketOutOfOrder {
        packet: usize,
    },
    GlobalIndexGap {
        packet: usize,
        expected: usize,
    },
    NonContiguousPacketIndex {
        packet: usize,
        frame: usize,
        expected: usize,
        found: usize,
    },
    ZeroSizePacket {
        packet: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoFrames => write!(f, "trace has no frames"),
            FirstFrameNotIdr { frame } => write!(f, "frame {frame}: first frame is not IDR"),
            DecodeIndexOutOfOrder {
                position,
                decode_index,
            } => write!(
                f,
                "frame at position {position} has decode_index {decode_index}"
            ),
            DuplicateDisplayIndex {
                frame,
                display_index,
            } => write!(
                f,
                "frame {frame}: display index {display_index} already used"
            ),
            IdrWithReferences { frame } => write!(f, "frame {frame}: IDR frame has references"),
            NonCausalReference { frame, reference } => {
                write!(
                    f,
                    "frame {frame}: references frame {reference} not yet decoded"
                )
            }
            ReferenceToNonReference { frame, reference } => {
                write!(
                    f,
                    "frame {frame}: references non-reference frame {reference}"
                )
            }
            ReferenceAcrossIdr { frame, reference } => {
                write!(
                    f,
                    "frame {frame}: references frame {reference} before the last IDR"
                )
            }
            PacketUnknownFrame { packet, frame } => {
                write!(f, "packet {packet}: unknown frame {frame}")
            }
            PacketOutOfOrder { packet } => {
                write!(f, "packet {packet}: not in frame decoding order")
            }
            GlobalIndexGap { packet, expected } => {
                write!(
                    f,
                    "packet at position {packet}: expected global index {expected}"
                )
            }
            NonContiguousPacketIndex {
                packet,
                frame,
                expected,
                found,
            } => write!(
                f,
                "packet {packet}: frame {frame} index_in_frame {found}, expected {expected}"
            ),
            ZeroSizePacket { packet } => write!(f, "packet {packet}: zero size"),
        }
    }
}

/// Checks every trace invariant. Never fails; an empty list means valid.
pub fn validate_trace(trace: &StreamTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let frames = &trace.frames;
    if frames.is_empty() {
        out.push(Violation::NoFrames);
    } else if frames[0].frame_type != FrameType::Idr {
        out.push(Violation::FirstFrameNotIdr {
            frame: frames[0].decode_index,
        });
    }

    let mut displays = HashSet::new();
    let mut last_idr = 0usize;
    for (pos, frame) in frames.iter().enumerate() {
        let f = frame.decode_index;
        if f != pos {
            out.push(Violation::DecodeIndexOutOfOrder {
                position: pos,
                decode_index: f,
            });
        }
        if !displays.insert(frame.display_index) {
            out.push(Violation::DuplicateDisplayIndex {
                frame: f,
                display_index: frame.display_index,
            });
        }
        if frame.frame_type == FrameType::Idr {
            last_idr = pos;
            if !frame.direct_refs.is_empty() {
                out.push(Violation::IdrWithReferences { frame: f });
            }
            continue;
        }
        for &r in &frame.direct_refs {
            if r >= f {
                out.push(Violation::NonCausalReference {
                    frame: f,
                    reference: r,
                });
                continue;
            }
            if r < last_idr {
                out.push(Violation::ReferenceAcrossIdr {
                    frame: f,
                    reference: r,
                });
            }
            if let Some(target) = frames.get(r) {
                if !target.frame_type.is_reference() {
                    out.push(Violation::ReferenceToNonReference {
                        frame: f,
                        reference: r,
                    });
                }
            }
        }
    }

    let mut prev: Option<(usize, usize)> = None;
    let mut expected_in_frame: Option<(usize, usize)> = None;
    for (pos, p) in trace.packets.iter().enumerate() {
        if p.global_index != pos {
            out.push(Violation::GlobalIndexGap {
                packet: pos,
                expected: pos,
            });
        }
        if p.size_octets == 0 {
            out.push(Violation::ZeroSizePacket {
                packet: p.global_index,
            });
        }
        if p.frame_decode_index >= frames.len() {
            out.push(Violation::PacketUnknownFrame {
                packet: p.global_index,
                frame: p.frame_decode_index,
            });
            continue;
        }
        let key = (p.frame_decode_index, p.index_in_frame);
        if let Some(prev) = prev {
            if key <= prev {
                out.push(Violation::PacketOutOfOrder {
                    packet: p.global_index,
                });
            }
        }
        prev = Some(key);

        let expected = match expected_in_frame {
            Some((frame, next)) if frame == p.frame_decode_index => next,
            _ => 1,
        };
        if p.index_in_frame != expected {
            out.push(Violation::NonContiguousPacketIndex {
                packet: p.global_index,
                frame: p.frame_decode_index,
                expected,
                found: p.index_in_frame,
            });
        }
        expected_in_frame = Some((p.frame_decode_index, p.index_in_frame.max(expected) + 1));
    }
    out
}

/// Where a series came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Full-reference pixel comparison.
    Fr,
    /// No-reference estimate from a trace.
    Nr,
    /// Pixel propagation oracle.
    Oracle,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Fr => "fr",
            Provenance::Nr => "nr",
            Provenance::Oracle => "oracle",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fr" => Ok(Provenance::Fr),
            "nr" => Ok(Provenance::Nr),
            "oracle" => Ok(Provenance::Oracle),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// Per-frame XLR in decoding order with its temporal pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct XlrSeries<T> {
    pub per_frame: Vec<(usize, T)>,
    pub mxlr: T,
    pub msxlr: T,
    pub provenance: Provenance,
}

impl<T: Scalar> XlrSeries<T> {
    /// Builds a series and computes both pooled values.
    pub fn from_frames(per_frame: Vec<(usize, T)>, provenance: Provenance) -> Result<Self> {
        let values: Vec<T> = per_frame.iter().map(|&(_, x)| x).collect();
        let mxlr = crate::fr::pool_mxlr(&values)?;
        let msxlr = crate::fr::pool_msxlr(&values)?;
        Ok(Self {
            per_frame,
            mxlr,
            msxlr,
            provenance,
        })
    }

    pub fn values(&self) -> Vec<T> {
        self.per_frame.iter().map(|&(_, x)| x).collect()
    }

    pub fn len(&self) -> usize {
        self.per_frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_frame.is_empty()
    }

    /// Rows reordered by the given frame positions (e.g. display order).
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            per_frame: order.iter().map(|&i| self.per_frame[i]).collect(),
            ..self.clone()
        }
    }
}
