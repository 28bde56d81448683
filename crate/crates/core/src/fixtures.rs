//! Seeded synthetic inputs: packet traces for a prediction structure and
//! Annex-B streams with known frame spans and slice types.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{
    escape_rbsp, BitWriter, PacketizationModel, SliceKind, NAL_IDR, NAL_PPS, NAL_SEI, NAL_SLICE,
    NAL_SPS,
};
use crate::structure::PredictionStructure;
use crate::trace::{FrameType, PacketRecord, StreamTrace};

/// Coded size ranges per frame type, in octets.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSizes {
    pub intra: RangeInclusive<usize>,
    pub p: RangeInclusive<usize>,
    pub b_ref: RangeInclusive<usize>,
    pub b_nonref: RangeInclusive<usize>,
}

impl Default for FrameSizes {
    fn default() -> Self {
        Self {
            intra: 20_000..=60_000,
            p: 3_000..=15_000,
            b_ref: 1_500..=8_000,
            b_nonref: 500..=4_000,
        }
    }
}

impl FrameSizes {
    /// Every range divided by `factor` (minimum 1 octet).
    pub fn scaled_down(&self, factor: usize) -> Self {
        let s = |r: &RangeInclusive<usize>| (r.start() / factor).max(1)..=(r.end() / factor).max(1);
        Self {
            intra: s(&self.intra),
            p: s(&self.p),
            b_ref: s(&self.b_ref),
            b_nonref: s(&self.b_nonref),
        }
    }

    fn range(&self, t: FrameType) -> RangeInclusive<usize> {
        match t {
            FrameType::Idr | FrameType::I => self.intra.clone(),
            FrameType::P => self.p.clone(),
            FrameType::BRef => self.b_ref.clone(),
            FrameType::BNonRef => self.b_nonref.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub structure: PredictionStructure,
    pub frames: usize,
    pub sizes: FrameSizes,
    pub pack: PacketizationModel,
}

impl TraceSpec {
    pub fn new(structure: PredictionStructure, frames: usize) -> Self {
        Self {
            structure,
            frames,
            sizes: FrameSizes::default(),
            pack: PacketizationModel::default(),
        }
    }
}

/// Loss-free trace with random frame sizes.
pub fn synthetic_trace(spec: &TraceSpec, seed: u64) -> StreamTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = spec.structure.layout(spec.frames);
    let mut packets = Vec::new();
    for f in &frames {
        let size = rng.gen_range(spec.sizes.range(f.frame_type));
        for (k, s) in spec.pack.split(size).into_iter().enumerate() {
            packets.push(PacketRecord {
                global_index: packets.len(),
                frame_decode_index: f.decode_index,
                index_in_frame: k + 1,
                size_octets: s,
                lost: false,
            });
        }
    }
    let mut trace = StreamTrace::new(frames, packets);
    trace.structure = Some(spec.structure.clone());
    trace
}

/// Ground truth for one picture of a synthesized stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFrame {
    pub span: (usize, usize),
    pub frame_type: FrameType,
    pub slice_kind: SliceKind,
}

#[derive(Debug, Clone)]
pub struct AnnexBFixture {
    pub bytes: Vec<u8>,
    pub frames: Vec<FixtureFrame>,
}

fn push_nal(out: &mut Vec<u8>, long_start: bool, header: u8, rbsp: &[u8]) {
    if long_start {
        out.push(0);
    }
    out.extend([0, 0, 1, header]);
    out.extend(escape_rbsp(rbsp));
}

fn filler(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    // zero-heavy so emulation prevention gets exercised
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0
            } else {
                rng.gen_range(0..=255)
            }
        })
        .collect()
}

/// Annex-B stream for `n_frames` single-slice pictures following `structure`
/// in decoding order. SPS and PPS precede every IDR; some pictures carry an
/// SEI. Slice payloads are random and `slice_type` randomly uses the 0..4 or
/// 5..9 code range.
pub fn annexb_fixture(
    structure: &PredictionStructure,
    n_frames: usize,
    seed: u64,
) -> AnnexBFixture {
    annexb_fixture_sized(structure, n_frames, seed, 200..=6_000)
}

pub fn annexb_fixture_sized(
    structure: &PredictionStructure,
    n_frames: usize,
    seed: u64,
    payload: RangeInclusive<usize>,
) -> AnnexBFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = Vec::new();
    let mut frames = Vec::new();
    for meta in structure.layout(n_frames) {
        let start = bytes.len();
        let t = meta.frame_type;
        if t == FrameType::Idr {
            push_nal(
                &mut bytes,
                true,
                0x60 | NAL_SPS,
                &[0x42, 0x00, 0x1e, 0xab, 0x40, 0x50, 0x1e, 0xc8],
            );
            push_nal(&mut bytes, false, 0x60 | NAL_PPS, &[0xce, 0x3c, 0x80]);
        }
        if rng.gen_bool(0.2) {
            let len = rng.gen_range(4..40);
            let mut sei = filler(&mut rng, len);
            sei.push(0x80);
            push_nal(&mut bytes, t != FrameType::Idr, NAL_SEI, &sei);
        }
        let (nal_type, ref_idc, kind) = match t {
            FrameType::Idr => (NAL_IDR, 3, SliceKind::I),
            FrameType::I => (NAL_SLICE, 2, SliceKind::I),
            FrameType::P => (NAL_SLICE, 2, SliceKind::P),
            FrameType::BRef => (NAL_SLICE, 1, SliceKind::B),
            FrameType::BNonRef => (NAL_SLICE, 0, SliceKind::B),
        };
        let mut w = BitWriter::new();
        w.put_ue(0);
        w.put_ue(kind.base_code() + if rng.gen_bool(0.5) { 5 } else { 0 });
        let len = rng.gen_range(payload.clone());
        w.put_bytes(&filler(&mut rng, len));
        let long = bytes.len() == start || rng.gen_bool(0.5);
        push_nal(&mut bytes, long, ref_idc << 5 | nal_type, &w.finish());
        frames.push(FixtureFrame {
            span: (start, 0),
            frame_type: t,
            slice_kind: kind,
        });
    }
    let ends: Vec<usize> = frames
        .iter()
        .skip(1)
        .map(|f| f.span.0)
        .chain([bytes.len()])
        .collect();
    for (f, end) in frames.iter_mut().zip(ends) {
        f.span.1 = end;
    }
    AnnexBFixture { bytes, frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::validate_trace;

    #[test]
    fn synthetic_traces_are_valid_and_seeded() {
        for s in [
            PredictionStructure::ipp(25).unwrap(),
            PredictionStructure::ibbp(25).unwrap(),
            PredictionStructure::hierarchical(25).unwrap(),
        ] {
            let spec = TraceSpec::new(s, 120);
            let a = synthetic_trace(&spec, 1);
            assert!(validate_trace(&a).is_empty());
            assert_eq!(a, synthetic_trace(&spec, 1));
            assert_ne!(a, synthetic_trace(&spec, 2));
        }
    }

    #[test]
    fn fixture_spans_tile_the_stream() {
        let fx = annexb_fixture(&PredictionStructure::hierarchical(25).unwrap(), 30, 4);
        assert_eq!(fx.frames[0].span.0, 0);
        for w in fx.frames.windows(2) {
            assert_eq!(w[0].span.1, w[1].span.0);
        }
        assert_eq!(fx.frames.last().unwrap().span.1, fx.bytes.len());
    }
}
