//! Lightweight H.264 Annex-B analysis. NAL unit boundaries and the first two
//! slice header fields are enough to group pictures and size their packets.
//!
//! No SPS/PPS interpretation happens here. Frame display order and
//! references come from the declared [`PredictionStructure`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::structure::PredictionStructure;
use crate::trace::{validate_trace, FrameMeta, FrameType, PacketRecord, StreamTrace};

pub const NAL_SLICE: u8 = 1;
pub const NAL_IDR: u8 = 5;
pub const NAL_SEI: u8 = 6;
pub const NAL_SPS: u8 = 7;
pub const NAL_PPS: u8 = 8;

/// Bytes of slice data unescaped before reading the header fields.
const HEADER_WINDOW: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NalUnit {
    /// Offset of the first start code byte.
    pub start_code_offset: usize,
    /// Offset of the NAL header byte, right after the start code.
    pub byte_offset: usize,
    /// Bytes from the header up to the next start code.
    pub size_octets: usize,
    pub nal_unit_type: u8,
    pub nal_ref_idc: u8,
    pub is_vcl: bool,
}

impl NalUnit {
    pub fn payload<'a>(&self, stream: &'a [u8]) -> &'a [u8] {
        &stream[self.byte_offset..self.byte_offset + self.size_octets]
    }
}

/// Locates every start code (`00 00 01`, or `00 00 00 01`) and returns the
/// units between them. Empty units (back-to-back start codes) are skipped.
pub fn split_annexb(stream: &[u8]) -> Result<Vec<NalUnit>> {
    let mut starts = Vec::new(); // (start code offset, header offset)
    let mut i = 0;
    while i + 3 <= stream.len() {
        if stream[i] == 0 && stream[i + 1] == 0 && stream[i + 2] == 1 {
            let sc = if i > 0 && stream[i - 1] == 0 {
                i - 1
            } else {
                i
            };
            starts.push((sc, i + 3));
            i += 3;
        } else if stream[i + 2] > 1 {
            i += 3;
        } else {
            i += 1;
        }
    }
    if starts.is_empty() {
        return Err(Error::NoStartCode);
    }
    let mut units = Vec::with_capacity(starts.len());
    for (k, &(sc, hdr)) in starts.iter().enumerate() {
        let end = starts
            .get(k + 1)
            .map_or(stream.len(), |&(next_sc, _)| next_sc);
        if end <= hdr {
            continue;
        }
        let header = stream[hdr];
        let nal_unit_type = header & 0x1f;
        units.push(NalUnit {
            start_code_offset: sc,
            byte_offset: hdr,
            size_octets: end - hdr,
            nal_unit_type,
            nal_ref_idc: (header >> 5) & 0x3,
            is_vcl: (1..=5).contains(&nal_unit_type),
        });
    }
    Ok(units)
}

/// Removes emulation prevention bytes (`00 00 03` -> `00 00`).
pub fn unescape_rbsp(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    let mut zeros = 0;
    for &b in data {
        if zeros >= 2 && b == 3 {
            zeros = 0;
            continue;
        }
        zeros = if b == 0 { zeros + 1 } else { 0 };
        out.push(b);
    }
    out
}

/// Inserts emulation prevention bytes so the payload never contains a start
/// code prefix.
pub fn escape_rbsp(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + data.len() / 64);
    let mut zeros = 0;
    for &b in data {
        if zeros >= 2 && b <= 3 {
            out.push(3);
            zeros = 0;
        }
        zeros = if b == 0 { zeros + 1 } else { 0 };
        out.push(b);
    }
    out
}

/// MSB-first bit reader.
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let byte = *self.data.get(self.pos / 8).ok_or(Error::TruncatedPayload)?;
        let bit = byte >> (7 - self.pos % 8) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..n {
            v = v << 1 | self.read_bit()? as u32;
        }
        Ok(v)
    }

    /// Unsigned exp-Golomb code.
    pub fn read_ue(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 31 {
                return Err(Error::ExpGolombOverflow);
            }
        }
        let rest = self.read_bits(zeros)? as u64;
        u32::try_from((1u64 << zeros) - 1 + rest).map_err(|_| Error::ExpGolombOverflow)
    }
}

/// MSB-first bit writer, used to synthesize streams.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_bit(&mut self, bit: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("pushed") |= 0x80 >> (self.bits % 8);
        }
        self.bits += 1;
    }

    pub fn put_bits(&mut self, value: u32, n: u32) {
        for k in (0..n).rev() {
            self.put_bit(value >> k & 1 == 1);
        }
    }

    pub fn put_ue(&mut self, value: u32) {
        let v = value as u64 + 1;
        let len = 64 - v.leading_zeros();
        self.put_bits(0, len - 1);
        for k in (0..len).rev() {
            self.put_bit(v >> k & 1 == 1);
        }
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.put_bits(b as u32, 8);
        }
    }

    /// Appends the RBSP stop bit and pads to a byte boundary.
    pub fn finish(mut self) -> Vec<u8> {
        self.put_bit(true);
        self.bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SliceKind {
    P,
    B,
    I,
}

impl SliceKind {
    /// Maps `slice_type` (0..=9). SP and SI are folded into P and I.
    pub fn from_slice_type(slice_type: u32) -> Self {
        match slice_type % 5 {
            0 | 3 => SliceKind::P,
            1 => SliceKind::B,
            _ => SliceKind::I,
        }
    }

    pub fn base_code(self) -> u32 {
        match self {
            SliceKind::P => 0,
            SliceKind::B => 1,
            SliceKind::I => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceHeader {
    pub first_mb_in_slice: u32,
    pub slice_type: u32,
    pub kind: SliceKind,
}

/// Reads `first_mb_in_slice` and `slice_type` from a VCL unit whose payload
/// starts at the NAL header byte.
pub fn parse_slice_header(nal: &NalUnit, payload: &[u8]) -> Result<SliceHeader> {
    if !nal.is_vcl {
        return Err(Error::NotVcl(nal.nal_unit_type));
    }
    if payload.len() < 2 {
        return Err(Error::TruncatedPayload);
    }
    let window = &payload[1..payload.len().min(1 + HEADER_WINDOW)];
    let rbsp = unescape_rbsp(window);
    let mut r = BitReader::new(&rbsp);
    let first_mb_in_slice = r.read_ue()?;
    let slice_type = r.read_ue()?;
    if slice_type > 9 {
        return Err(Error::InvalidParams(format!(
            "slice_type {slice_type} out of range"
        )));
    }
    Ok(SliceHeader {
        first_mb_in_slice,
        slice_type,
        kind: SliceKind::from_slice_type(slice_type),
    })
}

/// Frame type hint of a slice.
pub fn slice_type_of(nal: &NalUnit, payload: &[u8]) -> Result<SliceKind> {
    parse_slice_header(nal, payload).map(|h| h.kind)
}

/// How a frame's bytes are cut into transmitted packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketizationModel {
    /// Packets of up to `mtu` octets.
    FixedMtu(usize),
    /// 188-octet transport packets carrying 184 octets of payload each.
    Ts188,
}

impl Default for PacketizationModel {
    fn default() -> Self {
        PacketizationModel::FixedMtu(Self::DEFAULT_MTU)
    }
}

impl PacketizationModel {
    pub const DEFAULT_MTU: usize = 1400;
    pub const TS_PAYLOAD: usize = 184;

    pub fn fixed_mtu(mtu: usize) -> Result<Self> {
        if mtu < 64 {
            return Err(Error::InvalidParams(format!("mtu {mtu} below 64")));
        }
        Ok(PacketizationModel::FixedMtu(mtu))
    }

    pub fn payload_per_packet(&self) -> usize {
        match *self {
            PacketizationModel::FixedMtu(mtu) => mtu,
            PacketizationModel::Ts188 => Self::TS_PAYLOAD,
        }
    }

    /// Payload sizes of the packets carrying `len` bytes.
    pub fn split(&self, len: usize) -> Vec<u64> {
        let chunk = self.payload_per_packet();
        let mut out = vec![chunk as u64; len / chunk];
        if !len.is_multiple_of(chunk) {
            out.push((len % chunk) as u64);
        }
        out
    }
}

impl fmt::Display for PacketizationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PacketizationModel::FixedMtu(mtu) => write!(f, "mtu:{mtu}"),
            PacketizationModel::Ts188 => f.write_str("ts188"),
        }
    }
}

impl FromStr for PacketizationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ts188") {
            return Ok(PacketizationModel::Ts188);
        }
        let mtu = s
            .strip_prefix("mtu:")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| {
                Error::InvalidParams(format!("bad packetization `{s}` (want mtu:N or ts188)"))
            })?;
        Self::fixed_mtu(mtu)
    }
}

/// A picture found in the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedFrame {
    /// Byte range `[start, end)` attributed to this frame, including the
    /// non-VCL units that precede it.
    pub span: (usize, usize),
    pub frame_type: FrameType,
    pub slices: usize,
}

impl CodedFrame {
    pub fn len(&self) -> usize {
        self.span.1 - self.span.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Groups units into pictures: a VCL unit with `first_mb_in_slice == 0`
/// starts a new picture and non-VCL units belong to the next picture.
pub fn group_frames(
    stream: &[u8],
    units: &[NalUnit],
    warnings: &mut Vec<String>,
) -> Result<Vec<CodedFrame>> {
    let mut frames: Vec<CodedFrame> = Vec::new();
    let mut kinds: Vec<SliceKind> = Vec::new();
    let mut pending: Option<usize> = None;
    for nal in units {
        if !nal.is_vcl {
            pending.get_or_insert(nal.start_code_offset);
            continue;
        }
        let header = parse_slice_header(nal, nal.payload(stream))?;
        let frame_type = match (nal.nal_unit_type, header.kind) {
            (NAL_IDR, _) => FrameType::Idr,
            (_, SliceKind::I) => FrameType::I,
            (_, SliceKind::P) => FrameType::P,
            (_, SliceKind::B) if nal.nal_ref_idc > 0 => FrameType::BRef,
            (_, SliceKind::B) => FrameType::BNonRef,
        };
        if header.first_mb_in_slice == 0 || frames.is_empty() {
            let start = pending.take().unwrap_or(nal.start_code_offset);
            if let Some(prev) = frames.last_mut() {
                prev.span.1 = start;
            }
            frames.push(CodedFrame {
                span: (start, stream.len()),
                frame_type,
                slices: 1,
            });
            kinds.push(header.kind);
        } else {
            pending = None;
            let n = frames.len();
            let frame = frames.last_mut().expect("non-empty");
            frame.slices += 1;
            if frame.slices == 2 {
                warnings.push(format!(
                    "frame {}: multiple slices per picture; treated as one desync unit",
                    n - 1
                ));
            }
            if kinds[n - 1] != header.kind {
                warnings.push(format!(
                    "frame {}: mixed slice types, keeping the first",
                    n - 1
                ));
            }
        }
    }
    if frames.is_empty() {
        return Err(Error::NoVclUnits);
    }
    Ok(frames)
}

/// Builds a trace from an Annex-B elementary stream.
///
/// Frame types come from the stream (IDR from the NAL type, B reference-ness
/// from `nal_ref_idc`); display order and references come from `structure`,
/// restarted at every IDR. Disagreements are recorded as warnings and the
/// stream's view wins.
pub fn build_trace(
    stream: &[u8],
    structure: &PredictionStructure,
    pack: PacketizationModel,
) -> Result<StreamTrace> {
    let units = split_annexb(stream)?;
    let mut warnings = Vec::new();
    let coded = group_frames(stream, &units, &mut warnings)?;

    let mut segments = Vec::new();
    let mut seg_start = 0;
    for (i, f) in coded.iter().enumerate() {
        if f.frame_type == FrameType::Idr && i > seg_start {
            segments.push(seg_start..i);
            seg_start = i;
        }
    }
    segments.push(seg_start..coded.len());

    let mut frames: Vec<FrameMeta> = Vec::with_capacity(coded.len());
    for seg in segments {
        let layout = structure.layout(seg.len());
        let base = seg.start;
        for slot in layout {
            let decode_index = base + slot.decode_index;
            let actual = coded[decode_index].frame_type;
            if actual != slot.frame_type {
                warnings.push(format!(
                    "frame {decode_index}: structure expects {}, stream has {actual}; stream type kept",
                    slot.frame_type
                ));
            }
            let mut refs: Vec<usize> = if actual.is_intra() {
                Vec::new()
            } else {
                slot.direct_refs.iter().map(|&r| base + r).collect()
            };
            let before = refs.len();
            refs.retain(|&r| frames[r].frame_type.is_reference());
            if refs.len() != before {
                warnings.push(format!(
                    "frame {decode_index}: dropped references to non-reference frames"
                ));
            }
            if refs.is_empty() && !actual.is_intra() {
                if let Some(prev) = (base..decode_index)
                    .rev()
                    .find(|&r| frames[r].frame_type.is_reference())
                {
                    refs.push(prev);
                }
            }
            frames.push(FrameMeta {
                decode_index,
                display_index: base + slot.display_index,
                frame_type: actual,
                direct_refs: refs,
            });
        }
    }

    let mut packets = Vec::new();
    for (f, frame) in coded.iter().enumerate() {
        for (k, size) in pack.split(frame.len()).into_iter().enumerate() {
            packets.push(PacketRecord {
                global_index: packets.len(),
                frame_decode_index: f,
                index_in_frame: k + 1,
                size_octets: size,
                lost: false,
            });
        }
    }

    let mut trace = StreamTrace::new(frames, packets);
    trace.structure = Some(structure.clone());
    for v in validate_trace(&trace) {
        warnings.push(format!("validation: {v}"));
    }
    trace.warnings = warnings;
    Ok(trace)
}
