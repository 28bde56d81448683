//! Declarative GOP patterns and their expansion into frame metadata.
//!
//! A pattern lists one slot per display position of a closed structure. Each
//! slot carries a frame type and the display positions it predicts from.
//! Expanding a pattern over `n` frames yields [`FrameMeta`] in decoding order:
//! inside a window, a frame is decoded as soon as all its references are,
//! lowest display position first.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trace::{FrameMeta, FrameType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureName {
    /// I P P P ...
    Ipp,
    /// I B B P B B P ... with non-reference B frames.
    Ibbp,
    /// I B2 B1 B2 P ... where B1 is a reference for the B2 frames around it.
    HierB2B1B2P,
    Custom,
}

impl StructureName {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureName::Ipp => "ipp",
            StructureName::Ibbp => "ibbp",
            StructureName::HierB2B1B2P => "hier",
            StructureName::Custom => "custom",
        }
    }
}

impl fmt::Display for StructureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StructureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipp" => Ok(StructureName::Ipp),
            "ibbp" => Ok(StructureName::Ibbp),
            "hier" | "ib2b1b2p" | "hier_b2b1b2p" => Ok(StructureName::HierB2B1B2P),
            other => Err(Error::InvalidParams(format!("unknown structure `{other}`"))),
        }
    }
}

/// One display position of a pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSlot {
    pub frame_type: FrameType,
    /// Display positions (within the window) this slot predicts from.
    pub refs: Vec<usize>,
}

impl PatternSlot {
    fn new(frame_type: FrameType, refs: Vec<usize>) -> Self {
        Self { frame_type, refs }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionStructure {
    name: StructureName,
    pattern: Vec<PatternSlot>,
}

impl PredictionStructure {
    pub fn new(name: StructureName, period: usize) -> Result<Self> {
        match name {
            StructureName::Ipp => Self::ipp(period),
            StructureName::Ibbp => Self::ibbp(period),
            StructureName::HierB2B1B2P => Self::hierarchical(period),
            StructureName::Custom => Err(Error::InvalidParams(
                "custom structures need an explicit pattern".into(),
            )),
        }
    }

    pub fn ipp(period: usize) -> Result<Self> {
        check_period(period)?;
        let mut pattern = vec![PatternSlot::new(FrameType::Idr, vec![])];
        pattern.extend((1..period).map(|d| PatternSlot::new(FrameType::P, vec![d - 1])));
        Ok(Self {
            name: StructureName::Ipp,
            pattern,
        })
    }

    pub fn ibbp(period: usize) -> Result<Self> {
        check_period(period)?;
        let mut pattern = vec![PatternSlot::new(FrameType::Idr, vec![])];
        let mut anchor = 0;
        while pattern.len() < period + 3 {
            let next = anchor + 3;
            pattern.push(PatternSlot::new(FrameType::BNonRef, vec![anchor, next]));
            pattern.push(PatternSlot::new(FrameType::BNonRef, vec![anchor, next]));
            pattern.push(PatternSlot::new(FrameType::P, vec![anchor]));
            anchor = next;
        }
        Ok(Self {
            name: StructureName::Ibbp,
            pattern: truncate_pattern(&pattern, period),
        })
    }

    pub fn hierarchical(period: usize) -> Result<Self> {
        check_period(period)?;
        let mut pattern = vec![PatternSlot::new(FrameType::Idr, vec![])];
        let mut anchor = 0;
        while pattern.len() < period + 4 {
            let mid = anchor + 2;
            let next = anchor + 4;
            pattern.push(PatternSlot::new(FrameType::BNonRef, vec![anchor, mid]));
            pattern.push(PatternSlot::new(FrameType::BRef, vec![anchor, next]));
            pattern.push(PatternSlot::new(FrameType::BNonRef, vec![mid, next]));
            pattern.push(PatternSlot::new(FrameType::P, vec![anchor]));
            anchor = next;
        }
        Ok(Self {
            name: StructureName::HierB2B1B2P,
            pattern: truncate_pattern(&pattern, period),
        })
    }

    /// A user supplied pattern. Slot 0 must be an IDR without references,
    /// references must stay inside the pattern, never target a non-reference
    /// slot and must not form cycles.
    pub fn custom(pattern: Vec<PatternSlot>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        match pattern.first() {
            None => return bad("empty pattern".into()),
            Some(s) if s.frame_type != FrameType::Idr || !s.refs.is_empty() => {
                return bad("slot 0 must be an IDR without references".into())
            }
            _ => {}
        }
        for (pos, slot) in pattern.iter().enumerate() {
            if pos > 0 && slot.frame_type == FrameType::Idr {
                return bad(format!("slot {pos}: IDR only allowed at slot 0"));
            }
            if slot.frame_type.is_intra() && !slot.refs.is_empty() {
                return bad(format!("slot {pos}: intra slot with references"));
            }
            for &r in &slot.refs {
                if r >= pattern.len() || r == pos {
                    return bad(format!("slot {pos}: reference {r} out of range"));
                }
                if !pattern[r].frame_type.is_reference() {
                    return bad(format!("slot {pos}: reference {r} is a non-reference slot"));
                }
            }
        }
        if decode_order(&pattern).is_none() {
            return bad("pattern references form a cycle".into());
        }
        Ok(Self {
            name: StructureName::Custom,
            pattern,
        })
    }

    pub fn name(&self) -> StructureName {
        self.name
    }

    pub fn period(&self) -> usize {
        self.pattern.len()
    }

    pub fn pattern(&self) -> &[PatternSlot] {
        &self.pattern
    }

    /// Frame metadata for `n_frames` frames in decoding order. The sequence is
    /// cut into closed windows of `period` frames; a shorter final window is
    /// truncated like [`truncate_pattern`].
    pub fn layout(&self, n_frames: usize) -> Vec<FrameMeta> {
        let mut out = Vec::with_capacity(n_frames);
        let mut start = 0;
        while start < n_frames {
            let len = self.period().min(n_frames - start);
            let window = if len == self.period() {
                self.pattern.clone()
            } else {
                truncate_pattern(&self.pattern, len)
            };
            let order = decode_order(&window).expect("validated pattern is acyclic");
            let mut decode_of = vec![0; len];
            for (k, &disp) in order.iter().enumerate() {
                decode_of[disp] = start + k;
            }
            for (k, &disp) in order.iter().enumerate() {
                let slot = &window[disp];
                out.push(FrameMeta {
                    decode_index: start + k,
                    display_index: start + disp,
                    frame_type: slot.frame_type,
                    direct_refs: slot.refs.iter().map(|&r| decode_of[r]).collect(),
                });
            }
            start += len;
        }
        out
    }
}

fn check_period(period: usize) -> Result<()> {
    if period == 0 {
        return Err(Error::InvalidParams("period must be at least 1".into()));
    }
    Ok(())
}

/// Keeps the first `len` slots. Any slot whose references fall outside the
/// kept range becomes a P frame predicting from the nearest preceding
/// reference slot.
pub fn truncate_pattern(pattern: &[PatternSlot], len: usize) -> Vec<PatternSlot> {
    let mut out: Vec<PatternSlot> = pattern[..len].to_vec();
    for pos in 0..len {
        if out[pos].refs.iter().any(|&r| r >= len) {
            let prev_ref = (0..pos)
                .rev()
                .find(|&r| out[r].frame_type.is_reference())
                .expect("slot 0 is always a reference");
            out[pos] = PatternSlot::new(FrameType::P, vec![prev_ref]);
        }
    }
    out
}

/// Display positions in decoding order, or `None` on a reference cycle.
fn decode_order(pattern: &[PatternSlot]) -> Option<Vec<usize>> {
    let n = pattern.len();
    let mut pending: Vec<usize> = pattern.iter().map(|s| s.refs.len()).collect();
    let mut users = vec![Vec::new(); n];
    for (pos, slot) in pattern.iter().enumerate() {
        for &r in &slot.refs {
            users[r].push(pos);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&p| pending[p] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(pos) = ready.pop_first() {
        order.push(pos);
        for &u in &users[pos] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.insert(u);
            }
        }
    }
    (order.len() == n).then_some(order)
}
