//! No-reference XLR estimation from a packet trace.
//!
//! A lost packet desynchronizes the decoder until the next NAL unit, so it
//! impairs the share of its frame carried by itself and every later packet of
//! that frame. Only the first lost packet of a frame matters. The impaired
//! share propagates unchanged to every frame that depends on the damaged one,
//! and overlapping impairments are counted once: a frame's estimate is the
//! largest share among the losses in itself and its ancestors.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{FrameMeta, FrameType, PacketRecord, Provenance, StreamTrace, XlrSeries};

/// Impaired share of a frame when packet `lost_index_in_frame` (1-based) is
/// the first one lost: the size of that packet and all later ones over the
/// frame total.
pub fn xi_for_loss<T: Scalar>(
    frame_packets: &[PacketRecord],
    lost_index_in_frame: usize,
) -> Result<T> {
    let sizes: Vec<u64> = frame_packets.iter().map(|p| p.size_octets).collect();
    xi_from_sizes(&sizes, lost_index_in_frame)
}

pub fn xi_from_sizes<T: Scalar>(sizes: &[u64], lost_index_in_frame: usize) -> Result<T> {
    if sizes.is_empty() {
        return Err(Error::EmptyPacketList);
    }
    if lost_index_in_frame == 0 || lost_index_in_frame > sizes.len() {
        return Err(Error::IndexOutOfRange {
            index: lost_index_in_frame,
            len: sizes.len(),
        });
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidParams(
            "packet sizes must be at least 1".into(),
        ));
    }
    let total: u64 = sizes.iter().sum();
    let suffix: u64 = sizes[lost_index_in_frame - 1..].iter().sum();
    Ok(T::from_count(suffix) / T::from_count(total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossImpact<T> {
    pub packet: PacketRecord,
    /// Impaired share of the owning frame; zero when not effective.
    pub xi: T,
    /// False when an earlier loss in the same frame already desynchronized it.
    pub effective: bool,
}

/// One impact per lost packet, in trace order.
pub fn effective_losses<T: Scalar>(trace: &StreamTrace) -> Result<Vec<LossImpact<T>>> {
    trace.ensure_valid()?;
    let by_frame = trace.packets_by_frame();
    let mut impacts = Vec::new();
    for packets in &by_frame {
        let sizes: Vec<u64> = packets.iter().map(|p| p.size_octets).collect();
        let mut seen_loss = false;
        for p in packets.iter().filter(|p| p.lost) {
            let (xi, effective) = if seen_loss {
                (T::zero(), false)
            } else {
                (xi_from_sizes(&sizes, p.index_in_frame)?, true)
            };
            seen_loss = true;
            impacts.push(LossImpact {
                packet: **p,
                xi,
                effective,
            });
        }
    }
    Ok(impacts)
}

/// Ancestors of every frame inside its closed IDR window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyClosure {
    ancestors: Vec<BTreeSet<usize>>,
}

impl DependencyClosure {
    pub fn ancestors(&self, frame: usize) -> &BTreeSet<usize> {
        &self.ancestors[frame]
    }

    pub fn len(&self) -> usize {
        self.ancestors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ancestors.is_empty()
    }
}

/// Transitive closure over `direct_refs`, never crossing an IDR.
///
/// Frames are addressed by their position in `frames`. References naming a
/// frame before the window's IDR (or an unknown frame) are ignored. Cyclic
/// references are reported as an error.
pub fn dependency_closure(frames: &[FrameMeta]) -> Result<DependencyClosure> {
    let position: HashMap<usize, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.decode_index, i))
        .collect();
    let mut window_start = vec![0usize; frames.len()];
    let mut start = 0;
    for (i, f) in frames.iter().enumerate() {
        if f.frame_type == FrameType::Idr {
            start = i;
        }
        window_start[i] = start;
    }
    let edges: Vec<Vec<usize>> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.frame_type == FrameType::Idr {
                return Vec::new();
            }
            f.direct_refs
                .iter()
                .filter_map(|r| position.get(r).copied())
                .filter(|&r| window_start[r] == window_start[i])
                .collect()
        })
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; frames.len()];
    let mut ancestors: Vec<Option<BTreeSet<usize>>> = vec![None; frames.len()];
    for root in 0..frames.len() {
        if mark[root] == Mark::Done {
            continue;
        }
        // iterative post-order DFS
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some((node, next)) = stack.pop() {
            if let Some(&child) = edges[node].get(next) {
                stack.push((node, next + 1));
                match mark[child] {
                    Mark::New => {
                        mark[child] = Mark::Active;
                        stack.push((child, 0));
                    }
                    Mark::Active => {
                        return Err(Error::DependencyCycle {
                            frame: frames[child].decode_index,
                        })
                    }
                    Mark::Done => {}
                }
                continue;
            }
            let mut set = BTreeSet::new();
            for &child in &edges[node] {
                set.insert(frames[child].decode_index);
                set.extend(
                    ancestors[child]
                        .as_ref()
                        .expect("child finished")
                        .iter()
                        .copied(),
                );
            }
            ancestors[node] = Some(set);
            mark[node] = Mark::Done;
        }
    }
    Ok(DependencyClosure {
        ancestors: ancestors
            .into_iter()
            .map(|a| a.unwrap_or_default())
            .collect(),
    })
}

/// Impaired share caused by each frame's own effective loss (zero if none).
/// A frame without any packet counts as lost from its first packet.
pub fn own_impairment<T: Scalar>(trace: &StreamTrace) -> Result<Vec<T>> {
    let mut own = vec![T::zero(); trace.frames.len()];
    for (f, packets) in trace.packets_by_frame().iter().enumerate() {
        if packets.is_empty() {
            own[f] = T::one();
        }
    }
    for impact in effective_losses::<T>(trace)? {
        if impact.effective {
            own[impact.packet.frame_decode_index] = impact.xi;
        }
    }
    Ok(own)
}

/// Per-frame XLR estimate in decoding order with pooled values.
pub fn estimate_xlr<T: Scalar>(trace: &StreamTrace) -> Result<XlrSeries<T>> {
    let own = own_impairment::<T>(trace)?;
    let closure = dependency_closure(&trace.frames)?;
    let per_frame = (0..trace.frames.len())
        .map(|f| {
            let inherited = closure
                .ancestors(f)
                .iter()
                .map(|&a| own[a])
                .fold(T::zero(), T::max);
            (trace.frames[f].decode_index, own[f].max(inherited))
        })
        .collect();
    XlrSeries::from_frames(per_frame, Provenance::Nr)
}
