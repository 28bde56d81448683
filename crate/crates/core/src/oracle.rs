//! Brute-force pixel propagation ground truth.
//!
//! Every frame owns a boolean impairment mask. A frame's mask is the union of
//! its references' masks copied in place (zero motion) plus, when it has an
//! effective loss, the raster-order suffix from the first pixel carried by the
//! lost packet to the end of the frame. Nothing here goes through the
//! estimator: the effective loss and its pixel count are derived directly
//! from the packet sizes with integer arithmetic.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{FrameType, Provenance, StreamTrace, XlrSeries};

/// Per-frame impaired pixel grid, stored as a packed bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl LossMask {
    pub fn new(width: usize, height: usize) -> Self {
        let len = width * height;
        Self {
            width,
            height,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        let bit = 1u64 << (idx % 64);
        if value {
            self.words[idx / 64] |= bit;
        } else {
            self.words[idx / 64] &= !bit;
        }
    }

    pub fn count_impaired(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn union_with(&mut self, other: &LossMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Marks the last `count` pixels in raster order.
    pub fn mark_suffix(&mut self, count: usize) {
        let len = self.len();
        let start = len - count.min(len);
        if start == len {
            return;
        }
        let (first_word, first_bit) = (start / 64, start % 64);
        self.words[first_word] |= !0u64 << first_bit;
        for w in &mut self.words[first_word + 1..] {
            *w = !0;
        }
        self.clear_tail();
    }

    fn clear_tail(&mut self) {
        let rem = self.len() % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Clean pixels with at least one impaired 4-neighbour.
    fn boundary(&self) -> LossMask {
        let mut out = LossMask::new(self.width, self.height);
        for idx in self.iter_impaired() {
            let (x, y) = (idx % self.width, idx / self.width);
            if x > 0 {
                out.set(idx - 1, true);
            }
            if x + 1 < self.width {
                out.set(idx + 1, true);
            }
            if y > 0 {
                out.set(idx - self.width, true);
            }
            if y + 1 < self.height {
                out.set(idx + self.width, true);
            }
        }
        for (o, s) in out.words.iter_mut().zip(&self.words) {
            *o &= !s;
        }
        out
    }

    pub fn iter_impaired(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// Writes the mask as a binary PGM (0 clean, 255 impaired).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = (0..self.len())
            .map(|i| if self.get(i) { 255 } else { 0 })
            .collect();
        out.write_all(&bytes)
    }
}

/// Random perturbation of propagated impairment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    heal_rate: f64,
    grow_rate: f64,
    rng_seed: u64,
}

impl DriftConfig {
    pub fn new(heal_rate: f64, grow_rate: f64, rng_seed: u64) -> Result<Self> {
        for (name, v) in [("heal_rate", heal_rate), ("grow_rate", grow_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            heal_rate,
            grow_rate,
            rng_seed,
        })
    }

    pub fn none() -> Self {
        Self {
            heal_rate: 0.0,
            grow_rate: 0.0,
            rng_seed: 0,
        }
    }

    pub fn heal_rate(&self) -> f64 {
        self.heal_rate
    }

    pub fn grow_rate(&self) -> f64 {
        self.grow_rate
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    fn is_identity(&self) -> bool {
        self.heal_rate == 0.0 && self.grow_rate == 0.0
    }
}

/// Oracle output: the series plus every frame's final mask.
#[derive(Debug, Clone)]
pub struct OracleRun<T> {
    pub series: XlrSeries<T>,
    pub masks: Vec<LossMask>,
}

/// Pixel count of the suffix impaired by losing packet `first_lost` (0-based)
/// of a frame with the given packet sizes, rounded half up.
fn suffix_pixels(sizes: &[u64], first_lost: usize, pixels: u64) -> usize {
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    let suffix: u128 = sizes[first_lost..].iter().map(|&s| s as u128).sum();
    ((2 * suffix * pixels as u128 + total) / (2 * total)) as usize
}

/// Per-frame count of pixels impaired by the frame's own first loss.
fn own_suffixes(trace: &StreamTrace, pixels: u64) -> Vec<usize> {
    let mut sizes: Vec<Vec<u64>> = vec![Vec::new(); trace.frames.len()];
    let mut first_lost: Vec<Option<usize>> = vec![None; trace.frames.len()];
    for p in &trace.packets {
        let f = p.frame_decode_index;
        if p.lost && first_lost[f].is_none() {
            first_lost[f] = Some(sizes[f].len());
        }
        sizes[f].push(p.size_octets);
    }
    sizes
        .iter()
        .zip(&first_lost)
        .map(|(s, lost)| match (s.is_empty(), lost) {
            (true, _) => pixels as usize,
            (false, Some(k)) => suffix_pixels(s, *k, pixels),
            (false, None) => 0,
        })
        .collect()
}

pub fn simulate_exact<T: Scalar>(
    trace: &StreamTrace,
    width: usize,
    height: usize,
) -> Result<XlrSeries<T>> {
    Ok(run(trace, width, height, DriftConfig::none(), false)?.series)
}

pub fn simulate_drift<T: Scalar>(
    trace: &StreamTrace,
    width: usize,
    height: usize,
    drift: DriftConfig,
) -> Result<XlrSeries<T>> {
    Ok(run(trace, width, height, drift, false)?.series)
}

/// Like [`simulate_drift`] but keeps every mask for inspection.
pub fn simulate_with_masks<T: Scalar>(
    trace: &StreamTrace,
    width: usize,
    height: usize,
    drift: DriftConfig,
) -> Result<OracleRun<T>> {
    run(trace, width, height, drift, true)
}

fn run<T: Scalar>(
    trace: &StreamTrace,
    width: usize,
    height: usize,
    drift: DriftConfig,
    keep_masks: bool,
) -> Result<OracleRun<T>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParams(format!("frame size {width}x{height}")));
    }
    trace.ensure_valid()?;
    let pixels = (width * height) as u64;
    let own = own_suffixes(trace, pixels);
    let mut rng = ChaCha8Rng::seed_from_u64(drift.rng_seed);
    let heal = sampler(drift.heal_rate)?;
    let grow = sampler(drift.grow_rate)?;

    // masks of the current IDR window, indexed by decode position
    let mut masks: Vec<LossMask> = Vec::with_capacity(trace.frames.len());
    let mut per_frame = Vec::with_capacity(trace.frames.len());
    let mut window_start = 0;
    let mut kept = Vec::new();
    for (f, frame) in trace.frames.iter().enumerate() {
        if frame.frame_type == FrameType::Idr {
            if keep_masks {
                kept.append(&mut masks);
            } else {
                masks.clear();
            }
            window_start = f;
        }
        let mut mask = LossMask::new(width, height);
        for &r in &frame.direct_refs {
            mask.union_with(&masks[r - window_start]);
        }
        if !drift.is_identity() && !frame.direct_refs.is_empty() {
            mask = perturb(&mask, &heal, &grow, &mut rng);
        }
        mask.mark_suffix(own[f]);
        per_frame.push((
            frame.decode_index,
            T::from_count(mask.count_impaired()) / T::from_count(pixels),
        ));
        masks.push(mask);
    }
    kept.append(&mut masks);
    Ok(OracleRun {
        series: XlrSeries::from_frames(per_frame, Provenance::Oracle)?,
        masks: kept,
    })
}

/// Selects each candidate independently with a fixed probability by drawing
/// geometric gaps between selected candidates.
enum Sampler {
    Never,
    Always,
    Gaps(Geometric),
}

impl Sampler {
    fn gap<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            Sampler::Never => u64::MAX,
            Sampler::Always => 0,
            Sampler::Gaps(g) => g.sample(rng),
        }
    }

    /// Indices (into `candidates`) of the selected items.
    fn select<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::new();
        let mut pos = self.gap(rng);
        while pos < count as u64 {
            out.push(pos as usize);
            pos = pos.saturating_add(1).saturating_add(self.gap(rng));
        }
        out
    }
}

fn sampler(p: f64) -> Result<Sampler> {
    Ok(if p <= 0.0 {
        Sampler::Never
    } else if p >= 1.0 {
        Sampler::Always
    } else {
        Sampler::Gaps(Geometric::new(p).map_err(|e| Error::InvalidParams(e.to_string()))?)
    })
}

/// One propagation hop of drift. Healing and growth are both decided from the
/// inherited mask.
fn perturb<R: Rng>(inherited: &LossMask, heal: &Sampler, grow: &Sampler, rng: &mut R) -> LossMask {
    let boundary = inherited.boundary();
    let impaired: Vec<usize> = inherited.iter_impaired().collect();
    let candidates: Vec<usize> = boundary.iter_impaired().collect();
    let mut out = inherited.clone();
    for k in heal.select(impaired.len(), rng) {
        out.set(impaired[k], false);
    }
    for k in grow.select(candidates.len(), rng) {
        out.set(candidates[k], true);
    }
    out
}
