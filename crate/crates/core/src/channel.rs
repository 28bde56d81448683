//! Simplified Gilbert loss channel: Good always delivers, Bad always drops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::StreamTrace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GilbertParams {
    /// Target long-run loss fraction.
    pub plr: f64,
    /// Expected number of consecutive losses.
    pub mean_burst_len: f64,
    pub rng_seed: u64,
}

/// Burst length used by the reference experiment grid.
pub const PRESET_BURST_LEN: f64 = 2.0;
/// Loss rates of the reference experiment grid.
pub const PRESET_PLRS: [f64; 3] = [0.001, 0.005, 0.01];

impl GilbertParams {
    pub fn new(plr: f64, mean_burst_len: f64, rng_seed: u64) -> Result<Self> {
        let p = Self {
            plr,
            mean_burst_len,
            rng_seed,
        };
        derive_transitions(&p)?;
        Ok(p)
    }

    /// The three reference presets with the given seed.
    pub fn presets(rng_seed: u64) -> Vec<Self> {
        PRESET_PLRS
            .iter()
            .map(|&plr| Self::new(plr, PRESET_BURST_LEN, rng_seed).expect("valid preset"))
            .collect()
    }
}

/// Transition probabilities `(good_to_bad, bad_to_good)`.
///
/// With `p_bg = 1/L` bursts have mean length `L`, and
/// `p_gb = plr / (L (1 - plr))` makes the stationary Bad probability `plr`.
pub fn derive_transitions(params: &GilbertParams) -> Result<(f64, f64)> {
    let GilbertParams {
        plr,
        mean_burst_len: len,
        ..
    } = *params;
    if !(0.0..1.0).contains(&plr) {
        return Err(Error::InvalidParams(format!("plr {plr} outside [0, 1)")));
    }
    if !len.is_finite() || len < 1.0 {
        return Err(Error::InvalidParams(format!(
            "mean burst length {len} below 1"
        )));
    }
    let p_bg = 1.0 / len;
    let p_gb = plr / (len * (1.0 - plr));
    if p_gb > 1.0 {
        return Err(Error::InvalidParams(format!(
            "plr {plr} with burst length {len} needs P(G->B) = {p_gb} > 1"
        )));
    }
    Ok((p_gb, p_bg))
}

/// The two-state chain as an infinite iterator of loss flags. Starts in Good
/// and steps once before every emitted packet.
#[derive(Debug, Clone)]
pub struct GilbertChain {
    p_gb: f64,
    p_bg: f64,
    bad: bool,
    rng: ChaCha8Rng,
}

impl GilbertChain {
    pub fn new(params: &GilbertParams) -> Result<Self> {
        let (p_gb, p_bg) = derive_transitions(params)?;
        Ok(Self {
            p_gb,
            p_bg,
            bad: false,
            rng: ChaCha8Rng::seed_from_u64(params.rng_seed),
        })
    }
}

impl Iterator for GilbertChain {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        let u: f64 = self.rng.gen();
        self.bad = if self.bad {
            u >= self.p_bg
        } else {
            u < self.p_gb
        };
        Some(self.bad)
    }
}

/// Marks packets lost in global order. With `compose` the new losses are
/// added to existing ones; otherwise existing flags are replaced.
pub fn apply_channel(
    trace: &StreamTrace,
    params: &GilbertParams,
    compose: bool,
) -> Result<StreamTrace> {
    let chain = GilbertChain::new(params)?;
    let mut out = trace.clone();
    for (p, lost) in out.packets.iter_mut().zip(chain) {
        p.lost = lost || (compose && p.lost);
    }
    Ok(out)
}

/// Lengths of the runs of `true` in a loss pattern.
pub fn burst_lengths(losses: impl IntoIterator<Item = bool>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0;
    for l in losses {
        if l {
            run += 1;
        } else if run > 0 {
            out.push(run);
            run = 0;
        }
    }
    if run > 0 {
        out.push(run);
    }
    out
}
