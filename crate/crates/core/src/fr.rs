//! Full-reference XLR with temporal pooling, plus a PSNR baseline.

use std::fmt;
use std::io::{ErrorKind, Read};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{FramePlane, Provenance, XlrSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonMode {
    /// Any difference counts.
    Exact,
    /// Only differences of at least `threshold_q` count.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrComparisonConfig {
    mode: ComparisonMode,
    threshold_q: u8,
}

impl Default for FrComparisonConfig {
    fn default() -> Self {
        Self::exact()
    }
}

impl FrComparisonConfig {
    pub const DEFAULT_Q: u8 = 16;

    pub fn exact() -> Self {
        Self {
            mode: ComparisonMode::Exact,
            threshold_q: Self::DEFAULT_Q,
        }
    }

    pub fn threshold(q: u8) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParams(
                "threshold Q must be in 1..=255".into(),
            ));
        }
        Ok(Self {
            mode: ComparisonMode::Threshold,
            threshold_q: q,
        })
    }

    pub fn mode(&self) -> ComparisonMode {
        self.mode
    }

    pub fn threshold_q(&self) -> u8 {
        self.threshold_q
    }

    /// Smallest absolute difference that counts as impaired.
    fn min_difference(&self) -> u8 {
        match self.mode {
            ComparisonMode::Exact => 1,
            ComparisonMode::Threshold => self.threshold_q,
        }
    }
}

/// Exact impaired pixel count over a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImpairedFraction {
    pub impaired: u64,
    pub total: u64,
}

impl ImpairedFraction {
    pub fn to_scalar<T: Scalar>(self) -> T {
        T::from_count(self.impaired) / T::from_count(self.total)
    }
}

/// Counts impaired pixels. Integer only; the division happens once in
/// [`ImpairedFraction::to_scalar`].
pub fn impaired_pixels(
    original: &FramePlane,
    distorted: &FramePlane,
    config: FrComparisonConfig,
) -> Result<ImpairedFraction> {
    original.check_same_shape(distorted)?;
    let q = config.min_difference();
    let impaired = original
        .samples()
        .iter()
        .zip(distorted.samples())
        .filter(|(&o, &d)| o.abs_diff(d) >= q)
        .count() as u64;
    Ok(ImpairedFraction {
        impaired,
        total: original.pixel_count() as u64,
    })
}

pub fn xlr_frame<T: Scalar>(
    original: &FramePlane,
    distorted: &FramePlane,
    config: FrComparisonConfig,
) -> Result<T> {
    Ok(impaired_pixels(original, distorted, config)?.to_scalar())
}

/// PSNR in dB; identical frames have no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Psnr<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl<T: Scalar> fmt::Display for Psnr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn psnr_frame<T: Scalar>(original: &FramePlane, distorted: &FramePlane) -> Result<Psnr<T>> {
    original.check_same_shape(distorted)?;
    let sse: u64 = original
        .samples()
        .iter()
        .zip(distorted.samples())
        .map(|(&o, &d)| {
            let e = o.abs_diff(d) as u64;
            e * e
        })
        .sum();
    if sse == 0 {
        return Ok(Psnr::Infinite);
    }
    let mse = T::from_count(sse) / T::from_count(original.pixel_count() as u64);
    let peak = T::from_count(255 * 255);
    Ok(Psnr::Finite(T::from_count(10) * (peak / mse).log10()))
}

/// Arithmetic mean of per-frame XLR.
pub fn pool_mxlr<T: Scalar>(series: &[T]) -> Result<T> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sum: T = series.iter().copied().sum();
    Ok(sum / T::from_count(series.len() as u64))
}

/// Mean of per-frame square roots.
pub fn pool_msxlr<T: Scalar>(series: &[T]) -> Result<T> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some((index, v)) = series.iter().enumerate().find(|(_, v)| **v < T::zero()) {
        return Err(Error::NegativeValue {
            index,
            value: v.to_f64_lossy(),
        });
    }
    let sum: T = series.iter().map(|v| v.sqrt()).sum();
    Ok(sum / T::from_count(series.len() as u64))
}

/// Per-frame XLR over two frame streams plus pooling.
///
/// Both inputs yield frames (or read errors) in the same order; the streams
/// must have equal length.
pub fn xlr_sequence<T, A, B>(
    original: A,
    distorted: B,
    config: FrComparisonConfig,
) -> Result<XlrSeries<T>>
where
    T: Scalar,
    A: IntoIterator<Item = Result<FramePlane>>,
    B: IntoIterator<Item = Result<FramePlane>>,
{
    let mut orig = original.into_iter();
    let mut dist = distorted.into_iter();
    let mut per_frame = Vec::new();
    loop {
        match (orig.next().transpose()?, dist.next().transpose()?) {
            (Some(o), Some(d)) => {
                per_frame.push((per_frame.len(), xlr_frame(&o, &d, config)?));
            }
            (None, None) => break,
            (o, d) => {
                let n = per_frame.len();
                let extra_o = count_rest(o, &mut orig)?;
                let extra_d = count_rest(d, &mut dist)?;
                return Err(Error::FrameCountMismatch {
                    original: n + extra_o,
                    distorted: n + extra_d,
                });
            }
        }
    }
    XlrSeries::from_frames(per_frame, Provenance::Fr)
}

fn count_rest<I: Iterator<Item = Result<FramePlane>>>(
    head: Option<FramePlane>,
    rest: &mut I,
) -> Result<usize> {
    match head {
        Some(_) => rest.try_fold(1, |acc, f| f.map(|_| acc + 1)),
        None => Ok(0),
    }
}

/// Frame-sequential planar 8-bit luma reader. Dimensions come from the caller.
pub struct RawLumaReader<R> {
    inner: R,
    width: usize,
    height: usize,
    offset: u64,
    done: bool,
}

impl<R: Read> RawLumaReader<R> {
    pub fn new(inner: R, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParams(format!("frame size {width}x{height}")));
        }
        Ok(Self {
            inner,
            width,
            height,
            offset: 0,
            done: false,
        })
    }

    fn frame_bytes(&self) -> usize {
        self.width * self.height
    }

    fn read_frame(&mut self) -> Result<Option<FramePlane>> {
        let size = self.frame_bytes();
        let mut buf = vec![0u8; size];
        let mut filled = 0;
        while filled < size {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
        if filled == 0 {
            return Ok(None);
        }
        if filled < size {
            return Err(Error::Truncated {
                offset: self.offset,
                remaining: filled,
                frame_bytes: size,
            });
        }
        self.offset += size as u64;
        FramePlane::new(self.width, self.height, buf).map(Some)
    }
}

impl<R: Read> Iterator for RawLumaReader<R> {
    type Item = Result<FramePlane>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.read_frame().transpose();
        if !matches!(r, Some(Ok(_))) {
            self.done = true;
        }
        r
    }
}
