//! CSV form of an [`XlrSeries`].
//!
//! ```text
//! # provenance: nr
//! decode_index,xlr
//! 0,0
//! 1,0.25
//! mxlr,msxlr
//! 0.125,0.25
//! ```
//!
//! Values are written in shortest round-trip form. When reading, the pooled
//! trailer is recomputed from the rows and checked against the stored values.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{Provenance, XlrSeries};

pub const SERIES_HEADER: &str = "decode_index,xlr";
pub const POOLED_HEADER: &str = "mxlr,msxlr";

pub fn write_series<T: Scalar>(series: &XlrSeries<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# provenance: {}", series.provenance.as_str());
    let _ = writeln!(out, "{SERIES_HEADER}");
    for (i, x) in &series.per_frame {
        let _ = writeln!(out, "{i},{x}");
    }
    let _ = writeln!(out, "{POOLED_HEADER}");
    let _ = writeln!(out, "{},{}", series.mxlr, series.msxlr);
    out
}

/// Reads a series; `fallback` is used when no provenance comment is present.
pub fn parse_series<T: Scalar>(text: &str, fallback: Provenance) -> Result<XlrSeries<T>> {
    let mut provenance = fallback;
    let mut rows = Vec::new();
    let mut pooled: Option<(T, T)> = None;
    let mut state = 0u8;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(p) = c.trim().strip_prefix("provenance:") {
                provenance = p
                    .trim()
                    .parse()
                    .map_err(|e: String| Error::parse(line_no, e))?;
            }
            continue;
        }
        match state {
            0 if line == SERIES_HEADER => state = 1,
            0 => return Err(Error::parse(line_no, format!("expected `{SERIES_HEADER}`"))),
            1 if line == POOLED_HEADER => state = 2,
            1 => {
                let (i, x) = split_pair(line, line_no)?;
                let i = i
                    .parse::<usize>()
                    .map_err(|_| Error::parse(line_no, format!("bad decode index `{i}`")))?;
                rows.push((i, value::<T>(x, line_no)?));
            }
            2 => {
                let (a, b) = split_pair(line, line_no)?;
                pooled = Some((value(a, line_no)?, value(b, line_no)?));
                state = 3;
            }
            _ => return Err(Error::parse(line_no, "content after pooled values")),
        }
    }
    let series = XlrSeries::from_frames(rows, provenance)?;
    if let Some((m, s)) = pooled {
        let tol = T::from_f64_lossy(1e-9);
        if (m - series.mxlr).abs() > tol || (s - series.msxlr).abs() > tol {
            return Err(Error::Inconsistent(format!(
                "stored pooled values ({m}, {s}) disagree with rows ({}, {})",
                series.mxlr, series.msxlr
            )));
        }
    }
    Ok(series)
}

fn split_pair(line: &str, line_no: usize) -> Result<(&str, &str)> {
    let mut it = line.split(',');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a.trim(), b.trim())),
        _ => Err(Error::parse(line_no, "expected two comma-separated fields")),
    }
}

fn value<T: Scalar>(s: &str, line_no: usize) -> Result<T> {
    let v: T = s
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line_no, format!("non-finite value `{s}`")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_layout() {
        let s = XlrSeries::from_frames(vec![(0, 0.0), (1, 0.25)], Provenance::Nr).unwrap();
        let text = write_series(&s);
        assert_eq!(
            text,
            "# provenance: nr\ndecode_index,xlr\n0,0\n1,0.25\nmxlr,msxlr\n0.125,0.25\n"
        );
        let back: XlrSeries<f64> = parse_series(&text, Provenance::Fr).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn trailer_is_optional_but_checked() {
        let s: XlrSeries<f64> =
            parse_series("decode_index,xlr\n0,0.5\n", Provenance::Oracle).unwrap();
        assert_eq!(s.provenance, Provenance::Oracle);
        assert_eq!(s.mxlr, 0.5);
        let bad = "decode_index,xlr\n0,0.5\nmxlr,msxlr\n0.4,0.7071067811865476\n";
        assert!(matches!(
            parse_series::<f64>(bad, Provenance::Fr),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn rejects_malformed() {
        for text in [
            "",
            "x,y\n",
            "decode_index,xlr\n0\n",
            "decode_index,xlr\n0,abc\n",
            "decode_index,xlr\n0,NaN\n",
            "decode_index,xlr\n0,-1\n",
            "decode_index,xlr\n0,1\nmxlr,msxlr\n1,1\n1,1\n",
        ] {
            assert!(
                parse_series::<f64>(text, Provenance::Fr).is_err(),
                "{text:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(values in prop::collection::vec(0.0f64..=1.0, 1..200)) {
            let rows = values.iter().copied().enumerate().collect();
            let s = XlrSeries::from_frames(rows, Provenance::Fr).unwrap();
            let back: XlrSeries<f64> = parse_series(&write_series(&s), Provenance::Nr).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
