//! Agreement statistics between an objective series and a reference series.
//! Correlation and error measures sit next to a least-squares cubic mapping
//! and the per-sequence report built from them.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::XlrSeries;

const REFINE_CAP: usize = 20;

/// `y ≈ c0 + c1 x + c2 x² + c3 x³`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicFit<T> {
    pub coefficients: [T; 4],
    pub residual_rmse: T,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> CubicFit<T> {
    pub fn predict(&self, x: T) -> T {
        let [c0, c1, c2, c3] = self.coefficients;
        ((c3 * x + c2) * x + c1) * x + c0
    }
}

fn check_pair<T>(a: &[T], b: &[T], needed: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: a.len(),
        });
    }
    Ok(())
}

/// Householder QR of a tall column-major matrix.
struct Qr<T> {
    cols: Vec<Vec<T>>,
    rdiag: Vec<T>,
}

impl<T: Scalar> Qr<T> {
    fn new(mut cols: Vec<Vec<T>>) -> Self {
        let m = cols.len();
        let mut rdiag = vec![T::zero(); m];
        for k in 0..m {
            let mut nrm = cols[k][k..].iter().fold(T::zero(), |acc, &v| acc.hypot(v));
            if nrm != T::zero() {
                if cols[k][k] < T::zero() {
                    nrm = -nrm;
                }
                for v in &mut cols[k][k..] {
                    *v = *v / nrm;
                }
                cols[k][k] = cols[k][k] + T::one();
                let (head, tail) = cols.split_at_mut(k + 1);
                let hk = &head[k];
                for cj in tail.iter_mut() {
                    let s: T = (k..hk.len()).map(|i| hk[i] * cj[i]).sum();
                    let s = -s / hk[k];
                    for i in k..hk.len() {
                        cj[i] = cj[i] + s * hk[i];
                    }
                }
            }
            rdiag[k] = -nrm;
        }
        Self { cols, rdiag }
    }

    fn full_rank(&self) -> bool {
        let big = self.rdiag.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        let tol = big * T::epsilon() * T::from_count(self.cols[0].len() as u64 * 16);
        self.rdiag.iter().all(|r| r.abs() > tol)
    }

    fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut b = rhs.to_vec();
        let m = self.cols.len();
        for k in 0..m {
            let h = &self.cols[k];
            let s: T = (k..b.len()).map(|i| h[i] * b[i]).sum();
            let s = -s / h[k];
            for i in k..b.len() {
                b[i] = b[i] + s * h[i];
            }
        }
        let mut x = b[..m].to_vec();
        for k in (0..m).rev() {
            x[k] = x[k] / self.rdiag[k];
            for i in 0..k {
                x[i] = x[i] - x[k] * self.cols[k][i];
            }
        }
        x
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Least-squares cubic mapping from `objective` to `subjective`.
///
/// Abscissae are centred and scaled before a Householder QR solve, followed
/// by iterative refinement on the residual. When fewer than four distinct
/// abscissae exist the polynomial degree drops to fit the data exactly.
pub fn fit_cubic<T: Scalar>(objective: &[T], subjective: &[T]) -> Result<CubicFit<T>> {
    check_pair(objective, subjective, 4)?;
    let x = objective;
    let y = subjective;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample"));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    sorted.dedup();
    if sorted.len() == 1 {
        return Err(Error::Degenerate("all objective values are equal"));
    }
    let n = T::from_count(x.len() as u64);
    let mu = x.iter().copied().sum::<T>() / n;
    let scale = x.iter().fold(T::zero(), |m, &v| m.max((v - mu).abs()));
    let t: Vec<T> = x.iter().map(|&v| (v - mu) / scale).collect();

    let mut degree = (sorted.len() - 1).min(3);
    let qr = loop {
        let cols: Vec<Vec<T>> = (0..=degree)
            .map(|k| t.iter().map(|&v| v.powi(k as i32)).collect())
            .collect();
        let qr = Qr::new(cols);
        if qr.full_rank() || degree == 1 {
            break qr;
        }
        degree -= 1;
    };

    let basis = |b: &[T], v: T| b.iter().rev().fold(T::zero(), |acc, &c| acc * v + c);
    let mut beta = qr.solve(y);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < REFINE_CAP {
        iterations += 1;
        let r: Vec<T> = t
            .iter()
            .zip(y)
            .map(|(&v, &yi)| yi - basis(&beta, v))
            .collect();
        let delta = qr.solve(&r);
        let dn = delta.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let bn = beta.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        for (b, d) in beta.iter_mut().zip(&delta) {
            *b = *b + *d;
        }
        if dn <= T::epsilon() * T::from_count(64) * (T::one() + bn) {
            converged = true;
            break;
        }
    }

    let mut coefficients = [T::zero(); 4];
    for (k, &bk) in beta.iter().enumerate() {
        let s = bk / scale.powi(k as i32);
        for (j, c) in coefficients.iter_mut().enumerate().take(k + 1) {
            *c = *c + s * T::from_count(binomial(k, j)) * (-mu).powi((k - j) as i32);
        }
    }
    let mut fit = CubicFit {
        coefficients,
        residual_rmse: T::zero(),
        converged,
        iterations,
    };
    let predicted: Vec<T> = x.iter().map(|&v| fit.predict(v)).collect();
    fit.residual_rmse = rmse(&predicted, y)?;
    Ok(fit)
}

fn is_constant<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Sample Pearson correlation.
pub fn pcc<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b, 2)?;
    if is_constant(a) || is_constant(b) {
        return Err(Error::ZeroVariance);
    }
    let n = T::from_count(a.len() as u64);
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    let r = sab / (saa * sbb).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks, tied values sharing the mean of their positions.
pub fn average_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = T::from_count((start + end + 1) as u64) / T::from_count(2);
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn srocc<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b, 2)?;
    pcc(&average_ranks(a), &average_ranks(b))
}

pub fn rmse<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b, 1)?;
    let ss: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok((ss / T::from_count(a.len() as u64)).sqrt())
}

pub fn mae<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b, 1)?;
    let s: T = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(s / T::from_count(a.len() as u64))
}

/// Frame-to-frame comparison of a measured and an estimated series.
///
/// `pcc` and `srocc` are `None` when either series is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub real_mxlr: T,
    pub est_mxlr: T,
    pub real_msxlr: T,
    pub est_msxlr: T,
    pub mae: T,
    pub pcc: Option<T>,
    pub srocc: Option<T>,
    pub frames: usize,
}

fn optional<T: Scalar>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroVariance | Error::TooFewSamples { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate_pair<T: Scalar>(
    real: &XlrSeries<T>,
    estimated: &XlrSeries<T>,
) -> Result<EvalReport<T>> {
    if real.len() != estimated.len() {
        return Err(Error::LengthMismatch {
            left: real.len(),
            right: estimated.len(),
        });
    }
    if let Some(((i, _), (j, _))) = real
        .per_frame
        .iter()
        .zip(&estimated.per_frame)
        .find(|((i, _), (j, _))| i != j)
    {
        return Err(Error::Inconsistent(format!(
            "series are not aligned: frame {i} against frame {j}"
        )));
    }
    let r = real.values();
    let e = estimated.values();
    Ok(EvalReport {
        real_mxlr: real.mxlr,
        est_mxlr: estimated.mxlr,
        real_msxlr: real.msxlr,
        est_msxlr: estimated.msxlr,
        mae: mae(&r, &e)?,
        pcc: optional(pcc(&r, &e))?,
        srocc: optional(srocc(&r, &e))?,
        frames: r.len(),
    })
}

fn opt_str<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

impl<T: Scalar> fmt::Display for EvalReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames      {}", self.frames)?;
        writeln!(f, "real_mxlr   {}", self.real_mxlr)?;
        writeln!(f, "est_mxlr    {}", self.est_mxlr)?;
        writeln!(f, "real_msxlr  {}", self.real_msxlr)?;
        writeln!(f, "est_msxlr   {}", self.est_msxlr)?;
        writeln!(f, "mae         {}", self.mae)?;
        writeln!(f, "pcc         {}", opt_str(self.pcc))?;
        write!(f, "srocc       {}", opt_str(self.srocc))
    }
}

pub const REPORT_HEADER: &str =
    "sequence,structure,plr,real_mxlr,est_mxlr,real_msxlr,est_msxlr,mae,pcc,srocc";

/// One labelled line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow<T> {
    pub sequence: String,
    pub structure: String,
    pub plr: String,
    pub report: EvalReport<T>,
}

impl<T: Scalar> ReportRow<T> {
    pub fn to_csv(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sequence,
            self.structure,
            self.plr,
            r.real_mxlr,
            r.est_mxlr,
            r.real_msxlr,
            r.est_msxlr,
            r.mae,
            opt_str(r.pcc),
            opt_str(r.srocc)
        )
    }
}

/// Correlation across rows of the pooled values: `(mxlr, msxlr)`.
pub fn pooled_pcc<T: Scalar>(reports: &[&EvalReport<T>]) -> (Option<T>, Option<T>) {
    let col = |f: fn(&EvalReport<T>) -> T| reports.iter().map(|r| f(r)).collect::<Vec<T>>();
    let m = pcc(&col(|r| r.real_mxlr), &col(|r| r.est_mxlr)).ok();
    let s = pcc(&col(|r| r.real_msxlr), &col(|r| r.est_msxlr)).ok();
    (m, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Provenance;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cubic_recovers_planted_polynomial() {
        let x: Vec<f64> = (0..40).map(|i| -2.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v - v.powi(3)).collect();
        let fit = fit_cubic(&x, &y).unwrap();
        for (c, e) in fit.coefficients.iter().zip([1.0, 2.0, 0.0, -1.0]) {
            assert!(close(*c, e, 1e-6), "{:?}", fit.coefficients);
        }
        assert!(fit.converged);
        assert!(fit.residual_rmse < 1e-9);
    }

    #[test]
    fn cubic_nested_models() {
        let x = [0.1, 0.5, 0.9, 1.3, 2.0, 7.5];
        let fit = fit_cubic(&x, &[3.0; 6]).unwrap();
        for (c, e) in fit.coefficients.iter().zip([3.0, 0.0, 0.0, 0.0]) {
            assert!(close(*c, e, 1e-6));
        }
        let fit = fit_cubic(&x, &x).unwrap();
        for (c, e) in fit.coefficients.iter().zip([0.0, 1.0, 0.0, 0.0]) {
            assert!(close(*c, e, 1e-6));
        }
    }

    #[test]
    fn cubic_with_few_distinct_abscissae() {
        let x = [0.0, 0.0, 1.0, 1.0, 1.0];
        let y = [1.0, 3.0, 5.0, 5.0, 5.0];
        let fit = fit_cubic(&x, &y).unwrap();
        assert!(close(fit.predict(0.0), 2.0, 1e-9));
        assert!(close(fit.predict(1.0), 5.0, 1e-9));
        assert_eq!(fit.coefficients[2], 0.0);
        assert_eq!(fit.coefficients[3], 0.0);
    }

    #[test]
    fn cubic_errors() {
        assert!(matches!(
            fit_cubic(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            fit_cubic(&[1.0, 2.0, 3.0, 4.0], &[1.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_cubic(&[1.0, 2.0, 3.0], &[1.0; 3]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn hand_computed_statistics() {
        assert!(close(
            pcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]).unwrap(),
            0.982_707_629_785_491,
            1e-9
        ));
        assert!(close(
            srocc(&[1.0, 2.0, 2.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap(),
            0.948_683_298_050_513_8,
            1e-9
        ));
        assert!(close(
            rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            12.5f64.sqrt(),
            1e-12
        ));
        assert_eq!(rmse(&[1.0], &[4.0]).unwrap(), 3.0);
        assert_eq!(mae(&[0.0, 0.0], &[3.0, -3.0]).unwrap(), 3.0);
        assert!(close(
            mae(&[1.0, 2.0, 3.0], &[2.0, 4.0, 3.0]).unwrap(),
            1.0,
            1e-12
        ));
    }

    #[test]
    fn correlation_edge_cases() {
        let a = [1.0, 4.0, 2.0, 8.0];
        assert!(close(pcc(&a, &a).unwrap(), 1.0, 1e-12));
        let b: Vec<f64> = a.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!(close(pcc(&a, &b).unwrap(), -1.0, 1e-12));
        let c: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        assert!(close(srocc(&a, &c).unwrap(), 1.0, 1e-12));
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert!(close(
            srocc(&[1.0, 2.0, 3.0, 4.0], &rev).unwrap(),
            -1.0,
            1e-12
        ));
        assert!(matches!(
            pcc(&[0.1; 3], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance)
        ));
        assert!(matches!(
            pcc(&[1.0], &[1.0]),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            mae::<f64>(&[], &[]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    fn series(v: &[f64]) -> XlrSeries<f64> {
        XlrSeries::from_frames(v.iter().copied().enumerate().collect(), Provenance::Fr).unwrap()
    }

    #[test]
    fn evaluate_identical_and_shifted() {
        let real = series(&[0.0, 0.1, 0.3, 0.2]);
        let r = evaluate_pair(&real, &real).unwrap();
        assert_eq!(r.mae, 0.0);
        assert!(close(r.pcc.unwrap(), 1.0, 1e-12));
        assert!(close(r.srocc.unwrap(), 1.0, 1e-12));
        let est = series(&[0.05, 0.15, 0.35, 0.25]);
        let r = evaluate_pair(&real, &est).unwrap();
        assert!(close(r.mae, 0.05, 1e-12));
        assert!(close(r.pcc.unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn evaluate_constant_series_has_no_correlation() {
        let z = series(&[0.0; 5]);
        let r = evaluate_pair(&z, &z).unwrap();
        assert_eq!((r.pcc, r.srocc), (None, None));
        let row = ReportRow {
            sequence: "seq".into(),
            structure: "ipp".into(),
            plr: "0.01".into(),
            report: r,
        };
        assert_eq!(row.to_csv(), "seq,ipp,0.01,0,0,0,0,0,nan,nan");
        assert_eq!(
            REPORT_HEADER.split(',').count(),
            row.to_csv().split(',').count()
        );
    }

    #[test]
    fn evaluate_shape_errors() {
        assert!(evaluate_pair(&series(&[0.0, 0.1]), &series(&[0.0])).is_err());
        let shifted = XlrSeries::from_frames(vec![(1, 0.0), (2, 0.1)], Provenance::Nr).unwrap();
        assert!(matches!(
            evaluate_pair(&series(&[0.0, 0.1]), &shifted),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn pooled_correlation_over_rows() {
        let mk = |m: f64, e: f64| EvalReport {
            real_mxlr: m,
            est_mxlr: e,
            real_msxlr: m.sqrt(),
            est_msxlr: e.sqrt(),
            mae: 0.0,
            pcc: None,
            srocc: None,
            frames: 1,
        };
        let rows = [mk(0.1, 0.12), mk(0.2, 0.19), mk(0.4, 0.41)];
        let (m, s) = pooled_pcc(&rows.iter().collect::<Vec<_>>());
        assert!(m.unwrap() > 0.99 && s.unwrap() > 0.99);
        assert_eq!(
            pooled_pcc(&rows[..1].iter().collect::<Vec<_>>()),
            (None, None)
        );
    }

    #[test]
    fn single_precision_statistics() {
        let r = pcc(&[1.0f32, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((r - 0.982_707_6).abs() < 1e-5);
        let fit = fit_cubic(&[0.0f32, 1.0, 2.0, 3.0, 4.0], &[1.0f32, 3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-4);
    }

    fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn planted_cubics_are_recovered(
            c in prop::array::uniform4(-5.0f64..5.0),
            lo in -10.0f64..10.0,
            width in 0.5f64..20.0,
            n in 4usize..60,
        ) {
            let x: Vec<f64> = (0..n).map(|i| lo + width * i as f64 / (n - 1) as f64).collect();
            let y: Vec<f64> = x.iter().map(|&v| c[0] + c[1] * v + c[2] * v * v + c[3] * v * v * v).collect();
            let fit = fit_cubic(&x, &y).unwrap();
            for (got, want) in fit.coefficients.iter().zip(c) {
                prop_assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "{:?} vs {:?}", fit.coefficients, c);
            }
        }

        #[test]
        fn affine_invariance((a, b) in paired(), s in 0.1f64..10.0, o in -50.0f64..50.0) {
            prop_assume!(!is_constant(&a) && !is_constant(&b));
            let t: Vec<f64> = a.iter().map(|v| s * v + o).collect();
            prop_assert!((pcc(&a, &b).unwrap() - pcc(&t, &b).unwrap()).abs() < 1e-9);
            prop_assert!((srocc(&a, &b).unwrap() - srocc(&t, &b).unwrap()).abs() < 1e-9);
            let m: Vec<f64> = a.iter().map(|v| v.powi(3) + v).collect();
            prop_assert!((srocc(&a, &b).unwrap() - srocc(&m, &b).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariance((a, b) in paired(), rot in 0usize..40) {
            prop_assume!(!is_constant(&a) && !is_constant(&b));
            let k = rot % a.len();
            let mut ra = a.clone();
            let mut rb = b.clone();
            ra.rotate_left(k);
            rb.rotate_left(k);
            prop_assert!((pcc(&a, &b).unwrap() - pcc(&ra, &rb).unwrap()).abs() < 1e-9);
            prop_assert!((srocc(&a, &b).unwrap() - srocc(&ra, &rb).unwrap()).abs() < 1e-9);
            prop_assert!((rmse(&a, &b).unwrap() - rmse(&ra, &rb).unwrap()).abs() < 1e-9);
            prop_assert!((mae(&a, &b).unwrap() - mae(&ra, &rb).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn bounds((a, b) in paired()) {
            prop_assume!(!is_constant(&a) && !is_constant(&b));
            let r = pcc(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!(rmse(&a, &b).unwrap() + 1e-12 >= mae(&a, &b).unwrap());
        }
    }
}
