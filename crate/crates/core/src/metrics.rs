//! Reconstruction metrics and their tabular reports.
//!
//! Argument order is `(estimate, reference)` throughout; `re`, `psnr`,
//! `msle_sig` and `chi2` are not symmetric.

use std::fmt::Write as _;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Default χ² floor relative to the largest prediction.
pub const CHI2_REL_FLOOR: f64 = 1e-6;

fn paired<'a>(a: &'a Grid, b: &'a Grid) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    a.check_same_shape(b, "metric operands")?;
    Ok(a.values().iter().copied().zip(b.values().iter().copied()))
}

pub fn rmse(a: &Grid, b: &Grid) -> Result<f64> {
    let n = a.len() as f64;
    Ok((paired(a, b)?.map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n).sqrt())
}

pub fn mae(a: &Grid, b: &Grid) -> Result<f64> {
    let n = a.len() as f64;
    Ok(paired(a, b)?.map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// `‖a − b‖₂ / ‖b‖₂`
pub fn re(a: &Grid, b: &Grid) -> Result<f64> {
    let num = paired(a, b)?.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = b.l2_norm();
    if den == 0.0 {
        return Err(Error::ZeroDenominator("relative error against a zero reference".into()));
    }
    Ok(num / den)
}

/// `20 log10(peak / rmse)`, `peak` defaulting to `max(b)`. Identical inputs give `+∞`.
pub fn psnr(a: &Grid, b: &Grid, peak: Option<f64>) -> Result<f64> {
    let peak = peak.unwrap_or_else(|| b.max());
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("psnr peak must be > 0, got {peak}")));
    }
    let e = rmse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / e).log10())
}

/// `mean((log1p(est) − log1p(true))²)`
pub fn msle_sig(est: &Grid, truth: &Grid) -> Result<f64> {
    let n = est.len() as f64;
    let mut acc = 0.0;
    for (x, y) in paired(est, truth)? {
        if x < 0.0 || y < 0.0 {
            return Err(Error::invalid(format!("msle needs nonnegative inputs, found {}", x.min(y))));
        }
        acc += (x.ln_1p() - y.ln_1p()).powi(2);
    }
    Ok(acc / n)
}

/// Structural similarity of two 2-D images (row-major, `rows × cols`).
///
/// Uniform `7 × 7` windows at every valid position, sample (co)variances,
/// `L = max(b) − min(b)` (1 when `b` is constant), averaged over windows.
pub fn ssim_2d(a: &[f64], b: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if a.len() != rows * cols || b.len() != rows * cols {
        return Err(Error::shape(format!(
            "ssim images of {} and {} values for {rows} × {cols}",
            a.len(),
            b.len()
        )));
    }
    let w = SSIM_WINDOW;
    if rows < w || cols < w {
        return Err(Error::invalid(format!(
            "ssim window {w} larger than {rows} × {cols} slice"
        )));
    }
    let (lo, hi) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let np = (w * w) as f64;
    let cov_norm = np / (np - 1.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=rows - w {
        for j in 0..=cols - w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for di in 0..w {
                let row = (i + di) * cols + j;
                for k in row..row + w {
                    let (x, y) = (a[k], b[k]);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa / np, sb / np);
            let va = cov_norm * (saa / np - ma * ma);
            let vb = cov_norm * (sbb / np - mb * mb);
            let vab = cov_norm * (sab / np - ma * mb);
            let num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM after summing every axis beyond the first two.
pub fn ssim(a: &Grid, b: &Grid) -> Result<f64> {
    a.check_same_shape(b, "ssim operands")?;
    let (rows, cols, sa) = a.sum_to_2d()?;
    let (_, _, sb) = b.sum_to_2d()?;
    ssim_2d(&sa, &sb, rows, cols)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2 {
    pub statistic: f64,
    pub p_value: f64,
    /// Included cells − 1.
    pub dof: usize,
    pub included: usize,
}

/// Pearson `Σ (obs − pred)² / max(pred, floor)` over cells with `pred ≥ floor`.
///
/// `floor` defaults to `1e-6 · max(pred)`. The p-value is the upper tail of
/// χ²(included − 1); with a single included cell it is 1 for a zero statistic
/// and 0 otherwise.
pub fn chi2(observed: &Grid, predicted: &Grid, floor: Option<f64>) -> Result<Chi2> {
    let floor = floor.unwrap_or_else(|| CHI2_REL_FLOOR * predicted.max());
    let floor = if floor > 0.0 { floor } else { f64::MIN_POSITIVE };
    let mut statistic = 0.0;
    let mut included = 0usize;
    for (o, p) in paired(observed, predicted)? {
        if p >= floor {
            statistic += (o - p) * (o - p) / p.max(floor);
            included += 1;
        }
    }
    if included == 0 {
        return Err(Error::Empty("no cells with prediction above the chi-square floor".into()));
    }
    let dof = included - 1;
    let p_value = if dof == 0 {
        if statistic == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(format!("chi-square dof {dof}: {e}")))?;
        dist.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(Chi2 {
        statistic,
        p_value,
        dof,
        included,
    })
}

/// One row of either benchmark table, with enough fields for both.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub r: usize,
    pub lambda: f64,
    /// Reconstruction (`total` against `observed`).
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
    pub re: f64,
    pub chi2: f64,
    pub chi2_pval: f64,
    /// Against ground truth when available.
    pub msle_sig: Option<f64>,
    pub mae_bkg: Option<f64>,
}

pub const SYNTHETIC_HEADER: &str = "r,lambda,rmse,msle_sig,mae_bkg,psnr,ssim,mae";
pub const FIT_HEADER: &str = "r,lambda,rmse,psnr,ssim,re,chi2,chi2_pval";

/// Ground-truth components for the synthetic table.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub signal: &'a Grid,
    pub background: &'a Grid,
}

/// Compute a report for a separation. `ssim` is NaN for grids without a
/// 2-D slice at least as large as the window.
pub fn evaluate(
    observed: &Grid,
    total: &Grid,
    signal: &Grid,
    background: &Grid,
    truth: Option<Truth<'_>>,
    r: usize,
    lambda: f64,
) -> Result<MetricsReport> {
    let c = chi2(observed, total, None)?;
    let (msle_sig, mae_bkg) = match truth {
        Some(t) => (Some(msle_sig(signal, t.signal)?), Some(mae(background, t.background)?)),
        None => (None, None),
    };
    Ok(MetricsReport {
        r,
        lambda,
        rmse: rmse(total, observed)?,
        psnr: psnr(total, observed, None)?,
        ssim: match ssim(total, observed) {
            Ok(v) => v,
            Err(Error::Shape(_) | Error::Invalid(_)) => f64::NAN,
            Err(e) => return Err(e),
        },
        mae: mae(total, observed)?,
        re: re(total, observed)?,
        chi2: c.statistic,
        chi2_pval: c.p_value,
        msle_sig,
        mae_bkg,
    })
}

fn num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), num)
}

impl MetricsReport {
    pub fn synthetic_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.r,
            num(self.lambda),
            num(self.rmse),
            opt(self.msle_sig),
            opt(self.mae_bkg),
            num(self.psnr),
            num(self.ssim),
            num(self.mae)
        )
    }

    pub fn fit_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.r,
            num(self.lambda),
            num(self.rmse),
            num(self.psnr),
            num(self.ssim),
            num(self.re),
            num(self.chi2),
            num(self.chi2_pval)
        )
    }

    /// `key = value` lines.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        let fields = [
            ("r", self.r as f64),
            ("lambda", self.lambda),
            ("rmse", self.rmse),
            ("psnr", self.psnr),
            ("ssim", self.ssim),
            ("mae", self.mae),
            ("re", self.re),
            ("chi2", self.chi2),
            ("chi2_pval", self.chi2_pval),
        ];
        for (k, v) in fields {
            let _ = writeln!(out, "{k} = {}", num(v));
        }
        if let Some(v) = self.msle_sig {
            let _ = writeln!(out, "msle_sig = {}", num(v));
        }
        if let Some(v) = self.mae_bkg {
            let _ = writeln!(out, "mae_bkg = {}", num(v));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::rng;
    use proptest::prelude::*;

    fn line(v: Vec<f64>) -> Grid {
        Grid::new(vec![Axis::new("H", v.len(), 0.0, 1.0)], v).unwrap()
    }

    fn image(n: usize, f: impl FnMut(&[usize]) -> f64) -> Grid {
        Grid::from_fn(vec![Axis::new("H", n, 0.0, 1.0), Axis::new("K", n, 0.0, 1.0)], f).unwrap()
    }

    #[test]
    fn hand_examples() {
        let a = line(vec![0.0, 2.0]);
        let z = line(vec![0.0, 0.0]);
        assert_eq!(rmse(&a, &z).unwrap(), 2f64.sqrt());
        assert_eq!(mae(&a, &z).unwrap(), 1.0);
        assert!(matches!(re(&a, &z), Err(Error::ZeroDenominator(_))));
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(re(&a, &a).unwrap(), 0.0);
        let shifted = a.map(|v| v + 0.75);
        assert_eq!(mae(&shifted, &a).unwrap(), 0.75);
        assert!(rmse(&a, &line(vec![1.0])).is_err());
    }

    #[test]
    fn psnr_examples() {
        let b = line(vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(psnr(&b, &b, None).unwrap(), f64::INFINITY);
        let a = b.map(|v| v + 0.01);
        assert!((psnr(&a, &b, Some(1.0)).unwrap() - 40.0).abs() < 1e-9);
        let a2 = b.map(|v| v + 0.02);
        let drop = psnr(&a, &b, None).unwrap() - psnr(&a2, &b, None).unwrap();
        assert!((drop - 20.0 * 2f64.log10()).abs() < 1e-9);
        assert!(psnr(&a, &b, Some(0.0)).is_err());
    }

    #[test]
    fn msle_examples() {
        let mut est = vec![0.0; 5];
        est[2] = std::f64::consts::E - 1.0;
        assert!((msle_sig(&line(est), &line(vec![0.0; 5])).unwrap() - 0.2).abs() < 1e-15);
        let t = line(vec![1.0, 2.0]);
        assert_eq!(msle_sig(&t, &t).unwrap(), 0.0);
        assert!(msle_sig(&line(vec![-1.0, 0.0]), &t).is_err());
    }

    #[test]
    fn ssim_examples() {
        let b = image(16, |i| (i[0] * 3 + i[1]) as f64 / 60.0);
        assert!((ssim(&b, &b).unwrap() - 1.0).abs() < 1e-12);
        let inv = b.map(|v| 1.0 - v);
        assert!(ssim(&inv, &b).unwrap() < 1.0);
        let small = image(5, |_| 1.0);
        assert!(ssim(&small, &small).is_err());
        let c = image(8, |_| 2.0);
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    /// Windowed SSIM via explicit per-window mean and two-pass covariances.
    fn ssim_oracle(a: &[f64], b: &[f64], n: usize) -> f64 {
        let (lo, hi) = b.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let l = hi - lo;
        let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
        let mut vals = Vec::new();
        for i in 0..=n - 7 {
            for j in 0..=n - 7 {
                let xs: Vec<(f64, f64)> = (0..49).map(|k| {
                    let idx = (i + k / 7) * n + j + k % 7;
                    (a[idx], b[idx])
                }).collect();
                let ma = xs.iter().map(|p| p.0).sum::<f64>() / 49.0;
                let mb = xs.iter().map(|p| p.1).sum::<f64>() / 49.0;
                let va = xs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / 48.0;
                let vb = xs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / 48.0;
                let vab = xs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / 48.0;
                vals.push((2.0 * ma * mb + c1) * (2.0 * vab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
            }
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn ssim_matches_direct_formula() {
        let mut r = rng::seeded(7);
        for _ in 0..5 {
            let a: Vec<f64> = (0..256).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect();
            let b: Vec<f64> = (0..256).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect();
            let got = ssim_2d(&a, &b, 16, 16).unwrap();
            assert!((got - ssim_oracle(&a, &b, 16)).abs() < 1e-10);
        }
    }

    #[test]
    fn ssim_sums_trailing_axes() {
        let axes = vec![
            Axis::new("H", 8, 0.0, 1.0),
            Axis::new("K", 8, 0.0, 1.0),
            Axis::new("omega", 3, 0.0, 1.0),
        ];
        let a = Grid::from_fn(axes.clone(), |i| (i[0] + i[1] * i[2]) as f64).unwrap();
        let b = Grid::from_fn(axes, |i| (i[0] * i[1] + i[2]) as f64).unwrap();
        let (rows, cols, sa) = a.sum_to_2d().unwrap();
        let (_, _, sb) = b.sum_to_2d().unwrap();
        assert_eq!(ssim(&a, &b).unwrap(), ssim_2d(&sa, &sb, rows, cols).unwrap());
    }

    #[test]
    fn chi2_examples() {
        let p = line(vec![1.0, 2.0, 3.0]);
        let c = chi2(&p, &p, None).unwrap();
        assert_eq!((c.statistic, c.p_value, c.dof), (0.0, 1.0, 2));
        let c = chi2(&line(vec![4.0]), &line(vec![1.0]), Some(0.5)).unwrap();
        assert_eq!(c.statistic, 9.0);
        assert_eq!(c.p_value, 0.0);
        // cells under the floor are skipped
        let c = chi2(&line(vec![5.0, 1.0]), &line(vec![0.0, 1.0]), None).unwrap();
        assert_eq!((c.statistic, c.included), (0.0, 1));
        assert!(chi2(&line(vec![1.0]), &line(vec![0.0]), None).is_err());
    }

    #[test]
    fn chi2_poisson_calibration() {
        use rand_distr::{Distribution, Poisson};
        let n = 10_000;
        let mut r = rng::seeded(42);
        let pred: Vec<f64> = (0..n).map(|i| 5.0 + (i % 17) as f64).collect();
        let obs: Vec<f64> = pred.iter().map(|&m| Poisson::new(m).unwrap().sample(&mut r)).collect();
        let c = chi2(&line(obs), &line(pred), None).unwrap();
        let per_dof = c.statistic / c.dof as f64;
        assert!((0.9..=1.1).contains(&per_dof), "{per_dof}");
        assert!((0.0..=1.0).contains(&c.p_value));
    }

    #[test]
    fn report_rows_have_fixed_columns() {
        let obs = image(8, |i| 1.0 + (i[0] + i[1]) as f64);
        let sig = obs.map(|v| 0.5 * v);
        let rep = evaluate(&obs, &obs, &sig, &sig, Some(Truth { signal: &sig, background: &sig }), 2, 0.005).unwrap();
        assert_eq!(rep.psnr, f64::INFINITY);
        assert_eq!(rep.synthetic_row().split(',').count(), SYNTHETIC_HEADER.split(',').count());
        assert_eq!(rep.fit_row().split(',').count(), FIT_HEADER.split(',').count());
        assert!(rep.synthetic_row().starts_with("2,0.005,0,0,0,inf,"));
        assert!(rep.key_values().contains("chi2_pval = 1\n"));
    }

    proptest! {
        #[test]
        fn symmetric_metrics(seed in 0u64..1000) {
            let mut r = rng::seeded(seed);
            let a = line((0..12).map(|_| rng::uniform(&mut r, 0.0, 3.0)).collect());
            let b = line((0..12).map(|_| rng::uniform(&mut r, 0.0, 3.0)).collect());
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
            prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
            prop_assert!(rmse(&a, &b).unwrap() >= 0.0);
            let c = chi2(&a, &b, None).unwrap();
            prop_assert!((0.0..=1.0).contains(&c.p_value));
        }
    }
}
