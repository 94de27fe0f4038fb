//! Projection, Fourier and slice diagnostics on 2-D images, pixel-difference
//! histograms, peak retention and greyscale rasters.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lambda::SupportMask;

/// Row-major 2-D image. Rows run along the first grid axis (H), columns
/// along the second (K or ω).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(format!(
                "image of {} values for {rows} × {cols}",
                data.len()
            )));
        }
        Ok(Image { rows, cols, data })
    }

    /// Sum over every axis beyond the first two.
    pub fn from_grid(g: &Grid) -> Result<Self> {
        let (rows, cols, data) = g.sum_to_2d()?;
        Image::new(rows, cols, data)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angle {
    /// Line integrals along the row axis: one value per column.
    Zero,
    /// Sums over anti-diagonal bins `j − i`, from `−(rows−1)` to `cols−1`.
    Diagonal,
}

impl Angle {
    pub fn from_degrees(deg: f64) -> Result<Self> {
        if deg == 0.0 {
            Ok(Angle::Zero)
        } else if deg == 45.0 {
            Ok(Angle::Diagonal)
        } else {
            Err(Error::invalid(format!("unsupported projection angle {deg}° (0 or 45)")))
        }
    }
}

pub fn radon_projection(img: &Image, angle: Angle) -> Vec<f64> {
    match angle {
        Angle::Zero => {
            let mut out = vec![0.0; img.cols];
            for row in img.data.chunks(img.cols) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            out
        }
        Angle::Diagonal => {
            let mut out = vec![0.0; img.rows + img.cols - 1];
            for i in 0..img.rows {
                for j in 0..img.cols {
                    out[j + img.rows - 1 - i] += img.at(i, j);
                }
            }
            out
        }
    }
}

/// Magnitudes of a 1-D DFT.
pub fn fft_magnitudes(values: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

/// `|F₂(img)|` on the row `ξ_H = 0` (one value per column frequency).
pub fn fourier_central_slice(img: &Image) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(img.cols);
    let col_fft = planner.plan_fft_forward(img.rows);
    let mut data: Vec<Complex<f64>> = img.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in data.chunks_mut(img.cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); img.rows];
    let mut slice = Vec::with_capacity(img.cols);
    for j in 0..img.cols {
        for (i, c) in column.iter_mut().enumerate() {
            *c = data[i * img.cols + j];
        }
        col_fft.process(&mut column);
        slice.push(column[0].norm());
    }
    slice
}

/// Values on `i == j`.
pub fn diagonal_slice(img: &Image) -> Result<Vec<f64>> {
    if img.rows != img.cols {
        return Err(Error::shape(format!(
            "diagonal slice needs a square image, got {} × {}",
            img.rows, img.cols
        )));
    }
    Ok((0..img.rows).map(|i| img.at(i, i)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `(b_i, a_i)` per cell.
    pub scatter: Vec<(f64, f64)>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the bin holding `x` (upper edge inclusive for the last bin).
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let bins = self.counts.len();
        if !(x >= self.edges[0] && x <= self.edges[bins]) {
            return None;
        }
        let w = (self.edges[bins] - self.edges[0]) / bins as f64;
        Some((((x - self.edges[0]) / w) as usize).min(bins - 1))
    }
}

/// Histogram of `a − b` over its own range (`±0.5` around a constant difference).
pub fn pixel_diff_histogram(a: &Grid, b: &Grid, bins: usize) -> Result<Histogram> {
    a.check_same_shape(b, "histogram operands")?;
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let diffs: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let (lo, hi) = diffs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("histogram of non-finite differences"));
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let w = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| if k == bins { hi } else { lo + w * k as f64 }).collect();
    let mut hist = Histogram {
        edges,
        counts: vec![0; bins],
        scatter: b.values().iter().copied().zip(a.values().iter().copied()).collect(),
    };
    for d in diffs {
        let k = hist.bin_of(d).expect("difference inside its own range");
        hist.counts[k] += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakRetention {
    /// Smallest per-peak ratio.
    pub min: f64,
    /// `max(separated) / max(raw)` per connected component of `Ω`.
    pub per_peak: Vec<f64>,
}

/// Face-connected components of the mask, as lists of flat indices.
pub fn connected_components(mask: &SupportMask) -> Vec<Vec<usize>> {
    let extents: Vec<usize> = mask.axes().iter().map(|a| a.extent).collect();
    let strides: Vec<usize> = (0..extents.len()).map(|a| extents[a + 1..].iter().product()).collect();
    let inside = mask.inside();
    let mut label = vec![usize::MAX; inside.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..inside.len() {
        if !inside[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut cells = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(c) = stack.pop() {
            cells.push(c);
            for (&n, &s) in extents.iter().zip(&strides) {
                let coord = (c / s) % n;
                let mut visit = |nb: usize| {
                    if inside[nb] && label[nb] == usize::MAX {
                        label[nb] = id;
                        stack.push(nb);
                    }
                };
                if coord > 0 {
                    visit(c - s);
                }
                if coord + 1 < n {
                    visit(c + s);
                }
            }
        }
        cells.sort_unstable();
        comps.push(cells);
    }
    comps
}

/// Per-peak amplitude kept by the separation relative to the raw data.
pub fn peak_retention(separated: &Grid, raw: &Grid, support: &SupportMask) -> Result<PeakRetention> {
    separated.check_same_shape(raw, "retention operands")?;
    if support.len() != raw.len() {
        return Err(Error::shape("support mask does not match the grids"));
    }
    if support.count_inside() == 0 {
        return Err(Error::EmptySupport);
    }
    let mut per_peak = Vec::new();
    for cells in connected_components(support) {
        let max_of = |g: &Grid| cells.iter().map(|&c| g.values()[c]).fold(f64::NEG_INFINITY, f64::max);
        let raw_max = max_of(raw);
        if raw_max > 0.0 {
            per_peak.push(max_of(separated) / raw_max);
        }
    }
    if per_peak.is_empty() {
        return Err(Error::Empty("no peaks with positive raw maximum inside the support".into()));
    }
    Ok(PeakRetention {
        min: per_peak.iter().copied().fold(f64::INFINITY, f64::min),
        per_peak,
    })
}

/// 8-bit greyscale raster with its linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    /// Values mapped to levels 0 and 255.
    pub lo: f64,
    pub hi: f64,
}

impl Raster {
    pub fn from_image(img: &Image) -> Raster {
        let (lo, hi) = img
            .data
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let span = hi - lo;
        let pixels = img
            .data
            .iter()
            .map(|&v| {
                if span > 0.0 && v.is_finite() {
                    ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        Raster {
            rows: img.rows,
            cols: img.cols,
            pixels,
            lo,
            hi,
        }
    }

    /// Binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// `level,value` for every grey level.
    pub fn scale_csv(&self) -> String {
        let mut out = String::from("level,value\n");
        for k in 0..=255u32 {
            let v = self.lo + (self.hi - self.lo) * k as f64 / 255.0;
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::rng;

    fn img(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Image::new(rows, cols, data).unwrap()
    }

    #[test]
    fn radon_examples() {
        let g = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(radon_projection(&g, Angle::Zero), vec![4.0, 6.0]);
        // bins j − i = -1, 0, 1
        assert_eq!(radon_projection(&g, Angle::Diagonal), vec![3.0, 5.0, 2.0]);
        let c = img(5, 3, |_, _| 2.0);
        assert_eq!(radon_projection(&c, Angle::Zero), vec![10.0; 3]);
        let delta = img(4, 4, |i, j| if (i, j) == (2, 1) { 1.0 } else { 0.0 });
        assert_eq!(radon_projection(&delta, Angle::Zero), vec![0.0, 1.0, 0.0, 0.0]);
        assert!(Angle::from_degrees(30.0).is_err());
        assert_eq!(Angle::from_degrees(45.0).unwrap(), Angle::Diagonal);
    }

    #[test]
    fn projection_slice_theorem() {
        let mut r = rng::seeded(5);
        for (rows, cols) in [(8, 8), (5, 12), (16, 7)] {
            let data = (0..rows * cols).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
            let g = Image::new(rows, cols, data).unwrap();
            let a = fft_magnitudes(&radon_projection(&g, Angle::Zero));
            let b = fourier_central_slice(&g);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fourier_examples() {
        let c = img(4, 8, |_, _| 1.5);
        let s = fourier_central_slice(&c);
        assert!((s[0] - 48.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|v| v.abs() < 1e-12));
        let n = 16;
        let wave = img(4, n, |_, j| (2.0 * std::f64::consts::PI * 3.0 * j as f64 / n as f64).cos());
        let s = fourier_central_slice(&wave);
        let big: Vec<usize> = (0..n).filter(|&k| s[k] > 1e-9).collect();
        assert_eq!(big, vec![3, n - 3]);
    }

    #[test]
    fn diagonal_examples() {
        let g = img(4, 4, |i, j| (i + j) as f64);
        assert_eq!(diagonal_slice(&g).unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(diagonal_slice(&img(1, 1, |_, _| 7.0)).unwrap(), vec![7.0]);
        assert_eq!(diagonal_slice(&img(3, 3, |_, _| 2.0)).unwrap(), vec![2.0; 3]);
        assert!(diagonal_slice(&img(3, 4, |_, _| 0.0)).is_err());
    }

    fn grid(values: Vec<f64>) -> Grid {
        Grid::new(vec![Axis::new("H", values.len(), 0.0, 1.0)], values).unwrap()
    }

    #[test]
    fn histogram_examples() {
        let b = grid(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let h = pixel_diff_histogram(&b, &b, 5).unwrap();
        assert_eq!(h.total(), 5);
        assert_eq!(h.counts[h.bin_of(0.0).unwrap()], 5);
        let a = b.map(|v| v + 1.0);
        let h = pixel_diff_histogram(&a, &b, 4).unwrap();
        assert_eq!(h.counts[h.bin_of(1.0).unwrap()], 5);
        assert_eq!(h.scatter[2], (2.0, 3.0));
        let noisy = grid(vec![0.3, -2.0, 5.0, 1.0, 0.0]);
        let h = pixel_diff_histogram(&noisy, &b, 3).unwrap();
        assert_eq!(h.total(), 5);
        assert_eq!(h.edges.len(), 4);
        assert!(pixel_diff_histogram(&a, &b, 0).is_err());
    }

    fn mask(axes: Vec<Axis>, inside: Vec<bool>) -> SupportMask {
        SupportMask::new(axes, inside, 0.5, "test").unwrap()
    }

    #[test]
    fn components_are_face_connected() {
        let axes = vec![Axis::new("H", 3, 0.0, 1.0), Axis::new("K", 3, 0.0, 1.0)];
        // diagonal neighbours are separate components
        let m = mask(axes, vec![true, false, false, false, true, true, false, false, false]);
        let comps = connected_components(&m);
        assert_eq!(comps, vec![vec![0], vec![4, 5]]);
    }

    #[test]
    fn retention_examples() {
        let axes = vec![Axis::new("H", 6, 0.0, 1.0)];
        let raw = Grid::new(axes.clone(), vec![0.0, 4.0, 0.0, 0.0, 2.0, 1.0]).unwrap();
        let m = mask(axes.clone(), vec![false, true, false, false, true, true]);
        let same = peak_retention(&raw, &raw, &m).unwrap();
        assert_eq!(same.min, 1.0);
        assert_eq!(same.per_peak.len(), 2);
        let half = peak_retention(&raw.map(|v| v * 0.5), &raw, &m).unwrap();
        assert_eq!(half.min, 0.5);
        let empty = mask(axes, vec![false; 6]);
        assert!(matches!(peak_retention(&raw, &raw, &empty), Err(Error::EmptySupport)));
    }

    #[test]
    fn raster_scaling() {
        let g = img(2, 2, |i, j| (i * 2 + j) as f64);
        let r = Raster::from_image(&g);
        assert_eq!(r.pixels, vec![0, 85, 170, 255]);
        let pgm = r.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(pgm.len(), 11 + 4);
        assert_eq!(r.scale_csv().lines().count(), 257);
        let flat = Raster::from_image(&img(2, 3, |_, _| 1.0));
        assert!(flat.pixels.iter().all(|&p| p == 0));
    }
}
