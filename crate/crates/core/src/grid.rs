//! Self-describing N-dimensional dense array with physical axis ranges.

use crate::error::{Error, Result};

/// One grid axis: `extent` samples spaced evenly over `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub label: String,
    pub extent: usize,
    pub min: f64,
    pub max: f64,
}

impl Axis {
    pub fn new(label: impl Into<String>, extent: usize, min: f64, max: f64) -> Self {
        Axis {
            label: label.into(),
            extent,
            min,
            max,
        }
    }

    pub fn step(&self) -> f64 {
        if self.extent > 1 {
            (self.max - self.min) / (self.extent - 1) as f64
        } else {
            0.0
        }
    }

    /// Physical coordinate of sample `k` (may lie outside the grid for
    /// out-of-range `k`).
    pub fn coord(&self, k: isize) -> f64 {
        self.min + k as f64 * self.step()
    }

    /// Sample `k` mapped affinely onto `[-1, 1]`.
    pub fn normalized(&self, k: usize) -> f64 {
        if self.extent > 1 {
            -1.0 + 2.0 * k as f64 / (self.extent - 1) as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self> {
        validate_axes(&axes)?;
        let n: usize = axes.iter().map(|a| a.extent).product();
        if n != values.len() {
            return Err(Error::shape(format!(
                "grid extents {:?} hold {n} cells, got {} values",
                axes.iter().map(|a| a.extent).collect::<Vec<_>>(),
                values.len()
            )));
        }
        Ok(Grid { axes, values })
    }

    pub fn zeros(axes: Vec<Axis>) -> Result<Self> {
        let n = axes.iter().map(|a| a.extent).product();
        Grid::new(axes, vec![0.0; n])
    }

    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut g = Grid::zeros(axes)?;
        let mut idx = vec![0; g.ndim()];
        for flat in 0..g.len() {
            g.unravel_into(flat, &mut idx);
            g.values[flat] = f(&idx);
        }
        Ok(g)
    }

    /// Same axes, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Grid::new(self.axes.clone(), values)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn extents(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.extent).collect()
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.extents() == other.extents()
    }

    pub fn check_same_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.extents(),
                other.extents()
            )))
        }
    }

    pub fn unravel_into(&self, mut flat: usize, idx: &mut [usize]) {
        for (d, ax) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % ax.extent;
            flat /= ax.extent;
        }
    }

    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        self.unravel_into(flat, &mut idx);
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, ax)| acc * ax.extent + i)
    }

    /// Flat index of a possibly out-of-range signed index.
    pub fn ravel_checked(&self, idx: &[isize]) -> Option<usize> {
        let mut flat = 0usize;
        for (&i, ax) in idx.iter().zip(&self.axes) {
            if i < 0 || i as usize >= ax.extent {
                return None;
            }
            flat = flat * ax.extent + i as usize;
        }
        Some(flat)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.ravel(idx)]
    }

    pub fn physical_coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.coord(i as isize))
            .collect()
    }

    pub fn normalized_coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.normalized(i))
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            axes: self.axes.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.check_same_shape(other, "zip")?;
        Ok(Grid {
            axes: self.axes.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Collapse to the first two axes by summing over the rest.
    /// Returns `(rows, cols, row-major values)`.
    pub fn sum_to_2d(&self) -> Result<(usize, usize, Vec<f64>)> {
        if self.ndim() < 2 {
            return Err(Error::shape(format!(
                "need at least 2 axes for a 2-D slice, grid has {}",
                self.ndim()
            )));
        }
        let (r, c) = (self.axes[0].extent, self.axes[1].extent);
        let inner = self.len() / (r * c);
        let out = self
            .values
            .chunks(inner)
            .map(|chunk| chunk.iter().sum())
            .collect();
        Ok((r, c, out))
    }
}

fn validate_axes(axes: &[Axis]) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::shape("grid needs at least one axis"));
    }
    for (i, a) in axes.iter().enumerate() {
        if a.extent == 0 {
            return Err(Error::shape(format!("axis {} ({}) has zero extent", i, a.label)));
        }
        if !a.min.is_finite() || !a.max.is_finite() {
            return Err(Error::invalid(format!("axis {} range is not finite", a.label)));
        }
        if a.extent > 1 && a.max <= a.min {
            return Err(Error::invalid(format!(
                "axis {} has degenerate range [{}, {}]",
                a.label, a.min, a.max
            )));
        }
        if axes[..i].iter().any(|b| b.label == a.label) {
            return Err(Error::invalid(format!("duplicate axis label {:?}", a.label)));
        }
    }
    Ok(())
}
