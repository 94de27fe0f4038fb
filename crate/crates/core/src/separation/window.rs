//! Neighbor windows and the discrete kernel-signal convolution.

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

/// Offsets of a `(2r+1)^d` window in lexicographic order (first axis
/// slowest, each axis running `-r..=r`).
#[derive(Debug, Clone)]
pub struct Window {
    r: usize,
    d: usize,
    offsets: Vec<isize>,
}

impl Window {
    pub fn new(r: usize, d: usize) -> Self {
        let side = 2 * r + 1;
        let len = side.pow(d as u32);
        let mut offsets = Vec::with_capacity(len * d);
        for j in 0..len {
            let mut rem = j;
            let mut off = vec![0isize; d];
            for a in (0..d).rev() {
                off[a] = (rem % side) as isize - r as isize;
                rem /= side;
            }
            offsets.extend(off);
        }
        Window { r, d, offsets }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.offsets.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offset(&self, j: usize) -> &[isize] {
        &self.offsets[j * self.d..(j + 1) * self.d]
    }

    /// Position of the zero offset.
    pub fn center(&self) -> usize {
        self.len() / 2
    }

    /// Flat indices of the neighbors of `center` on `grid`'s geometry;
    /// `None` where the tap falls outside the grid.
    pub fn neighbor_indices(&self, grid: &Grid, center: &[usize], out: &mut Vec<Option<usize>>) {
        out.clear();
        let mut idx = vec![0isize; self.d];
        for j in 0..self.len() {
            for (a, o) in self.offset(j).iter().enumerate() {
                idx[a] = center[a] as isize + o;
            }
            out.push(grid.ravel_checked(&idx));
        }
    }

    /// For every cell of `values`, the window's values with zero extension.
    /// Row-major `[cells, len]`.
    pub fn gather_table(&self, values: &Grid) -> Vec<f64> {
        let k = self.len();
        let mut table = Vec::with_capacity(values.len() * k);
        let mut idx = vec![0; values.ndim()];
        let mut nb = Vec::with_capacity(k);
        for flat in 0..values.len() {
            values.unravel_into(flat, &mut idx);
            self.neighbor_indices(values, &idx, &mut nb);
            table.extend(nb.iter().map(|n| n.map_or(0.0, |i| values.values()[i])));
        }
        table
    }
}

/// One window tap around a center.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub offset: Vec<isize>,
    /// Physical coordinates (extrapolated along the axis for out-of-grid taps).
    pub coords: Vec<f64>,
    /// Flat index, or `None` when the tap lies outside the grid.
    pub flat: Option<usize>,
}

impl Neighbor {
    pub fn out_of_grid(&self) -> bool {
        self.flat.is_none()
    }
}

/// Enumerate the `(2r+1)^d` window around `center`.
pub fn gather_neighbors(axes: &[Axis], center: &[usize], r: usize) -> Result<Vec<Neighbor>> {
    let grid = Grid::zeros(axes.to_vec())?;
    if center.len() != axes.len() {
        return Err(Error::shape(format!(
            "center index has {} components for {} axes",
            center.len(),
            axes.len()
        )));
    }
    for (&c, a) in center.iter().zip(axes) {
        if c >= a.extent {
            return Err(Error::invalid(format!(
                "center index {c} outside axis {} of extent {}",
                a.label, a.extent
            )));
        }
        if 2 * r + 1 > 2 * a.extent {
            return Err(Error::invalid(format!(
                "window of radius {r} exceeds twice the extent of axis {}",
                a.label
            )));
        }
    }
    let w = Window::new(r, axes.len());
    let mut flats = Vec::new();
    w.neighbor_indices(&grid, center, &mut flats);
    Ok(flats
        .into_iter()
        .enumerate()
        .map(|(j, flat)| {
            let offset = w.offset(j).to_vec();
            let coords = offset
                .iter()
                .zip(center)
                .zip(axes)
                .map(|((&o, &c), a)| a.coord(c as isize + o))
                .collect();
            Neighbor { offset, coords, flat }
        })
        .collect())
}

/// `Σ_j κ_j · S_j` over one window.
pub fn convolve_signal(kernel_weights: &[f64], s_sim: &[f64]) -> Result<f64> {
    if kernel_weights.len() != s_sim.len() {
        return Err(Error::shape(format!(
            "kernel has {} taps, signal window has {}",
            kernel_weights.len(),
            s_sim.len()
        )));
    }
    let mut acc = 0.0;
    for (k, s) in kernel_weights.iter().zip(s_sim) {
        acc += k * s;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(n: usize) -> Vec<Axis> {
        vec![Axis::new("H", n, 0.0, (n - 1) as f64), Axis::new("K", n, 0.0, (n - 1) as f64)]
    }

    #[test]
    fn interior_window_in_2d() {
        let nb = gather_neighbors(&axes(5), &[2, 2], 1).unwrap();
        assert_eq!(nb.len(), 9);
        assert_eq!(nb[4].offset, vec![0, 0]);
        assert_eq!(nb[4].coords, vec![2.0, 2.0]);
        assert_eq!(nb[0].offset, vec![-1, -1]);
        assert_eq!(nb[1].offset, vec![-1, 0]);
        assert!(nb.iter().all(|n| !n.out_of_grid()));
    }

    #[test]
    fn four_dimensional_window_size() {
        let ax: Vec<Axis> = ["H", "K", "L", "omega"]
            .iter()
            .map(|l| Axis::new(*l, 8, 0.0, 1.0))
            .collect();
        assert_eq!(gather_neighbors(&ax, &[4, 4, 4, 4], 3).unwrap().len(), 2401);
    }

    #[test]
    fn corner_flags_out_of_grid() {
        let nb = gather_neighbors(&axes(5), &[0, 0], 1).unwrap();
        assert_eq!(nb.len(), 9);
        assert_eq!(nb.iter().filter(|n| n.out_of_grid()).count(), 5);
        assert_eq!(nb[0].coords, vec![-1.0, -1.0]);
    }

    #[test]
    fn oversized_window_and_bad_center() {
        assert!(gather_neighbors(&axes(2), &[0, 0], 2).is_err());
        assert!(gather_neighbors(&axes(3), &[0, 3], 1).is_err());
        // 2r+1 = 5 <= 2·3
        assert!(gather_neighbors(&axes(3), &[1, 1], 2).is_ok());
    }

    #[test]
    fn delta_and_uniform_kernels() {
        let s = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0];
        let mut delta = [0.0; 9];
        delta[4] = 1.0;
        assert_eq!(convolve_signal(&delta, &s).unwrap(), 5.0);
        let uniform = [1.0 / 9.0; 9];
        let mean = s.iter().sum::<f64>() / 9.0;
        assert!((convolve_signal(&uniform, &s).unwrap() - mean).abs() < 1e-14);
        assert!(convolve_signal(&delta[..8], &s).is_err());
    }

    #[test]
    fn gather_table_zero_extends() {
        let g = Grid::from_fn(axes(3), |i| (1 + i[0] * 3 + i[1]) as f64).unwrap();
        let w = Window::new(1, 2);
        let t = w.gather_table(&g);
        // cell (0, 0): only offsets (0,0),(0,1),(1,0),(1,1) are inside
        assert_eq!(&t[..9], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
        assert_eq!(t.len(), 81);
    }
}
