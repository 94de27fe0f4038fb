//! Ideal-signal models evaluated at physical coordinates.
//!
//! The analytic model is a Gaussian line of width `σ_ω` centred on a
//! cosine-band dispersion surface:
//!
//! ```text
//! γ(H, K) = (cos 2πH + cos 2πK) / 2
//! p(H, K) = cos 2πH · cos 2πK
//! A(Q)    = 2J − 2Jp · (1 − p)
//! B(Q)    = 2J · γ
//! ω(Q)    = Z · √max(A² − B², 0)
//! S(Q, ω) = amplitude · exp(−(ω − ω(Q))² / (2σ_ω²))
//! ```
//!
//! `L` does not enter (a layered magnet with negligible interlayer
//! coupling). For `Jp ≤ 0` the radicand is nonnegative everywhere; the
//! band is gapless at integer `(H, K)` and both γ and p are symmetric in
//! `H ↔ K`. The formula is a fixed toy dispersion for this crate.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AnalyticParams {
    /// Nearest-neighbour exchange, meV.
    pub j: f64,
    /// Second-neighbour exchange, meV.
    pub jp: f64,
    pub amplitude: f64,
    /// Gaussian line width in energy, meV.
    pub width: f64,
    /// Overall band renormalization.
    pub z: f64,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        AnalyticParams {
            j: 32.0,
            jp: -2.6,
            amplitude: 10.0,
            width: 4.0,
            z: 1.0,
        }
    }
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.j, self.jp, self.amplitude, self.width, self.z]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.amplitude < 0.0 || self.width <= 0.0 || self.z < 0.0 {
            return Err(Error::Format {
                what: "signal model",
                detail: format!("invalid analytic parameters {self:?}"),
            });
        }
        Ok(())
    }

    pub fn dispersion(&self, h: f64, k: f64) -> f64 {
        let (ch, ck) = ((2.0 * PI * h).cos(), (2.0 * PI * k).cos());
        let gamma = 0.5 * (ch + ck);
        let p = ch * ck;
        let a = 2.0 * self.j - 2.0 * self.jp * (1.0 - p);
        let b = 2.0 * self.j * gamma;
        self.z * (a * a - b * b).max(0.0).sqrt()
    }

    pub fn intensity(&self, h: f64, k: f64, omega: f64) -> f64 {
        let d = omega - self.dispersion(h, k);
        self.amplitude * (-d * d / (2.0 * self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalModel {
    Analytic(AnalyticParams),
    /// Multilinear lookup; zero outside the backing grid.
    Gridded(Grid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    H,
    K,
    L,
    Energy,
}

fn role_of(label: &str) -> Option<Role> {
    match label.to_ascii_lowercase().as_str() {
        "h" | "qh" => Some(Role::H),
        "k" | "qk" => Some(Role::K),
        "l" | "ql" => Some(Role::L),
        "omega" | "w" | "e" | "energy" | "ω" => Some(Role::Energy),
        _ => None,
    }
}

/// A signal model resolved against a concrete set of axes.
#[derive(Debug)]
pub struct BoundSignal<'a> {
    model: &'a SignalModel,
    roles: Vec<Role>,
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SignalModel::Analytic(p) => p.validate(),
            SignalModel::Gridded(g) => {
                if g.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Format {
                        what: "signal model",
                        detail: "backing grid must be finite and nonnegative".into(),
                    });
                }
                Ok(())
            }
        }
    }

    /// Resolve coordinate roles for `axes` (labels H, K, L and one energy
    /// axis for the analytic kind; matching labels for the gridded kind).
    pub fn bind<'a>(&'a self, axes: &[Axis]) -> Result<BoundSignal<'a>> {
        self.validate()?;
        match self {
            SignalModel::Analytic(_) => {
                let mut roles = Vec::with_capacity(axes.len());
                for a in axes {
                    let role = role_of(&a.label).ok_or_else(|| Error::Format {
                        what: "signal model",
                        detail: format!("axis label {:?} has no role (use H, K, L, omega)", a.label),
                    })?;
                    if roles.contains(&role) {
                        return Err(Error::Format {
                            what: "signal model",
                            detail: format!("axis role of {:?} appears twice", a.label),
                        });
                    }
                    roles.push(role);
                }
                if !roles.contains(&Role::Energy) {
                    return Err(Error::Format {
                        what: "signal model",
                        detail: "analytic model needs an energy axis".into(),
                    });
                }
                Ok(BoundSignal { model: self, roles })
            }
            SignalModel::Gridded(g) => {
                let labels_match = g.ndim() == axes.len()
                    && g.axes().iter().zip(axes).all(|(a, b)| a.label == b.label);
                if !labels_match {
                    return Err(Error::Format {
                        what: "signal model",
                        detail: format!(
                            "backing grid axes {:?} do not match query axes {:?}",
                            g.axes().iter().map(|a| &a.label).collect::<Vec<_>>(),
                            axes.iter().map(|a| &a.label).collect::<Vec<_>>()
                        ),
                    });
                }
                Ok(BoundSignal {
                    model: self,
                    roles: Vec::new(),
                })
            }
        }
    }

    /// Evaluate on every cell of a grid with the given axes.
    pub fn sample_on(&self, axes: &[Axis]) -> Result<Grid> {
        let bound = self.bind(axes)?;
        let template = Grid::zeros(axes.to_vec())?;
        let mut values = Vec::with_capacity(template.len());
        let mut idx = vec![0; axes.len()];
        for flat in 0..template.len() {
            template.unravel_into(flat, &mut idx);
            values.push(bound.eval(&template.physical_coords(&idx)));
        }
        template.with_values(values)
    }
}

impl BoundSignal<'_> {
    pub fn eval(&self, coords: &[f64]) -> f64 {
        match self.model {
            SignalModel::Analytic(p) => {
                let (mut h, mut k, mut w) = (0.0, 0.0, 0.0);
                for (&c, role) in coords.iter().zip(&self.roles) {
                    match role {
                        Role::H => h = c,
                        Role::K => k = c,
                        Role::L => {}
                        Role::Energy => w = c,
                    }
                }
                p.intensity(h, k, w)
            }
            SignalModel::Gridded(g) => interpolate(g, coords),
        }
    }
}

/// Evaluate `model` at a row-major batch of physical coordinates laid out
/// along `axes`.
pub fn signal_model_eval(model: &SignalModel, axes: &[Axis], coords: &[f64]) -> Result<Vec<f64>> {
    let d = axes.len();
    if coords.len() % d != 0 {
        return Err(Error::shape(format!(
            "{} coordinate values for {d} axes",
            coords.len()
        )));
    }
    let bound = model.bind(axes)?;
    Ok(coords.chunks(d).map(|c| bound.eval(c)).collect())
}

fn interpolate(g: &Grid, coords: &[f64]) -> f64 {
    let d = g.ndim();
    // per-axis (lower index, fraction)
    let mut cell = Vec::with_capacity(d);
    for (&x, ax) in coords.iter().zip(g.axes()) {
        if ax.extent == 1 {
            let tol = 1e-12 * ax.min.abs().max(1.0);
            if (x - ax.min).abs() > tol {
                return 0.0;
            }
            cell.push((0usize, 0.0));
            continue;
        }
        let t = (x - ax.min) / ax.step();
        let last = (ax.extent - 1) as f64;
        if !(t >= 0.0 && t <= last) {
            return 0.0;
        }
        let i = (t.floor() as usize).min(ax.extent - 2);
        cell.push((i, t - i as f64));
    }
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        for (a, &(i, f)) in cell.iter().enumerate() {
            let up = (corner >> a) & 1 == 1;
            if g.axes()[a].extent == 1 {
                if up {
                    w = 0.0;
                }
                idx[a] = 0;
                continue;
            }
            idx[a] = i + up as usize;
            w *= if up { f } else { 1.0 - f };
        }
        if w != 0.0 {
            acc += w * g.get(&idx);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hk_omega() -> Vec<Axis> {
        vec![
            Axis::new("H", 9, -1.0, 1.0),
            Axis::new("K", 9, -1.0, 1.0),
            Axis::new("omega", 11, 0.0, 100.0),
        ]
    }

    #[test]
    fn peak_sits_on_dispersion() {
        let p = AnalyticParams::default();
        for (h, k) in [(0.1, 0.3), (0.5, 0.0), (-0.7, 0.2)] {
            let w = p.dispersion(h, k);
            assert_eq!(p.intensity(h, k, w), p.amplitude);
        }
        // gapless at the zone centre
        assert_eq!(p.dispersion(0.0, 0.0), 0.0);
    }

    #[test]
    fn symmetric_in_h_and_k() {
        let m = SignalModel::Analytic(AnalyticParams::default());
        let axes = hk_omega();
        let b = m.bind(&axes).unwrap();
        for (h, k, w) in [(0.13, 0.41, 30.0), (-0.6, 0.25, 55.5), (0.9, -0.05, 12.0)] {
            assert_eq!(b.eval(&[h, k, w]), b.eval(&[k, h, w]));
        }
    }

    #[test]
    fn axis_order_does_not_matter() {
        let m = SignalModel::Analytic(AnalyticParams::default());
        let a1 = vec![Axis::new("H", 3, 0.0, 1.0), Axis::new("omega", 3, 0.0, 1.0)];
        let a2 = vec![Axis::new("omega", 3, 0.0, 1.0), Axis::new("H", 3, 0.0, 1.0)];
        let v1 = signal_model_eval(&m, &a1, &[0.2, 40.0, 0.4, 61.0]).unwrap();
        let v2 = signal_model_eval(&m, &a2, &[40.0, 0.2, 61.0, 0.4]).unwrap();
        assert_eq!(v1, v2);
        assert!(v1.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn unknown_or_missing_roles_fail() {
        let m = SignalModel::Analytic(AnalyticParams::default());
        assert!(m.bind(&[Axis::new("x", 2, 0.0, 1.0)]).is_err());
        assert!(m.bind(&[Axis::new("H", 2, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn gridded_interpolates_and_zero_extends() {
        let axes = vec![Axis::new("H", 3, 0.0, 2.0), Axis::new("omega", 2, 0.0, 1.0)];
        let g = Grid::from_fn(axes.clone(), |i| (i[0] * 2 + i[1]) as f64).unwrap();
        let m = SignalModel::Gridded(g);
        let v = signal_model_eval(&m, &axes, &[0.5, 0.5, 2.0, 1.0, 2.1, 0.5, -0.01, 0.0]).unwrap();
        // bilinear of 2h + w at (0.5, 0.5) is 1.5
        assert!((v[0] - 1.5).abs() < 1e-15);
        assert_eq!(v[1], 5.0);
        assert_eq!(v[2], 0.0);
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn gridded_rejects_malformed_backing() {
        let axes = vec![Axis::new("H", 2, 0.0, 1.0)];
        let bad = Grid::new(axes.clone(), vec![1.0, -2.0]).unwrap();
        assert!(SignalModel::Gridded(bad).bind(&axes).is_err());
        let ok = Grid::new(axes, vec![1.0, 2.0]).unwrap();
        assert!(SignalModel::Gridded(ok)
            .bind(&[Axis::new("K", 2, 0.0, 1.0)])
            .is_err());
    }
}
