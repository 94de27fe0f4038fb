//! Synthetic mixtures with known components.
//!
//! `observed = κ ⊛ S_sim + B + N`, where κ is a spatially varying,
//! simplex-normalized anisotropic Gaussian whose principal axis rotates
//! across the first grid axis, `B` is a nonnegative sum of low-frequency
//! cosine modes and `N` is optional Poisson noise.

use std::f64::consts::PI;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::models::{window_len, AnalyticParams, SignalModel};
use crate::rng::{self, SeededRng};
use crate::separation::Window;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueKernel {
    pub r: usize,
    /// Std-dev along the principal axis, cells.
    pub sigma_major: f64,
    /// Std-dev across it (and along axes beyond the first two), cells.
    pub sigma_minor: f64,
    /// Total rotation of the principal axis from one end of axis 0 to the other, radians.
    pub rotation: f64,
}

impl Default for TrueKernel {
    fn default() -> Self {
        TrueKernel {
            r: 2,
            sigma_major: 1.2,
            sigma_minor: 0.6,
            rotation: PI / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub modes: usize,
    /// Mean level; the field stays within `[0.2, 1.8] × amplitude`.
    pub amplitude: f64,
    /// Largest spatial frequency per axis, in cycles across the domain.
    pub max_freq: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            modes: 4,
            amplitude: 3.0,
            max_freq: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    #[default]
    None,
    /// Counts ~ Poisson(scale · clean), reported as counts / scale.
    Poisson { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub label: String,
    pub extent: usize,
    pub min: f64,
    pub max: f64,
}

impl From<&AxisSpec> for Axis {
    fn from(a: &AxisSpec) -> Self {
        Axis::new(a.label.clone(), a.extent, a.min, a.max)
    }
}

impl From<&Axis> for AxisSpec {
    fn from(a: &Axis) -> Self {
        AxisSpec {
            label: a.label.clone(),
            extent: a.extent,
            min: a.min,
            max: a.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub axes: Vec<AxisSpec>,
    pub signal: AnalyticParams,
    pub kernel: TrueKernel,
    pub background: BackgroundSpec,
    pub noise: Noise,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig::square_2d(64)
    }
}

impl SynthConfig {
    /// `n × n` grid over `H ∈ [-1, 1]` r.l.u. and `ω ∈ [0, 100]` meV.
    pub fn square_2d(n: usize) -> Self {
        SynthConfig {
            axes: vec![
                AxisSpec {
                    label: "H".into(),
                    extent: n,
                    min: -1.0,
                    max: 1.0,
                },
                AxisSpec {
                    label: "omega".into(),
                    extent: n,
                    min: 0.0,
                    max: 100.0,
                },
            ],
            signal: AnalyticParams::default(),
            kernel: TrueKernel::default(),
            background: BackgroundSpec::default(),
            noise: Noise::None,
            seed: 0,
        }
    }

    /// `n⁴` grid over `(H, K, L, ω)`.
    pub fn hypercube_4d(n: usize) -> Self {
        let q = |label: &str| AxisSpec {
            label: label.into(),
            extent: n,
            min: -1.0,
            max: 1.0,
        };
        SynthConfig {
            axes: vec![
                q("H"),
                q("K"),
                q("L"),
                AxisSpec {
                    label: "omega".into(),
                    extent: n,
                    min: 0.0,
                    max: 100.0,
                },
            ],
            ..SynthConfig::square_2d(n)
        }
    }

    pub fn grid_axes(&self) -> Vec<Axis> {
        self.axes.iter().map(Axis::from).collect()
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel::Analytic(self.signal)
    }

    pub fn validate(&self) -> Result<()> {
        Grid::zeros(self.grid_axes())?;
        if self.axes.iter().any(|a| a.extent < 2) {
            return Err(Error::invalid("synthetic axes need at least 2 samples"));
        }
        self.signal.validate()?;
        let k = &self.kernel;
        if k.r < 1 || !(k.sigma_major > 0.0) || !(k.sigma_minor > 0.0) || !k.rotation.is_finite() {
            return Err(Error::invalid(format!("invalid true kernel {k:?}")));
        }
        let b = &self.background;
        if !(b.amplitude >= 0.0) || !(b.max_freq >= 0.0) || !b.amplitude.is_finite() {
            return Err(Error::invalid(format!("invalid background {b:?}")));
        }
        if let Noise::Poisson { scale } = self.noise {
            if !(scale > 0.0) || !scale.is_finite() {
                return Err(Error::invalid("poisson scale must be > 0"));
            }
        }
        Ok(())
    }
}

/// Ground truth and observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub config: SynthConfig,
    pub observed: Grid,
    /// κ ⊛ S_sim
    pub signal: Grid,
    pub background: Grid,
    pub noise: Grid,
    /// Ideal signal sampled on the grid.
    pub s_sim: Grid,
    /// Window weights per cell; trailing axis `tap` of length `(2r+1)^d`.
    pub kernel: Grid,
}

/// Materialize the true kernel weights for every cell: row-major `[cells, taps]`.
pub fn true_kernel_field(axes: &[Axis], spec: &TrueKernel) -> Result<Vec<f64>> {
    let template = Grid::zeros(axes.to_vec())?;
    let d = axes.len();
    let window = Window::new(spec.r, d);
    let k = window.len();
    let mut out = Vec::with_capacity(template.len() * k);
    let mut idx = vec![0; d];
    let mut w = vec![0.0; k];
    for flat in 0..template.len() {
        template.unravel_into(flat, &mut idx);
        let u0 = axes[0].normalized(idx[0]);
        kernel_at(spec, u0, &window, &mut w);
        out.extend_from_slice(&w);
    }
    Ok(out)
}

fn kernel_at(spec: &TrueKernel, u0: f64, window: &Window, w: &mut [f64]) {
    let theta = 0.5 * spec.rotation * u0;
    let (s, c) = theta.sin_cos();
    let (vm, vn) = (spec.sigma_major.powi(2), spec.sigma_minor.powi(2));
    let mut total = 0.0;
    for (j, wj) in w.iter_mut().enumerate() {
        let off = window.offset(j);
        let e = match off.len() {
            1 => {
                // 1-D: width interpolates between the two sigmas along the axis
                let sig = spec.sigma_minor + (spec.sigma_major - spec.sigma_minor) * 0.5 * (u0 + 1.0);
                let x = off[0] as f64;
                x * x / (2.0 * sig * sig)
            }
            _ => {
                let (x, y) = (off[0] as f64, off[1] as f64);
                let a = x * c + y * s;
                let b = -x * s + y * c;
                let rest: f64 = off[2..].iter().map(|&o| (o * o) as f64).sum();
                a * a / (2.0 * vm) + (b * b + rest) / (2.0 * vn)
            }
        };
        *wj = (-e).exp();
        total += *wj;
    }
    for wj in w.iter_mut() {
        *wj /= total;
    }
}

/// Smooth nonnegative background field.
pub fn background_field(axes: &[Axis], spec: &BackgroundSpec, rng: &mut SeededRng) -> Result<Grid> {
    let d = axes.len();
    struct Mode {
        weight: f64,
        freq: Vec<f64>,
        phase: f64,
    }
    let mut modes: Vec<Mode> = (0..spec.modes)
        .map(|_| Mode {
            weight: rng::uniform(rng, 0.2, 1.0),
            freq: (0..d).map(|_| rng::uniform(rng, -spec.max_freq, spec.max_freq)).collect(),
            phase: rng::uniform(rng, 0.0, 2.0 * PI),
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.weight).sum();
    for m in &mut modes {
        m.weight *= 0.8 / total;
    }
    Grid::from_fn(axes.to_vec(), |idx| {
        let mut v = 1.0;
        for m in &modes {
            let arg: f64 = idx
                .iter()
                .zip(axes)
                .zip(&m.freq)
                .map(|((&i, a), f)| PI * f * a.normalized(i))
                .sum();
            v += m.weight * (arg + m.phase).cos();
        }
        spec.amplitude * v
    })
}

/// Draw `Poisson(scale · clean) / scale` per cell. Returns `(noisy, noisy − clean)`.
pub fn poissonize(clean: &Grid, scale: f64, rng: &mut SeededRng) -> Result<(Grid, Grid)> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("poisson scale must be > 0, got {scale}")));
    }
    if let Some(v) = clean.values().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("poissonize needs nonnegative input, found {v}")));
    }
    let mut noisy = Vec::with_capacity(clean.len());
    for &c in clean.values() {
        let mean = scale * c;
        let counts = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
                .sample(rng)
        } else {
            0.0
        };
        noisy.push(counts / scale);
    }
    let noisy = clean.with_values(noisy)?;
    let noise = noisy.zip_map(clean, |n, c| n - c)?;
    Ok((noisy, noise))
}

/// `Σ_j κ_j(x) · S(x + δ_j)` with zero extension.
pub fn convolve_field(s_sim: &Grid, kernel: &[f64], r: usize) -> Result<Grid> {
    let window = Window::new(r, s_sim.ndim());
    let k = window.len();
    if kernel.len() != s_sim.len() * k {
        return Err(Error::shape(format!(
            "kernel field has {} weights for {} cells × {k} taps",
            kernel.len(),
            s_sim.len()
        )));
    }
    let table = window.gather_table(s_sim);
    let values = table
        .chunks(k)
        .zip(kernel.chunks(k))
        .map(|(s, w)| s.iter().zip(w).fold(0.0, |acc, (s, w)| acc + w * s))
        .collect();
    s_sim.with_values(values)
}

pub fn generate(config: &SynthConfig) -> Result<SynthBundle> {
    config.validate()?;
    let axes = config.grid_axes();
    let s_sim = config.signal_model().sample_on(&axes)?;
    let kernel_values = true_kernel_field(&axes, &config.kernel)?;
    let signal = convolve_field(&s_sim, &kernel_values, config.kernel.r)?;
    let mut bg_rng = rng::derive(config.seed, 10);
    let background = background_field(&axes, &config.background, &mut bg_rng)?;
    let clean = signal.zip_map(&background, |s, b| s + b)?;
    let (observed, noise) = match config.noise {
        Noise::None => (clean.clone(), Grid::zeros(axes.clone())?),
        Noise::Poisson { scale } => {
            let mut noise_rng = rng::derive(config.seed, 11);
            poissonize(&clean, scale, &mut noise_rng)?
        }
    };
    let mut kernel_axes = axes.clone();
    let taps = window_len(config.kernel.r, axes.len());
    kernel_axes.push(Axis::new("tap", taps, 0.0, (taps - 1) as f64));
    let kernel = Grid::new(kernel_axes, kernel_values)?;
    Ok(SynthBundle {
        config: config.clone(),
        observed,
        signal,
        background,
        noise,
        s_sim,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SynthConfig {
        SynthConfig::square_2d(n)
    }

    /// Nested-loop convolution, written independently of `Window`.
    fn oracle_convolution(s: &Grid, kernel: &[f64], r: usize) -> Vec<f64> {
        let (nx, ny) = (s.axes()[0].extent as isize, s.axes()[1].extent as isize);
        let side = (2 * r + 1) as isize;
        let ri = r as isize;
        let mut out = vec![0.0; s.len()];
        for x in 0..nx {
            for y in 0..ny {
                let c = (x * ny + y) as usize;
                let mut acc = 0.0;
                for dx in -ri..=ri {
                    for dy in -ri..=ri {
                        let tap = ((dx + ri) * side + (dy + ri)) as usize;
                        let (px, py) = (x + dx, y + dy);
                        let v = if px >= 0 && px < nx && py >= 0 && py < ny {
                            s.values()[(px * ny + py) as usize]
                        } else {
                            0.0
                        };
                        acc += kernel[c * (side * side) as usize + tap] * v;
                    }
                }
                out[c] = acc;
            }
        }
        out
    }

    #[test]
    fn signal_matches_nested_loop_oracle() {
        let b = generate(&small(12)).unwrap();
        let expected = oracle_convolution(&b.s_sim, b.kernel.values(), 2);
        for (a, e) in b.signal.values().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_field_is_simplex() {
        let b = generate(&small(10)).unwrap();
        for w in b.kernel.values().chunks(25) {
            assert!(w.iter().all(|&v| v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // rotation makes the kernel vary across axis 0
        let first = &b.kernel.values()[..25];
        let last = &b.kernel.values()[b.kernel.len() - 25..];
        assert!(first.iter().zip(last).any(|(a, b)| (a - b).abs() > 1e-3));
    }

    #[test]
    fn noiseless_identity_is_exact() {
        let b = generate(&small(16)).unwrap();
        for i in 0..b.observed.len() {
            let sum = b.signal.values()[i] + b.background.values()[i] + b.noise.values()[i];
            assert_eq!(b.observed.values()[i], sum);
        }
        assert!(b.background.min() >= 0.0);
    }

    #[test]
    fn delta_kernel_without_background_reproduces_s_sim() {
        let mut cfg = small(12);
        cfg.kernel.sigma_major = 1e-3;
        cfg.kernel.sigma_minor = 1e-3;
        cfg.background.amplitude = 0.0;
        let b = generate(&cfg).unwrap();
        assert_eq!(b.observed.values(), b.s_sim.values());

        cfg.background.amplitude = 2.0;
        let b = generate(&cfg).unwrap();
        for i in 0..b.observed.len() {
            assert_eq!(b.observed.values()[i], b.s_sim.values()[i] + b.background.values()[i]);
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let mut cfg = small(10);
        cfg.noise = Noise::Poisson { scale: 5.0 };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(generate(&cfg).unwrap().observed, generate(&other).unwrap().observed);
    }

    #[test]
    fn four_dimensional_generation() {
        let mut cfg = SynthConfig::hypercube_4d(5);
        cfg.kernel.r = 1;
        let b = generate(&cfg).unwrap();
        assert_eq!(b.observed.len(), 625);
        assert_eq!(b.kernel.extents(), vec![5, 5, 5, 5, 81]);
    }

    #[test]
    fn poisson_edge_cases() {
        let axes = vec![Axis::new("H", 3, 0.0, 1.0)];
        let clean = Grid::new(axes.clone(), vec![0.0, 1.0, 2.0]).unwrap();
        let mut r = rng::seeded(0);
        for _ in 0..50 {
            let (noisy, _) = poissonize(&clean, 3.0, &mut r).unwrap();
            assert_eq!(noisy.values()[0], 0.0);
        }
        let neg = Grid::new(axes, vec![0.0, -1.0, 2.0]).unwrap();
        assert!(poissonize(&neg, 1.0, &mut r).is_err());
        assert!(poissonize(&clean, 0.0, &mut r).is_err());
    }

    #[test]
    fn poisson_large_scale_converges() {
        let axes = vec![Axis::new("H", 100, 0.0, 1.0)];
        let clean = Grid::from_fn(axes, |i| 1.0 + i[0] as f64 * 0.05).unwrap();
        let (noisy, noise) = poissonize(&clean, 1e6, &mut rng::seeded(1)).unwrap();
        for (n, c) in noisy.values().iter().zip(clean.values()) {
            assert!((n - c).abs() / c < 0.01);
        }
        assert!(noise.values().iter().all(|v| v.abs() < 0.01 * 6.0));
    }

    #[test]
    fn poisson_moments() {
        // mean within 3·√(c / (n s)), variance within 10% of c / s
        let (c, s, n) = (2.5, 4.0, 10_000usize);
        let axes = vec![Axis::new("H", n, 0.0, 1.0)];
        let clean = Grid::new(axes, vec![c; n]).unwrap();
        let (noisy, _) = poissonize(&clean, s, &mut rng::seeded(9)).unwrap();
        let mean = noisy.mean();
        let var = noisy.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - c).abs() < 3.0 * (c / (n as f64 * s)).sqrt());
        assert!((var - c / s).abs() < 0.1 * c / s);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(8);
        cfg.axes[0].max = cfg.axes[0].min;
        assert!(generate(&cfg).is_err());
        let mut cfg = small(8);
        cfg.noise = Noise::Poisson { scale: -1.0 };
        assert!(generate(&cfg).is_err());
    }
}
