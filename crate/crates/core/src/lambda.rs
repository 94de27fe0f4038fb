//! Analytic choice of the background penalty weight.
//!
//! `λ* = ‖(obs − f_approx)|Ωᶜ‖₂ / ‖LPF(obs)|Ωᶜ‖₂`, where `Ω` is the support of
//! the ideal signal, `f_approx` is a single low-capacity coordinate-network
//! fit (its residual stands in for noise) and `LPF` a Gaussian low-pass
//! (standing in for the background).

use crate::autodiff::{AdamState, Graph, Tensor};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::models::{BkgdNet, FinalActivation, SignalModel, SirenNet, DEFAULT_WIDTH};
use crate::rng;
use crate::separation::Window;

pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_LPF_SIGMA: f64 = 5.0;

/// Boolean support `Ω` over a grid (true = inside).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    axes: Vec<Axis>,
    inside: Vec<bool>,
    pub tau: f64,
    pub source: String,
}

impl SupportMask {
    pub fn new(axes: Vec<Axis>, inside: Vec<bool>, tau: f64, source: impl Into<String>) -> Result<Self> {
        let template = Grid::zeros(axes)?;
        if inside.len() != template.len() {
            return Err(Error::shape(format!(
                "mask has {} cells, grid has {}",
                inside.len(),
                template.len()
            )));
        }
        Ok(SupportMask {
            axes: template.axes().to_vec(),
            inside,
            tau,
            source: source.into(),
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn count_outside(&self) -> usize {
        self.len() - self.count_inside()
    }

    /// `1.0` inside, `0.0` outside.
    pub fn to_grid(&self) -> Grid {
        Grid::new(
            self.axes.clone(),
            self.inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask geometry was validated on construction")
    }

    /// Grow `Ω` by a `(2r+1)^d` box, the footprint of a radius-`r` kernel.
    pub fn dilate(&self, r: usize) -> SupportMask {
        let template = self.to_grid();
        let window = Window::new(r, template.ndim());
        let mut nb = Vec::with_capacity(window.len());
        let mut idx = vec![0; template.ndim()];
        let mut grown = self.inside.clone();
        for (i, &inside) in self.inside.iter().enumerate() {
            if !inside {
                continue;
            }
            template.unravel_into(i, &mut idx);
            window.neighbor_indices(&template, &idx, &mut nb);
            for j in nb.iter().flatten() {
                grown[*j] = true;
            }
        }
        SupportMask {
            axes: self.axes.clone(),
            inside: grown,
            tau: self.tau,
            source: format!("{}, dilated by {r}", self.source),
        }
    }

    fn check_grid(&self, g: &Grid, what: &str) -> Result<()> {
        if g.extents() != self.axes.iter().map(|a| a.extent).collect::<Vec<_>>() {
            return Err(Error::shape(format!(
                "{what} extents {:?} do not match mask extents",
                g.extents()
            )));
        }
        Ok(())
    }
}

/// `Ω = {x : S_sim(x) > τ · max S_sim}`.
pub fn derive_support(signal: &SignalModel, axes: &[Axis], tau: f64) -> Result<SupportMask> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("support threshold must lie in (0, 1), got {tau}")));
    }
    let s = signal.sample_on(axes)?;
    let peak = s.max();
    if !(peak > 0.0) {
        return Err(Error::EmptySupport);
    }
    let inside = s.values().iter().map(|&v| v > tau * peak).collect();
    SupportMask::new(axes.to_vec(), inside, tau, "threshold on sampled signal model")
}

/// [`derive_support`] grown by the footprint of a radius-`r` kernel, so that
/// the kernel-spread signal stays inside `Ω`.
pub fn derive_support_for_kernel(signal: &SignalModel, axes: &[Axis], tau: f64, r: usize) -> Result<SupportMask> {
    Ok(derive_support(signal, axes, tau)?.dilate(r))
}

/// Single-network fit settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub width: usize,
    /// Sine layers; 1 reproduces the background network's shape.
    pub layers: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// In `estimate_lambda`, train only on cells outside the support.
    pub complement_only: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            width: DEFAULT_WIDTH,
            layers: 1,
            epochs: 100,
            lr: 1e-3,
            batch_size: 64,
            seed: 0,
            complement_only: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingleFit {
    pub f_approx: Grid,
    /// `observed − f_approx`
    pub residual: Grid,
    pub loss_trace: Vec<f64>,
}

/// Fit one sine network (background-shaped by default, linear output) to `observed`
/// with plain MSE. Targets are standardized during training.
pub fn fit_single_inr(observed: &Grid, config: &FitConfig) -> Result<SingleFit> {
    fit_on_cells(observed, None, config)
}

/// As [`fit_single_inr`], with training restricted to cells where `train_on` is true.
pub fn fit_single_inr_masked(observed: &Grid, train_on: &[bool], config: &FitConfig) -> Result<SingleFit> {
    if train_on.len() != observed.len() {
        return Err(Error::shape(format!(
            "training mask has {} cells, grid has {}",
            train_on.len(),
            observed.len()
        )));
    }
    fit_on_cells(observed, Some(train_on), config)
}

fn fit_on_cells(observed: &Grid, train_on: Option<&[bool]>, config: &FitConfig) -> Result<SingleFit> {
    if !observed.is_finite() {
        return Err(Error::invalid("observed grid contains non-finite values"));
    }
    if config.width == 0 || config.layers == 0 || config.batch_size == 0 || !(config.lr >= 0.0) || !config.lr.is_finite() {
        return Err(Error::invalid(format!("invalid fit config {config:?}")));
    }
    let d = observed.ndim();
    let mut spec = BkgdNet::spec(d, config.width);
    spec.final_activation = FinalActivation::None;
    spec.hidden_dims = vec![config.width; config.layers];
    let mut net = SirenNet::new(spec, &mut rng::derive(config.seed, 4))?;

    let cells: Vec<usize> = match train_on {
        Some(m) => (0..observed.len()).filter(|&i| m[i]).collect(),
        None => (0..observed.len()).collect(),
    };
    if cells.is_empty() {
        return Err(Error::Empty("no cells to fit".into()));
    }
    let n = cells.len();
    let mean = cells.iter().map(|&c| observed.values()[c]).sum::<f64>() / n as f64;
    let var = cells.iter().map(|&c| (observed.values()[c] - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let target: Vec<f64> = observed.values().iter().map(|v| (v - mean) / scale).collect();
    let mut coords = Vec::with_capacity(observed.len() * d);
    for c in 0..observed.len() {
        coords.extend(observed.normalized_coords(&observed.unravel(c)));
    }

    let mut adam = AdamState::new(&net.params, config.lr)?;
    let mut order = cells;
    let mut shuffle_rng = rng::derive(config.seed, 5);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            let b = batch.len();
            let mut x = Vec::with_capacity(b * d);
            let mut y = Vec::with_capacity(b);
            for &c in batch {
                x.extend_from_slice(&coords[c * d..(c + 1) * d]);
                y.push(target[c]);
            }
            let mut g = Graph::new();
            let ids = net.register(&mut g, true);
            let xi = g.constant(Tensor::matrix(b, d, x)?);
            let yi = g.constant(Tensor::vector(y));
            let out = net.spec.forward(&mut g, &ids, xi)?;
            let out = g.reshape(out, vec![b])?;
            let se = g.squared_error(out, yi)?;
            let loss = g.mean(se)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            let grads = g.backward_scalar(loss)?;
            let gt: Vec<Tensor> = ids.iter().map(|&id| grads.tensor(id)).collect();
            adam.step(&mut net.params, &gt).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence { epoch, loss: value },
                e => e,
            })?;
            weighted += value * b as f64;
        }
        trace.push(weighted / n as f64);
    }

    let fitted = net.evaluate(&coords)?;
    let f_approx = observed.with_values(fitted.data().iter().map(|v| mean + v * scale).collect())?;
    let residual = observed.zip_map(&f_approx, |o, f| o - f)?;
    Ok(SingleFit {
        f_approx,
        residual,
        loss_trace: trace,
    })
}

/// Mirror an out-of-range index back into `0..n` (edge sample repeated).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

/// Normalized Gaussian taps for radius `round(4σ)`.
pub fn gaussian_taps(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("filter sigma must be > 0, got {sigma}")));
    }
    let radius = (4.0 * sigma + 0.5) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    Ok(taps)
}

/// Separable Gaussian smoothing along every axis with mirrored edges.
pub fn gaussian_lpf(grid: &Grid, sigma: f64) -> Result<Grid> {
    let taps = gaussian_taps(sigma)?;
    let radius = (taps.len() / 2) as isize;
    let extents = grid.extents();
    let mut cur = grid.values().to_vec();
    let mut next = vec![0.0; cur.len()];
    for (axis, &n) in extents.iter().enumerate() {
        let stride: usize = extents[axis + 1..].iter().product();
        let outer: usize = extents[..axis].iter().product();
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for i in 0..n {
                    let mut acc = 0.0;
                    for (t, w) in taps.iter().enumerate() {
                        let j = reflect(i as isize + t as isize - radius, n);
                        acc += w * cur[base + j * stride];
                    }
                    next[base + i * stride] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    grid.with_values(cur)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub lambda: f64,
    /// `‖(obs − f_approx)|Ωᶜ‖₂`
    pub numerator: f64,
    /// `‖LPF(obs)|Ωᶜ‖₂`
    pub denominator: f64,
    /// Cells in `Ωᶜ`.
    pub outside_cells: usize,
}

/// The ratio itself, given a precomputed fit.
pub fn lambda_ratio(observed: &Grid, f_approx: &Grid, mask: &SupportMask, sigma: f64) -> Result<LambdaEstimate> {
    observed.check_same_shape(f_approx, "f_approx")?;
    mask.check_grid(observed, "observed")?;
    let outside = mask.count_outside();
    if outside == 0 {
        return Err(Error::Empty("support complement".into()));
    }
    let smooth = gaussian_lpf(observed, sigma)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &inside) in mask.inside().iter().enumerate() {
        if !inside {
            num += (observed.values()[i] - f_approx.values()[i]).powi(2);
            den += smooth.values()[i].powi(2);
        }
    }
    let (num, den) = (num.sqrt(), den.sqrt());
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator("low-passed data vanishes outside the support".into()));
    }
    Ok(LambdaEstimate {
        lambda: num / den,
        numerator: num,
        denominator: den,
        outside_cells: outside,
    })
}

/// Fit `f_approx`, then form the ratio.
pub fn estimate_lambda(observed: &Grid, mask: &SupportMask, sigma: f64, fit: &FitConfig) -> Result<LambdaEstimate> {
    mask.check_grid(observed, "observed")?;
    if mask.count_outside() == 0 {
        return Err(Error::Empty("support complement".into()));
    }
    let single = if fit.complement_only {
        let outside: Vec<bool> = mask.inside().iter().map(|&b| !b).collect();
        fit_single_inr_masked(observed, &outside, fit)?
    } else {
        fit_single_inr(observed, fit)?
    };
    lambda_ratio(observed, &single.f_approx, mask, sigma)
}
