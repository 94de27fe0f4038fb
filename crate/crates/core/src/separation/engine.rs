//! Forward model, loss and the joint training loop.
//!
//! Per optimizer step: sample a batch of centers, evaluate the kernel net
//! at the centers, weight the zero-extended ideal signal over each window,
//! add the background net, and take an Adam step on
//! `recon(pred, obs) + λ · penalty(bkgd)`.

use super::config::{LossKind, TrainConfig, Transform};
use super::window::{convolve_signal, Window};
use crate::autodiff::{AdamState, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::models::{window_len, ModelBundle, SignalModel};
use crate::rng::{self, SeededRng};

const PREDICT_CHUNK: usize = 2048;

/// Loss over plain vectors.
pub fn loss(pred: &[f64], observed: &[f64], bkgd: &[f64], lambda: f64, kind: LossKind) -> Result<f64> {
    if pred.len() != observed.len() || pred.len() != bkgd.len() {
        return Err(Error::shape(format!(
            "loss: pred {}, observed {}, bkgd {}",
            pred.len(),
            observed.len(),
            bkgd.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("loss over zero cells".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let sq_err: f64 = pred.iter().zip(observed).map(|(p, o)| (p - o) * (p - o)).sum();
    let sq_bkg: f64 = bkgd.iter().map(|b| b * b).sum();
    let n = pred.len() as f64;
    Ok(match kind {
        LossKind::MseMean => sq_err / n + lambda * (sq_bkg / n),
        LossKind::L2Norm => sq_err.sqrt() + lambda * sq_bkg.sqrt(),
    })
}

/// Per-center decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub total: Vec<f64>,
    pub signal: Vec<f64>,
    pub background: Vec<f64>,
}

/// Evaluate the dual model at flat cell indices of the bundle's grid.
pub fn predict(bundle: &ModelBundle, centers: &[usize]) -> Result<Prediction> {
    let template = bundle.template();
    if let Some(&bad) = centers.iter().find(|&&c| c >= template.len()) {
        return Err(Error::invalid(format!("center {bad} outside grid of {} cells", template.len())));
    }
    let bound = bundle.signal.bind(&bundle.axes)?;
    let window = Window::new(bundle.meta.r, bundle.dim());
    let k = window.len();

    let mut out = Prediction {
        total: Vec::with_capacity(centers.len()),
        signal: Vec::with_capacity(centers.len()),
        background: Vec::with_capacity(centers.len()),
    };
    let mut idx = vec![0; bundle.dim()];
    let mut nb = Vec::with_capacity(k);
    let mut s_window = vec![0.0; k];
    for chunk in centers.chunks(PREDICT_CHUNK) {
        let coords = bundle.normalized_centers(chunk);
        let kappa = bundle.kernel_net_forward(&coords)?;
        let bkgd = bundle.bkgd_net_forward(&coords)?;
        for (row, &c) in chunk.iter().enumerate() {
            template.unravel_into(c, &mut idx);
            window.neighbor_indices(&template, &idx, &mut nb);
            for (s, n) in s_window.iter_mut().zip(&nb) {
                *s = match n {
                    Some(f) => bound.eval(&template.physical_coords(&template.unravel(*f))),
                    None => 0.0,
                };
            }
            let s1 = convolve_signal(&kappa.data()[row * k..(row + 1) * k], &s_window)?;
            let b = bkgd[row];
            out.signal.push(s1);
            out.background.push(b);
            out.total.push(s1 + b);
        }
    }
    Ok(out)
}

/// Full-grid decomposition: `(total, signal, background)`.
pub fn predict_grid(bundle: &ModelBundle) -> Result<(Grid, Grid, Grid)> {
    let template = bundle.template();
    let s_sim = bundle.signal.sample_on(&bundle.axes)?;
    let window = Window::new(bundle.meta.r, bundle.dim());
    let k = window.len();
    let n = template.len();
    let mut total = Vec::with_capacity(n);
    let mut signal = Vec::with_capacity(n);
    let mut background = Vec::with_capacity(n);
    let mut idx = vec![0; bundle.dim()];
    let mut nb = Vec::with_capacity(k);
    let mut s_window = vec![0.0; k];
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(PREDICT_CHUNK) {
        let coords = bundle.normalized_centers(chunk);
        let kappa = bundle.kernel_net_forward(&coords)?;
        let bkgd = bundle.bkgd_net_forward(&coords)?;
        for (row, &c) in chunk.iter().enumerate() {
            template.unravel_into(c, &mut idx);
            window.neighbor_indices(&template, &idx, &mut nb);
            for (s, nbi) in s_window.iter_mut().zip(&nb) {
                *s = nbi.map_or(0.0, |f| s_sim.values()[f]);
            }
            let s1 = convolve_signal(&kappa.data()[row * k..(row + 1) * k], &s_window)?;
            signal.push(s1);
            background.push(bkgd[row]);
            total.push(s1 + bkgd[row]);
        }
    }
    Ok((
        template.with_values(total)?,
        template.with_values(signal)?,
        template.with_values(background)?,
    ))
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct SeparationResult {
    /// `signal + background`.
    pub total: Grid,
    pub signal: Grid,
    pub background: Grid,
    /// Cell-weighted mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
    pub bundle: ModelBundle,
}

impl SeparationResult {
    /// `max |total − (signal + background)|`.
    pub fn decomposition_residual(&self) -> f64 {
        self.total
            .values()
            .iter()
            .zip(self.signal.values())
            .zip(self.background.values())
            .map(|((t, s), b)| (t - (s + b)).abs())
            .fold(0.0, f64::max)
    }
}

/// Stateful training loop; [`train`] drives it to completion.
pub struct Trainer {
    config: TrainConfig,
    observed: Vec<f64>,
    /// `observed` after the loss transform.
    target: Vec<f64>,
    coords: Vec<f64>,
    table: Vec<f64>,
    k: usize,
    bundle: ModelBundle,
    adam: AdamState,
    rng: SeededRng,
    order: Vec<usize>,
    trace: Vec<f64>,
}

impl Trainer {
    pub fn new(observed: &Grid, signal: &SignalModel, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if observed.is_empty() {
            return Err(Error::Empty("observed grid".into()));
        }
        if !observed.is_finite() {
            return Err(Error::invalid("observed grid contains non-finite values"));
        }
        let d = observed.ndim();
        let k = window_len(config.r, d);
        let window_cells = (observed.len() as u64).saturating_mul(k as u64);
        if window_cells > config.compute_budget && !config.force {
            return Err(Error::ComputeBudget {
                window_cells,
                budget: config.compute_budget,
            });
        }
        let target: Vec<f64> = match config.transform {
            Transform::Identity => observed.values().to_vec(),
            Transform::Log1p => {
                if observed.values().iter().any(|&v| v <= -1.0) {
                    return Err(Error::invalid("log1p transform needs observed > -1"));
                }
                observed.values().iter().map(|v| v.ln_1p()).collect()
            }
        };
        let bundle = ModelBundle::init(observed.axes(), signal.clone(), config)?;
        let s_sim = signal.sample_on(observed.axes())?;
        let table = Window::new(config.r, d).gather_table(&s_sim);
        let coords = bundle.normalized_centers(&(0..observed.len()).collect::<Vec<_>>());
        let params: Vec<Tensor> = bundle
            .kernel_net
            .net
            .params
            .iter()
            .chain(&bundle.bkgd_net.net.params)
            .cloned()
            .collect();
        let adam = AdamState::new(&params, config.lr)?;
        Ok(Trainer {
            config: config.clone(),
            observed: observed.values().to_vec(),
            target,
            coords,
            table,
            k,
            bundle,
            adam,
            rng: rng::derive(config.seed, 3),
            order: (0..observed.len()).collect(),
            trace: Vec::new(),
        })
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.trace
    }

    /// One pass over every center in a fresh random order.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let epoch = self.trace.len();
        rng::shuffle(&mut self.rng, &mut self.order);
        let order = std::mem::take(&mut self.order);
        let mut weighted = 0.0;
        let mut result = Ok(());
        for batch in order.chunks(self.config.batch_size) {
            match self.step(batch) {
                Ok(l) if l.is_finite() => weighted += l * batch.len() as f64,
                Ok(l) => {
                    result = Err(Error::Divergence { epoch, loss: l });
                    break;
                }
                Err(Error::NonFinite { .. }) => {
                    result = Err(Error::Divergence { epoch, loss: f64::NAN });
                    break;
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.order = order;
        result?;
        let mean = weighted / self.order.len() as f64;
        self.trace.push(mean);
        Ok(mean)
    }

    fn step(&mut self, batch: &[usize]) -> Result<f64> {
        let d = self.bundle.dim();
        let k = self.k;
        let b = batch.len();
        let mut coords = Vec::with_capacity(b * d);
        let mut s_rows = Vec::with_capacity(b * k);
        let mut target = Vec::with_capacity(b);
        for &c in batch {
            coords.extend_from_slice(&self.coords[c * d..(c + 1) * d]);
            s_rows.extend_from_slice(&self.table[c * k..(c + 1) * k]);
            target.push(self.target[c]);
        }

        let mut g = Graph::new();
        let kp = self.bundle.kernel_net.net.register(&mut g, true);
        let bp = self.bundle.bkgd_net.net.register(&mut g, true);
        let x = g.constant(Tensor::matrix(b, d, coords)?);
        let s = g.constant(Tensor::matrix(b, k, s_rows)?);
        let obs = g.constant(Tensor::vector(target));

        let kappa = self.bundle.kernel_net.forward(&mut g, &kp, x)?;
        let weighted = g.mul(kappa, s)?;
        let s1 = g.sum_rows(weighted)?;
        let bk = self.bundle.bkgd_net.forward(&mut g, &bp, x)?;
        let bk = g.reshape(bk, vec![b])?;
        let pred = g.add(s1, bk)?;
        let loss = objective(&mut g, pred, obs, bk, &self.config)?;
        let value = g.value(loss).data()[0];

        let grads = g.backward_scalar(loss)?;
        let grad_tensors: Vec<Tensor> = kp.iter().chain(&bp).map(|&id| grads.tensor(id)).collect();
        let nk = kp.len();
        let mut params: Vec<Tensor> = std::mem::take(&mut self.bundle.kernel_net.net.params);
        params.append(&mut std::mem::take(&mut self.bundle.bkgd_net.net.params));
        let stepped = self.adam.step(&mut params, &grad_tensors);
        self.bundle.bkgd_net.net.params = params.split_off(nk);
        self.bundle.kernel_net.net.params = params;
        stepped?;
        Ok(value)
    }

    pub fn finish(self) -> Result<SeparationResult> {
        let (total, signal, background) = predict_grid(&self.bundle)?;
        debug_assert_eq!(total.len(), self.observed.len());
        Ok(SeparationResult {
            total,
            signal,
            background,
            loss_trace: self.trace,
            bundle: self.bundle,
        })
    }
}

fn objective(g: &mut Graph, pred: NodeId, obs: NodeId, bkgd: NodeId, config: &TrainConfig) -> Result<NodeId> {
    let pred = match config.transform {
        Transform::Identity => pred,
        Transform::Log1p => g.log1p(pred)?,
    };
    let se = g.squared_error(pred, obs)?;
    let bb = g.mul(bkgd, bkgd)?;
    let (recon, penalty) = match config.loss_kind {
        LossKind::MseMean => (g.mean(se)?, g.mean(bb)?),
        LossKind::L2Norm => {
            let s = g.sum(se)?;
            let p = g.sum(bb)?;
            (g.sqrt(s)?, g.sqrt(p)?)
        }
    };
    let penalty = g.scale(penalty, config.lambda)?;
    g.add(recon, penalty)
}

/// Jointly train the kernel and background networks on `observed`.
pub fn train(observed: &Grid, signal: &SignalModel, config: &TrainConfig) -> Result<SeparationResult> {
    let mut trainer = Trainer::new(observed, signal, config)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    trainer.finish()
}
