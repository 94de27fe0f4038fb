use super::networks::{BkgdNet, KernelNet};
use super::signal::SignalModel;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::rng;
use crate::separation::{LossKind, TrainConfig, Transform};

/// Hyperparameters echoed into checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleMeta {
    pub r: usize,
    pub lambda: f64,
    pub seed: u64,
    pub transform: Transform,
    pub loss_kind: LossKind,
}

/// Everything needed to reproduce a separation: both networks, the signal
/// model and the data grid geometry that defines coordinate normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kernel_net: KernelNet,
    pub bkgd_net: BkgdNet,
    pub signal: SignalModel,
    /// Data grid axes; each is mapped affinely onto [-1, 1].
    pub axes: Vec<Axis>,
    pub meta: BundleMeta,
}

impl ModelBundle {
    /// Freshly initialized networks for `config`, drawn from `config.seed`.
    pub fn init(axes: &[Axis], signal: SignalModel, config: &TrainConfig) -> Result<Self> {
        let d = axes.len();
        let mut krng = rng::derive(config.seed, 1);
        let mut brng = rng::derive(config.seed, 2);
        let kernel_net = KernelNet::new(d, config.r, config.kernel_width, config.kernel_layers, &mut krng)?;
        let bkgd_net = BkgdNet::new(d, config.bkgd_width, &mut brng)?;
        ModelBundle::new(
            kernel_net,
            bkgd_net,
            signal,
            axes.to_vec(),
            BundleMeta {
                r: config.r,
                lambda: config.lambda,
                seed: config.seed,
                transform: config.transform,
                loss_kind: config.loss_kind,
            },
        )
    }

    pub fn new(
        kernel_net: KernelNet,
        bkgd_net: BkgdNet,
        signal: SignalModel,
        axes: Vec<Axis>,
        meta: BundleMeta,
    ) -> Result<Self> {
        // validates geometry
        Grid::zeros(axes.clone())?;
        let d = axes.len();
        if kernel_net.dim() != d || bkgd_net.net.spec.input_dim != d {
            return Err(Error::shape(format!(
                "networks take {} / {} coordinates, grid has {d} axes",
                kernel_net.dim(),
                bkgd_net.net.spec.input_dim
            )));
        }
        if kernel_net.r != meta.r {
            return Err(Error::invalid(format!(
                "kernel radius {} disagrees with recorded r = {}",
                kernel_net.r, meta.r
            )));
        }
        let finite = kernel_net
            .net
            .params
            .iter()
            .chain(&bkgd_net.net.params)
            .all(Tensor::is_finite);
        if !finite {
            return Err(Error::NonFinite { op: "parameters" });
        }
        signal.bind(&axes)?;
        Ok(ModelBundle {
            kernel_net,
            bkgd_net,
            signal,
            axes,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Empty grid with the data geometry.
    pub fn template(&self) -> Grid {
        Grid::zeros(self.axes.clone()).expect("validated at construction")
    }

    /// Normalized coordinates of flat cell indices, row-major `[n, d]`.
    pub fn normalized_centers(&self, centers: &[usize]) -> Vec<f64> {
        let t = self.template();
        let mut idx = vec![0; self.dim()];
        let mut out = Vec::with_capacity(centers.len() * self.dim());
        for &c in centers {
            t.unravel_into(c, &mut idx);
            out.extend(idx.iter().zip(&self.axes).map(|(&i, a)| a.normalized(i)));
        }
        out
    }

    /// Kernel weight vectors at normalized centers.
    pub fn kernel_net_forward(&self, centers: &[f64]) -> Result<Tensor> {
        self.kernel_net.weights(centers)
    }

    pub fn bkgd_net_forward(&self, coords: &[f64]) -> Result<Vec<f64>> {
        self.bkgd_net.values(coords)
    }
}
