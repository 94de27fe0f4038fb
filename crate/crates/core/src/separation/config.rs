use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{DEFAULT_KERNEL_LAYERS, DEFAULT_WIDTH};

/// Pointwise transform applied to predicted and observed values inside the
/// reconstruction term only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    Log1p,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `mean((pred − obs)²) + λ · mean(bkgd²)`
    #[default]
    MseMean,
    /// `‖pred − obs‖₂ + λ · ‖bkgd‖₂`
    L2Norm,
}

impl Transform {
    pub fn code(self) -> u8 {
        match self {
            Transform::Identity => 0,
            Transform::Log1p => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Transform::Identity),
            1 => Some(Transform::Log1p),
            _ => None,
        }
    }
}

impl LossKind {
    pub fn code(self) -> u8 {
        match self {
            LossKind::MseMean => 0,
            LossKind::L2Norm => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LossKind::MseMean),
            1 => Some(LossKind::L2Norm),
            _ => None,
        }
    }
}

impl FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(Transform::Identity),
            "log1p" => Ok(Transform::Log1p),
            _ => Err(Error::Config(format!("unknown transform {s:?} (identity | log1p)"))),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse_mean" | "mse" => Ok(LossKind::MseMean),
            "l2_norm" | "l2" => Ok(LossKind::L2Norm),
            _ => Err(Error::Config(format!("unknown loss kind {s:?} (mse_mean | l2_norm)"))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Identity => "identity",
            Transform::Log1p => "log1p",
        })
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::MseMean => "mse_mean",
            LossKind::L2Norm => "l2_norm",
        })
    }
}

/// Joint-training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Kernel window radius in grid cells.
    pub r: usize,
    /// Background magnitude penalty weight.
    pub lambda: f64,
    pub epochs: usize,
    /// Centers per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub transform: Transform,
    pub loss_kind: LossKind,
    pub kernel_width: usize,
    pub kernel_layers: usize,
    pub bkgd_width: usize,
    /// Upper bound on `cells × (2r+1)^d` accepted without `force`.
    pub compute_budget: u64,
    pub force: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            r: 2,
            lambda: 0.005,
            epochs: 200,
            batch_size: 512,
            lr: 1e-4,
            seed: 0,
            transform: Transform::Identity,
            loss_kind: LossKind::MseMean,
            kernel_width: DEFAULT_WIDTH,
            kernel_layers: DEFAULT_KERNEL_LAYERS,
            bkgd_width: DEFAULT_WIDTH,
            compute_budget: 20_000_000,
            force: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(Error::invalid("r must be >= 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.kernel_width == 0 || self.bkgd_width == 0 || self.kernel_layers == 0 {
            return Err(Error::invalid("network widths and depth must be positive"));
        }
        Ok(())
    }
}
