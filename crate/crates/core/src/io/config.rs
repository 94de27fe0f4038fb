//! Flat `key = value` run configuration (TOML syntax).
//!
//! Every key is optional; absent keys keep library defaults. Unknown keys
//! are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda::{FitConfig, DEFAULT_LPF_SIGMA, DEFAULT_TAU};
use crate::synth::{Noise, SynthConfig};
use crate::separation::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // training
    pub r: Option<usize>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub transform: Option<String>,
    pub loss: Option<String>,
    pub kernel_width: Option<usize>,
    pub kernel_layers: Option<usize>,
    pub bkgd_width: Option<usize>,
    pub compute_budget: Option<u64>,
    pub force: Option<bool>,

    // synthetic data
    pub grid_size: Option<usize>,
    pub dims: Option<usize>,
    pub noise_scale: Option<f64>,
    pub true_r: Option<usize>,
    pub kernel_sigma_major: Option<f64>,
    pub kernel_sigma_minor: Option<f64>,
    pub kernel_rotation: Option<f64>,
    pub background_modes: Option<usize>,
    pub background_amplitude: Option<f64>,
    pub background_max_freq: Option<f64>,
    pub signal_j: Option<f64>,
    pub signal_jp: Option<f64>,
    pub signal_amplitude: Option<f64>,
    pub signal_width: Option<f64>,
    pub signal_z: Option<f64>,

    // lambda estimation
    pub tau: Option<f64>,
    pub lpf_sigma: Option<f64>,
    pub fit_width: Option<usize>,
    pub fit_layers: Option<usize>,
    pub fit_epochs: Option<usize>,
    pub fit_lr: Option<f64>,
    pub fit_batch_size: Option<usize>,
    pub fit_complement_only: Option<bool>,

    // diagnostics and sweeps
    pub bins: Option<usize>,
    pub sweep_r: Option<Vec<usize>>,
    pub sweep_lambda: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            r: self.r.unwrap_or(d.r),
            lambda: self.lambda.unwrap_or(d.lambda),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            seed: self.seed.unwrap_or(d.seed),
            transform: match &self.transform {
                Some(s) => s.parse()?,
                None => d.transform,
            },
            loss_kind: match &self.loss {
                Some(s) => s.parse()?,
                None => d.loss_kind,
            },
            kernel_width: self.kernel_width.unwrap_or(d.kernel_width),
            kernel_layers: self.kernel_layers.unwrap_or(d.kernel_layers),
            bkgd_width: self.bkgd_width.unwrap_or(d.bkgd_width),
            compute_budget: self.compute_budget.unwrap_or(d.compute_budget),
            force: self.force.unwrap_or(d.force),
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let n = self.grid_size.unwrap_or(64);
        let mut cfg = match self.dims.unwrap_or(2) {
            2 => SynthConfig::square_2d(n),
            4 => SynthConfig::hypercube_4d(n),
            d => return Err(Error::Config(format!("dims must be 2 or 4, got {d}"))),
        };
        cfg.seed = self.seed.unwrap_or(0);
        cfg.noise = match self.noise_scale {
            Some(s) if s > 0.0 => Noise::Poisson { scale: s },
            Some(s) if s < 0.0 || s.is_nan() => {
                return Err(Error::Config(format!("noise_scale must be >= 0, got {s}")))
            }
            _ => Noise::None,
        };
        let k = &mut cfg.kernel;
        k.r = self.true_r.unwrap_or(k.r);
        k.sigma_major = self.kernel_sigma_major.unwrap_or(k.sigma_major);
        k.sigma_minor = self.kernel_sigma_minor.unwrap_or(k.sigma_minor);
        k.rotation = self.kernel_rotation.unwrap_or(k.rotation);
        let b = &mut cfg.background;
        b.modes = self.background_modes.unwrap_or(b.modes);
        b.amplitude = self.background_amplitude.unwrap_or(b.amplitude);
        b.max_freq = self.background_max_freq.unwrap_or(b.max_freq);
        let s = &mut cfg.signal;
        s.j = self.signal_j.unwrap_or(s.j);
        s.jp = self.signal_jp.unwrap_or(s.jp);
        s.amplitude = self.signal_amplitude.unwrap_or(s.amplitude);
        s.width = self.signal_width.unwrap_or(s.width);
        s.z = self.signal_z.unwrap_or(s.z);
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn fit_config(&self) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            width: self.fit_width.unwrap_or(d.width),
            layers: self.fit_layers.unwrap_or(d.layers),
            epochs: self.fit_epochs.unwrap_or(d.epochs),
            lr: self.fit_lr.unwrap_or(d.lr),
            batch_size: self.fit_batch_size.unwrap_or(d.batch_size),
            seed: self.seed.unwrap_or(d.seed),
            complement_only: self.fit_complement_only.unwrap_or(d.complement_only),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(DEFAULT_TAU)
    }

    pub fn lpf_sigma(&self) -> f64 {
        self.lpf_sigma.unwrap_or(DEFAULT_LPF_SIGMA)
    }

    pub fn bins(&self) -> usize {
        self.bins.unwrap_or(64)
    }

    pub fn sweep_r(&self) -> Vec<usize> {
        self.sweep_r.clone().unwrap_or_else(|| vec![2, 3, 4])
    }

    pub fn sweep_lambda(&self) -> Vec<f64> {
        self.sweep_lambda.clone().unwrap_or_else(|| vec![0.0005, 0.005, 0.05])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separation::{LossKind, Transform};

    #[test]
    fn defaults_when_empty() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.train_config().unwrap(), TrainConfig::default());
        assert_eq!(c.synth_config().unwrap(), SynthConfig::default());
        assert_eq!(c.fit_config(), FitConfig::default());
    }

    #[test]
    fn typed_values() {
        let c = RunConfig::parse(
            "r = 3\nlambda = 0.05\ntransform = \"log1p\"\nloss = \"l2_norm\"\nnoise_scale = 10.0\nsweep_r = [2, 4]\n",
        )
        .unwrap();
        let t = c.train_config().unwrap();
        assert_eq!((t.r, t.lambda, t.transform, t.loss_kind), (3, 0.05, Transform::Log1p, LossKind::L2Norm));
        assert_eq!(c.synth_config().unwrap().noise, Noise::Poisson { scale: 10.0 });
        assert_eq!(c.sweep_r(), vec![2, 4]);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("r = \"two\""), Err(Error::Config(_))));
        let c = RunConfig::parse("transform = \"sqrt\"").unwrap();
        assert!(matches!(c.train_config(), Err(Error::Config(_))));
        let c = RunConfig::parse("r = 0").unwrap();
        assert!(matches!(c.train_config(), Err(Error::Config(_))));
        let c = RunConfig::parse("dims = 3").unwrap();
        assert!(c.synth_config().is_err());
    }
}
