//! Raw-data versus model size accounting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::checkpoint::{checkpoint_sizes, CheckpointSizes};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    pub raw_bytes: u64,
    pub sizes: CheckpointSizes,
    /// Size of the checkpoint file.
    pub total_model_bytes: u64,
    pub ratio: f64,
}

/// `raw / model`.
pub fn compression_ratio(raw_bytes: u64, model_bytes: u64) -> Result<f64> {
    if model_bytes == 0 {
        return Err(Error::ZeroDenominator("model size is zero".into()));
    }
    Ok(raw_bytes as f64 / model_bytes as f64)
}

impl CompressionReport {
    pub fn from_sizes(raw_bytes: u64, sizes: CheckpointSizes) -> Result<Self> {
        let total = sizes.total();
        Ok(CompressionReport {
            raw_bytes,
            sizes,
            total_model_bytes: total,
            ratio: compression_ratio(raw_bytes, total)?,
        })
    }

    /// Sizes taken from the files on disk.
    pub fn from_files(raw: impl AsRef<Path>, checkpoint: impl AsRef<Path>) -> Result<Self> {
        let raw = raw.as_ref();
        let raw_bytes = fs::metadata(raw).map_err(|e| Error::io(raw, e))?.len();
        let sizes = checkpoint_sizes(checkpoint)?;
        Self::from_sizes(raw_bytes, sizes)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "raw_bytes = {}", self.raw_bytes);
        let _ = writeln!(out, "kernel_net_bytes = {}", self.sizes.kernel_net);
        let _ = writeln!(out, "bkgd_net_bytes = {}", self.sizes.bkgd_net);
        let _ = writeln!(out, "signal_model_bytes = {}", self.sizes.signal);
        let _ = writeln!(out, "header_bytes = {}", self.sizes.header);
        let _ = writeln!(out, "total_model_bytes = {}", self.total_model_bytes);
        let _ = writeln!(out, "ratio = {:.2}", self.ratio);
        out
    }
}
