//! File formats: grids, checkpoints, synthetic bundles, run configuration.

mod bundle_dir;
mod checkpoint;
mod codec;
mod compression;
mod config;
mod gridfile;

pub use bundle_dir::{
    read_synth_bundle, read_synth_config, write_synth_bundle, MANIFEST, OBSERVED, S_SIM, TRUE_BACKGROUND, TRUE_KERNEL,
    TRUE_NOISE, TRUE_SIGNAL,
};
pub use checkpoint::{
    checkpoint_sizes, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointSizes,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use compression::{compression_ratio, CompressionReport};
pub use config::RunConfig;
pub use gridfile::{decode_grid, encode_grid, read_grid, write_grid, DTYPE_F64, GRID_MAGIC, GRID_VERSION};
