//! Synthetic bundles on disk: one grid file per component plus a manifest.

use std::fs;
use std::path::Path;

use super::gridfile::{read_grid, write_grid};
use crate::error::{Error, Result};
use crate::synth::{SynthBundle, SynthConfig};

pub const MANIFEST: &str = "manifest.toml";
pub const OBSERVED: &str = "observed.grd";
pub const TRUE_SIGNAL: &str = "signal.grd";
pub const TRUE_BACKGROUND: &str = "background.grd";
pub const TRUE_NOISE: &str = "noise.grd";
pub const S_SIM: &str = "s_sim.grd";
pub const TRUE_KERNEL: &str = "kernel.grd";

pub fn write_synth_bundle(bundle: &SynthBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_grid(&bundle.observed, dir.join(OBSERVED))?;
    write_grid(&bundle.signal, dir.join(TRUE_SIGNAL))?;
    write_grid(&bundle.background, dir.join(TRUE_BACKGROUND))?;
    write_grid(&bundle.noise, dir.join(TRUE_NOISE))?;
    write_grid(&bundle.s_sim, dir.join(S_SIM))?;
    write_grid(&bundle.kernel, dir.join(TRUE_KERNEL))?;
    let manifest = toml::to_string(&bundle.config).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

pub fn read_synth_config(dir: impl AsRef<Path>) -> Result<SynthConfig> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

pub fn read_synth_bundle(dir: impl AsRef<Path>) -> Result<SynthBundle> {
    let dir = dir.as_ref();
    Ok(SynthBundle {
        config: read_synth_config(dir)?,
        observed: read_grid(dir.join(OBSERVED))?,
        signal: read_grid(dir.join(TRUE_SIGNAL))?,
        background: read_grid(dir.join(TRUE_BACKGROUND))?,
        noise: read_grid(dir.join(TRUE_NOISE))?,
        s_sim: read_grid(dir.join(S_SIM))?,
        kernel: read_grid(dir.join(TRUE_KERNEL))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Noise};

    #[test]
    fn bundle_round_trip() {
        let mut cfg = SynthConfig::square_2d(8);
        cfg.noise = Noise::Poisson { scale: 3.0 };
        cfg.seed = 11;
        let b = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_synth_bundle(&b, dir.path()).unwrap();
        assert_eq!(read_synth_bundle(dir.path()).unwrap(), b);
        // the manifest alone regenerates the bundle
        assert_eq!(generate(&read_synth_config(dir.path()).unwrap()).unwrap(), b);
    }
}
