//! `DSCK` model checkpoints.
//!
//! ```text
//! magic     "DSCK"
//! version   u16 = 1
//! echo      r u32, lambda f64, seed u64, transform u8, loss u8
//! axes      ndim u16, then (extent u64, min f64, max f64, label) × ndim
//! sizes     kernel_net u64, bkgd_net u64, signal u64
//! sections  kernel_net | bkgd_net | signal, exactly the declared sizes
//! ```
//! A network section holds its architecture followed by its parameter
//! tensors (`rank u8`, `dims u64 × rank`, `f64 × Π dims`). The signal
//! section is a tag byte followed by the analytic parameters or an embedded
//! grid file.

use std::fs;
use std::path::Path;

use super::codec::{Reader, Writer};
use super::gridfile::{read_grid_from, write_grid_into};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::models::{AnalyticParams, BkgdNet, BundleMeta, FinalActivation, KernelNet, ModelBundle, SignalModel, SirenNet, SirenSpec};
use crate::separation::{LossKind, Transform};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Byte sizes of each part of a checkpoint file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointSizes {
    pub header: u64,
    pub kernel_net: u64,
    pub bkgd_net: u64,
    pub signal: u64,
}

impl CheckpointSizes {
    pub fn total(&self) -> u64 {
        self.header + self.kernel_net + self.bkgd_net + self.signal
    }
}

fn encode_net(net: &SirenNet) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    let s = &net.spec;
    w.u32(s.input_dim as u32);
    w.u32(s.hidden_dims.len() as u32);
    for &h in &s.hidden_dims {
        w.u32(h as u32);
    }
    w.u32(s.output_dim as u32);
    w.f64(s.w0_first);
    w.f64(s.w0_hidden);
    match s.final_activation {
        FinalActivation::None => w.u8(0),
        FinalActivation::Relu => w.u8(1),
        FinalActivation::SoftmaxTail { tail_width, outputs } => {
            w.u8(2);
            w.u32(tail_width as u32);
            w.u32(outputs as u32);
        }
    }
    w.u32(net.params.len() as u32);
    for t in &net.params {
        w.u8(t.shape().len() as u8);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        w.f64s(t.data());
    }
    Ok(w.buf)
}

fn decode_net(bytes: &[u8], what: &'static str) -> Result<SirenNet> {
    let mut r = Reader::new(bytes, what);
    let input_dim = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > bytes.len() {
        return Err(r.format(format!("{n_hidden} hidden layers")));
    }
    let hidden_dims = (0..n_hidden).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
    let output_dim = r.u32()? as usize;
    let w0_first = r.f64()?;
    let w0_hidden = r.f64()?;
    let final_activation = match r.u8()? {
        0 => FinalActivation::None,
        1 => FinalActivation::Relu,
        2 => FinalActivation::SoftmaxTail {
            tail_width: r.u32()? as usize,
            outputs: r.u32()? as usize,
        },
        t => return Err(r.format(format!("unknown activation tag {t}"))),
    };
    let spec = SirenSpec {
        input_dim,
        hidden_dims,
        output_dim,
        w0_first,
        w0_hidden,
        final_activation,
    };
    spec.validate()?;
    let n_tensors = r.u32()? as usize;
    if n_tensors != 2 * spec.layer_shapes().len() {
        return Err(r.format(format!("{n_tensors} tensors for {} layers", spec.layer_shapes().len())));
    }
    let mut params = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| r.format("tensor size overflows"))?;
        let data = r.f64s(n)?;
        params.push(Tensor::new(shape, data)?);
    }
    r.finish(bytes.len() as u64)?;
    SirenNet::from_params(spec, params)
}

fn encode_signal(signal: &SignalModel) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    match signal {
        SignalModel::Analytic(p) => {
            w.u8(0);
            for v in [p.j, p.jp, p.amplitude, p.width, p.z] {
                w.f64(v);
            }
        }
        SignalModel::Gridded(g) => {
            w.u8(1);
            write_grid_into(&mut w, g)?;
        }
    }
    Ok(w.buf)
}

fn decode_signal(bytes: &[u8]) -> Result<SignalModel> {
    let mut r = Reader::new(bytes, "signal section");
    let model = match r.u8()? {
        0 => {
            let p = AnalyticParams {
                j: r.f64()?,
                jp: r.f64()?,
                amplitude: r.f64()?,
                width: r.f64()?,
                z: r.f64()?,
            };
            p.validate()?;
            SignalModel::Analytic(p)
        }
        1 => SignalModel::Gridded(read_grid_from(&mut r)?),
        t => return Err(r.format(format!("unknown signal tag {t}"))),
    };
    r.finish(bytes.len() as u64)?;
    Ok(model)
}

/// Serialize a bundle; also returns the section sizes.
pub fn encode_checkpoint(bundle: &ModelBundle) -> Result<(Vec<u8>, CheckpointSizes)> {
    let kernel = encode_net(&bundle.kernel_net.net)?;
    let bkgd = encode_net(&bundle.bkgd_net.net)?;
    let signal = encode_signal(&bundle.signal)?;

    let mut w = Writer::new();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    let m = &bundle.meta;
    w.u32(u32::try_from(m.r).map_err(|_| Error::invalid("r too large"))?);
    w.f64(m.lambda);
    w.u64(m.seed);
    w.u8(m.transform.code());
    w.u8(m.loss_kind.code());
    w.u16(bundle.axes.len() as u16);
    for a in &bundle.axes {
        w.u64(a.extent as u64);
        w.f64(a.min);
        w.f64(a.max);
        w.str(&a.label)?;
    }
    w.u64(kernel.len() as u64);
    w.u64(bkgd.len() as u64);
    w.u64(signal.len() as u64);
    let sizes = CheckpointSizes {
        header: w.buf.len() as u64,
        kernel_net: kernel.len() as u64,
        bkgd_net: bkgd.len() as u64,
        signal: signal.len() as u64,
    };
    w.bytes(&kernel);
    w.bytes(&bkgd);
    w.bytes(&signal);
    Ok((w.buf, sizes))
}

struct Header {
    meta: BundleMeta,
    axes: Vec<Axis>,
    sizes: CheckpointSizes,
}

fn decode_header(r: &mut Reader<'_>) -> Result<Header> {
    let magic = r.magic()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            what: "checkpoint",
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "checkpoint",
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let r_win = r.u32()? as usize;
    let lambda = r.f64()?;
    let seed = r.u64()?;
    let transform = r.u8()?;
    let transform = Transform::from_code(transform).ok_or_else(|| r.format(format!("transform code {transform}")))?;
    let loss = r.u8()?;
    let loss_kind = LossKind::from_code(loss).ok_or_else(|| r.format(format!("loss code {loss}")))?;
    let ndim = r.u16()? as usize;
    let mut axes = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let extent = r.len()?;
        let min = r.f64()?;
        let max = r.f64()?;
        axes.push(Axis::new(r.str()?, extent, min, max));
    }
    let kernel_net = r.u64()?;
    let bkgd_net = r.u64()?;
    let signal = r.u64()?;
    Ok(Header {
        meta: BundleMeta {
            r: r_win,
            lambda,
            seed,
            transform,
            loss_kind,
        },
        axes,
        sizes: CheckpointSizes {
            header: r.position() as u64,
            kernel_net,
            bkgd_net,
            signal,
        },
    })
}

fn check_sizes(sizes: &CheckpointSizes, file_len: u64) -> Result<()> {
    let declared = sizes
        .header
        .checked_add(sizes.kernel_net)
        .and_then(|v| v.checked_add(sizes.bkgd_net))
        .and_then(|v| v.checked_add(sizes.signal))
        .unwrap_or(u64::MAX);
    if declared != file_len {
        return Err(Error::SizeMismatch {
            what: "checkpoint",
            declared,
            actual: file_len,
        });
    }
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader::new(bytes, "checkpoint");
    let h = decode_header(&mut r)?;
    check_sizes(&h.sizes, bytes.len() as u64)?;
    let kernel = r.take(h.sizes.kernel_net as usize)?;
    let bkgd = r.take(h.sizes.bkgd_net as usize)?;
    let signal = r.take(h.sizes.signal as usize)?;
    let kernel_net = KernelNet::from_net(h.meta.r, decode_net(kernel, "kernel net section")?)?;
    let bkgd_net = BkgdNet::from_net(decode_net(bkgd, "background net section")?)?;
    let signal = decode_signal(signal)?;
    ModelBundle::new(kernel_net, bkgd_net, signal, h.axes, h.meta)
}

pub fn save_checkpoint(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<CheckpointSizes> {
    let path = path.as_ref();
    let (bytes, sizes) = encode_checkpoint(bundle)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(sizes)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Section sizes from the header, checked against the real file length.
pub fn checkpoint_sizes(path: impl AsRef<Path>) -> Result<CheckpointSizes> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, "checkpoint");
    let h = decode_header(&mut r)?;
    check_sizes(&h.sizes, bytes.len() as u64)?;
    Ok(h.sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::separation::{predict_grid, TrainConfig};

    fn bundle(r: usize, signal: SignalModel) -> ModelBundle {
        let axes = vec![Axis::new("H", 9, -1.0, 1.0), Axis::new("omega", 11, 0.0, 90.0)];
        let cfg = TrainConfig {
            r,
            kernel_width: 8,
            kernel_layers: 2,
            bkgd_width: 6,
            seed: 4,
            lambda: 0.125,
            transform: Transform::Log1p,
            ..TrainConfig::default()
        };
        ModelBundle::init(&axes, signal, &cfg).unwrap()
    }

    #[test]
    fn round_trip_predictions_bitwise() {
        let gridded = SignalModel::Gridded(
            Grid::from_fn(vec![Axis::new("H", 5, -1.0, 1.0), Axis::new("omega", 4, 0.0, 90.0)], |i| {
                (i[0] + i[1]) as f64
            })
            .unwrap(),
        );
        for signal in [SignalModel::Analytic(AnalyticParams::default()), gridded] {
            let b = bundle(2, signal);
            let (bytes, sizes) = encode_checkpoint(&b).unwrap();
            assert_eq!(sizes.total(), bytes.len() as u64);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, b);
            let (t0, s0, b0) = predict_grid(&b).unwrap();
            let (t1, s1, b1) = predict_grid(&back).unwrap();
            assert_eq!((t0, s0, b0), (t1, s1, b1));
        }
    }

    #[test]
    fn kernel_section_grows_with_r() {
        let sig = SignalModel::Analytic(AnalyticParams::default());
        let sizes: Vec<u64> = (2..=4)
            .map(|r| encode_checkpoint(&bundle(r, sig.clone())).unwrap().1.kernel_net)
            .collect();
        assert!(sizes[0] < sizes[1] && sizes[1] < sizes[2]);
    }

    #[test]
    fn corrupted_headers() {
        let (bytes, sizes) = encode_checkpoint(&bundle(1, SignalModel::Analytic(AnalyticParams::default()))).unwrap();
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Version { found: 7, .. })));
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"GRD1");
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));
        // inflate the declared kernel section size
        let mut bad = bytes.clone();
        let at = sizes.header as usize - 24;
        bad[at..at + 8].copy_from_slice(&(sizes.kernel_net + 8).to_le_bytes());
        assert!(matches!(decode_checkpoint(&bad), Err(Error::SizeMismatch { .. })));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_checkpoint(&long), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn sizes_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.dsck");
        let b = bundle(2, SignalModel::Analytic(AnalyticParams::default()));
        let written = save_checkpoint(&b, &p).unwrap();
        assert_eq!(checkpoint_sizes(&p).unwrap(), written);
        assert_eq!(fs::metadata(&p).unwrap().len(), written.total());
        assert_eq!(load_checkpoint(&p).unwrap(), b);
    }
}
