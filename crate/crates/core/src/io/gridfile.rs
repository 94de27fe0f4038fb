//! `GRD1` dense grid files.
//!
//! ```text
//! magic    "GRD1"
//! version  u16 = 1
//! dtype    u16 = 1 (f64)
//! ndim     u16
//! extents  u64 × ndim
//! ranges   (min f64, max f64) × ndim
//! labels   (u16 byte length, UTF-8) × ndim
//! payload  f64 × Π extents, row-major
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use super::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

pub const GRID_MAGIC: [u8; 4] = *b"GRD1";
pub const GRID_VERSION: u16 = 1;
pub const DTYPE_F64: u16 = 1;

pub fn encode_grid(grid: &Grid) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    write_grid_into(&mut w, grid)?;
    Ok(w.buf)
}

pub(crate) fn write_grid_into(w: &mut Writer, grid: &Grid) -> Result<()> {
    w.bytes(&GRID_MAGIC);
    w.u16(GRID_VERSION);
    w.u16(DTYPE_F64);
    w.u16(u16::try_from(grid.ndim()).map_err(|_| Error::invalid("too many axes"))?);
    for a in grid.axes() {
        w.u64(a.extent as u64);
    }
    for a in grid.axes() {
        w.f64(a.min);
        w.f64(a.max);
    }
    for a in grid.axes() {
        w.str(&a.label)?;
    }
    w.f64s(grid.values());
    Ok(())
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    let mut r = Reader::new(bytes, "grid file");
    let grid = read_grid_from(&mut r)?;
    r.finish(bytes.len() as u64 - r.remaining() as u64)?;
    Ok(grid)
}

pub(crate) fn read_grid_from(r: &mut Reader<'_>) -> Result<Grid> {
    let magic = r.magic()?;
    if magic != GRID_MAGIC {
        return Err(Error::BadMagic {
            what: "grid file",
            expected: GRID_MAGIC,
            found: magic,
        });
    }
    let version = r.u16()?;
    if version != GRID_VERSION {
        return Err(Error::Version {
            what: "grid file",
            expected: GRID_VERSION,
            found: version,
        });
    }
    let dtype = r.u16()?;
    if dtype != DTYPE_F64 {
        return Err(Error::Dtype(dtype));
    }
    let ndim = r.u16()? as usize;
    if ndim == 0 {
        return Err(r.format("zero axes"));
    }
    let extents = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
    let ranges = (0..ndim)
        .map(|_| Ok((r.f64()?, r.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..ndim).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let cells = extents
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| r.format("cell count overflows"))?;
    let values = r.f64s(cells)?;
    let axes = labels
        .into_iter()
        .zip(extents)
        .zip(ranges)
        .map(|((label, extent), (min, max))| Axis::new(label, extent, min, max))
        .collect();
    Grid::new(axes, values)
}

pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(grid)?).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}
