//! Self-supervised separation of gridded measurements into a kernel-convolved
//! model signal and a smooth background, each represented by a coordinate
//! network.

pub mod autodiff;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod io;
pub mod lambda;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod separation;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Axis, Grid};
