//! The coordinate networks (kernel and background) and the ideal-signal model.

mod bundle;
mod networks;
mod signal;
mod siren;

pub use bundle::{BundleMeta, ModelBundle};
pub use networks::{window_len, BkgdNet, KernelNet, DEFAULT_KERNEL_LAYERS, DEFAULT_WIDTH};
pub use signal::{signal_model_eval, AnalyticParams, BoundSignal, SignalModel};
pub use siren::{siren_forward, FinalActivation, SirenNet, SirenSpec, DEFAULT_W0};
