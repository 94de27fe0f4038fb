//! C ABI for the dualsep separation engine.
//!
//! Grids and trained models cross the boundary as opaque handles. Every
//! fallible call returns a [`DsStatus`]; on failure the message is available
//! from [`ds_last_error`] on the same thread until the next failing call.
//! Handles returned through out-pointers are owned by the caller and must be
//! released with the matching `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dualsep::io;
use dualsep::lambda::{self, FitConfig};
use dualsep::models::{AnalyticParams, ModelBundle, SignalModel};
use dualsep::separation::{self, LossKind, TrainConfig, Transform};
use dualsep::{metrics, Axis, Error, Grid};

/// Result codes. Zero is success, everything else is negative.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    Shape = -3,
    Io = -4,
    Format = -5,
    Divergence = -6,
    NonFinite = -7,
    ComputeBudget = -8,
    Empty = -9,
    BufferTooSmall = -10,
    Panic = -11,
}

/// Opaque gridded field.
pub struct DsGrid(Grid);

/// Opaque trained model: kernel network, background network and signal model.
pub struct DsModel(ModelBundle);

/// Parameters of the built-in analytic dispersion signal.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsAnalyticParams {
    pub j: f64,
    pub jp: f64,
    pub amplitude: f64,
    pub width: f64,
    pub z: f64,
}

/// Training hyperparameters. `transform`: 0 identity, 1 log1p.
/// `loss`: 0 mean squared error, 1 l2 norm. `force` is a boolean.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsTrainConfig {
    pub r: u32,
    pub lambda: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub lr: f64,
    pub seed: u64,
    pub transform: u8,
    pub loss: u8,
    pub kernel_width: u32,
    pub kernel_layers: u32,
    pub bkgd_width: u32,
    pub compute_budget: u64,
    pub force: u8,
}

/// Fit-quality metrics of a separation against the observed grid.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsMetrics {
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
    pub re: f64,
    pub chi2: f64,
    pub chi2_pval: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DsStatus {
    match e {
        Error::Shape(_) => DsStatus::Shape,
        Error::NonFinite { .. } => DsStatus::NonFinite,
        Error::Divergence { .. } => DsStatus::Divergence,
        Error::Empty(_) | Error::EmptySupport => DsStatus::Empty,
        Error::ComputeBudget { .. } => DsStatus::ComputeBudget,
        Error::Io { .. } => DsStatus::Io,
        Error::BadMagic { .. }
        | Error::Version { .. }
        | Error::Dtype(_)
        | Error::Truncated { .. }
        | Error::SizeMismatch { .. }
        | Error::Format { .. } => DsStatus::Format,
        _ => DsStatus::InvalidArgument,
    }
}

struct Fail(DsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            DsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    str_arg(p, "path").map(PathBuf::from)
}

unsafe fn label_arg(p: *const c_char) -> Result<String, Fail> {
    str_arg(p, "label").map(str::to_string)
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn grid_ref<'a>(g: *const DsGrid, what: &str) -> Result<&'a Grid, Fail> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn analytic(p: &DsAnalyticParams) -> AnalyticParams {
    AnalyticParams {
        j: p.j,
        jp: p.jp,
        amplitude: p.amplitude,
        width: p.width,
        z: p.z,
    }
}

/// Gridded signal when `signal_grid` is non-null, otherwise the analytic model.
unsafe fn signal_arg(params: *const DsAnalyticParams, signal_grid: *const DsGrid) -> Result<SignalModel, Fail> {
    if let Some(g) = signal_grid.as_ref() {
        return Ok(SignalModel::Gridded(g.0.clone()));
    }
    let p = params.as_ref().ok_or_else(|| null("signal parameters"))?;
    Ok(SignalModel::Analytic(analytic(p)))
}

fn train_config(c: &DsTrainConfig) -> Result<TrainConfig, Fail> {
    let bad = |what: &str| Fail(DsStatus::InvalidArgument, format!("unknown {what} code"));
    Ok(TrainConfig {
        r: c.r as usize,
        lambda: c.lambda,
        epochs: c.epochs as usize,
        batch_size: c.batch_size as usize,
        lr: c.lr,
        seed: c.seed,
        transform: Transform::from_code(c.transform).ok_or_else(|| bad("transform"))?,
        loss_kind: LossKind::from_code(c.loss).ok_or_else(|| bad("loss"))?,
        kernel_width: c.kernel_width as usize,
        kernel_layers: c.kernel_layers as usize,
        bkgd_width: c.bkgd_width as usize,
        compute_budget: c.compute_budget,
        force: c.force != 0,
    })
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn ds_analytic_params_default() -> DsAnalyticParams {
    let d = AnalyticParams::default();
    DsAnalyticParams {
        j: d.j,
        jp: d.jp,
        amplitude: d.amplitude,
        width: d.width,
        z: d.z,
    }
}

#[no_mangle]
pub extern "C" fn ds_train_config_default() -> DsTrainConfig {
    let d = TrainConfig::default();
    DsTrainConfig {
        r: d.r as u32,
        lambda: d.lambda,
        epochs: d.epochs as u32,
        batch_size: d.batch_size as u32,
        lr: d.lr,
        seed: d.seed,
        transform: d.transform.code(),
        loss: d.loss_kind.code(),
        kernel_width: d.kernel_width as u32,
        kernel_layers: d.kernel_layers as u32,
        bkgd_width: d.bkgd_width as u32,
        compute_budget: d.compute_budget,
        force: d.force as u8,
    }
}

/// Builds a grid from `ndim` axes and `n_values` row-major values (last axis
/// fastest). Axis `k` has `extents[k]` points spanning `[mins[k], maxs[k]]`
/// and is named `labels[k]`; the analytic signal needs the names H, K, L or
/// omega. A null `labels` names the axes x0, x1, ...
#[no_mangle]
pub unsafe extern "C" fn ds_grid_new(
    ndim: usize,
    labels: *const *const c_char,
    extents: *const usize,
    mins: *const f64,
    maxs: *const f64,
    values: *const f64,
    n_values: usize,
    out: *mut *mut DsGrid,
) -> DsStatus {
    guard(|| {
        let extents = slice_arg(extents, ndim, "extents")?;
        let mins = slice_arg(mins, ndim, "mins")?;
        let maxs = slice_arg(maxs, ndim, "maxs")?;
        let values = slice_arg(values, n_values, "values")?;
        let names = match labels.is_null() {
            true => (0..ndim).map(|k| format!("x{k}")).collect(),
            false => slice_arg(labels, ndim, "labels")?
                .iter()
                .map(|&p| label_arg(p))
                .collect::<Result<Vec<_>, _>>()?,
        };
        let axes = names
            .into_iter()
            .enumerate()
            .map(|(k, name)| Axis::new(name, extents[k], mins[k], maxs[k]))
            .collect();
        put(out, DsGrid(Grid::new(axes, values.to_vec())?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_grid_read(path: *const c_char, out: *mut *mut DsGrid) -> DsStatus {
    guard(|| put(out, DsGrid(io::read_grid(path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn ds_grid_write(grid: *const DsGrid, path: *const c_char) -> DsStatus {
    guard(|| {
        io::write_grid(grid_ref(grid, "grid")?, path_arg(path)?)?;
        Ok(())
    })
}

/// Number of cells, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ds_grid_len(grid: *const DsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Number of axes, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ds_grid_ndim(grid: *const DsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.ndim())
}

/// Copies the values into `buf`, which must hold `ds_grid_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_grid_values(grid: *const DsGrid, buf: *mut f64, capacity: usize) -> DsStatus {
    guard(|| {
        let g = grid_ref(grid, "grid")?;
        if capacity < g.len() {
            return Err(Fail(
                DsStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, grid has {}", g.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(g.values().as_ptr(), buf, g.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_grid_free(grid: *mut DsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Jointly trains the kernel and background networks on `observed`.
/// The signal model is `signal_grid` when non-null, otherwise `signal_params`.
#[no_mangle]
pub unsafe extern "C" fn ds_train(
    observed: *const DsGrid,
    signal_params: *const DsAnalyticParams,
    signal_grid: *const DsGrid,
    config: *const DsTrainConfig,
    out: *mut *mut DsModel,
) -> DsStatus {
    guard(|| {
        let observed = grid_ref(observed, "observed")?;
        let signal = signal_arg(signal_params, signal_grid)?;
        let cfg = train_config(config.as_ref().ok_or_else(|| null("config"))?)?;
        let res = separation::train(observed, &signal, &cfg)?;
        put(out, DsModel(res.bundle))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_model_load(path: *const c_char, out: *mut *mut DsModel) -> DsStatus {
    guard(|| put(out, DsModel(io::load_checkpoint(path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn ds_model_save(model: *const DsModel, path: *const c_char) -> DsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        io::save_checkpoint(&m.0, path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_model_free(model: *mut DsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Evaluates the model on its training grid. Each output pointer receives a
/// new grid handle; any of them may be null to skip that component.
#[no_mangle]
pub unsafe extern "C" fn ds_model_predict(
    model: *const DsModel,
    out_total: *mut *mut DsGrid,
    out_signal: *mut *mut DsGrid,
    out_background: *mut *mut DsGrid,
) -> DsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (total, signal, background) = separation::predict_grid(&m.0)?;
        for (out, g) in [(out_total, total), (out_signal, signal), (out_background, background)] {
            if !out.is_null() {
                put(out, DsGrid(g))?;
            }
        }
        Ok(())
    })
}

/// Estimates the background penalty weight. The support is thresholded at
/// `tau` of the signal maximum and dilated by `r`; `lpf_sigma` is the
/// Gaussian low-pass width in cells.
#[no_mangle]
pub unsafe extern "C" fn ds_estimate_lambda(
    observed: *const DsGrid,
    signal_params: *const DsAnalyticParams,
    signal_grid: *const DsGrid,
    tau: f64,
    r: u32,
    lpf_sigma: f64,
    out_lambda: *mut f64,
) -> DsStatus {
    guard(|| {
        let observed = grid_ref(observed, "observed")?;
        let signal = signal_arg(signal_params, signal_grid)?;
        if out_lambda.is_null() {
            return Err(null("output pointer"));
        }
        let mask = lambda::derive_support_for_kernel(&signal, observed.axes(), tau, r as usize)?;
        let est = lambda::estimate_lambda(observed, &mask, lpf_sigma, &FitConfig::default())?;
        *out_lambda = est.lambda;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ds_metrics(
    observed: *const DsGrid,
    total: *const DsGrid,
    signal: *const DsGrid,
    background: *const DsGrid,
    out: *mut DsMetrics,
) -> DsStatus {
    guard(|| {
        let rep = metrics::evaluate(
            grid_ref(observed, "observed")?,
            grid_ref(total, "total")?,
            grid_ref(signal, "signal")?,
            grid_ref(background, "background")?,
            None,
            0,
            f64::NAN,
        )?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = DsMetrics {
            rmse: rep.rmse,
            psnr: rep.psnr,
            ssim: rep.ssim,
            mae: rep.mae,
            re: rep.re,
            chi2: rep.chi2,
            chi2_pval: rep.chi2_pval,
        };
        Ok(())
    })
}

/// Raw data size divided by model size.
#[no_mangle]
pub unsafe extern "C" fn ds_compression_ratio(raw_bytes: u64, model_bytes: u64, out: *mut f64) -> DsStatus {
    guard(|| {
        let ratio = io::compression_ratio(raw_bytes, model_bytes)?;
        *out.as_mut().ok_or_else(|| null("output pointer"))? = ratio;
        Ok(())
    })
}
