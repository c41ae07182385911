//! C interface to `degfusion`.
//!
//! Every function returns a [`DfStatus`]; on failure a message is kept per
//! thread and can be read with [`df_last_error_message`]. Objects are opaque
//! handles created by `*_new`/`*_load`/`*_run` functions and released with the
//! matching `*_free`. Strings are copied into caller buffers: the required size
//! including the terminating NUL is always written to `required`, and
//! `DF_BUFFER_TOO_SMALL` is returned when `capacity` is short.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use degfusion::config::RunConfig;
use degfusion::pipeline::{run_full_pipeline, write_report, FinalReport, Termination};
use degfusion::{hsic, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    DfOk = 0,
    DfNullPointer = 1,
    DfInvalidArgument = 2,
    DfConfigError = 3,
    DfIoError = 4,
    DfParseError = 5,
    DfNumericalError = 6,
    DfBufferTooSmall = 7,
    DfOutOfRange = 8,
    DfPanic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfTermination {
    DfConverged = 0,
    DfCapReached = 1,
    DfExhaustedVariables = 2,
    DfNoData = 3,
}

/// Parsed and validated run configuration.
pub struct DfConfig {
    inner: RunConfig,
}

/// Result of a full pipeline run.
pub struct DfReport {
    inner: FinalReport,
    config: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: DfStatus, msg: impl Into<String>) -> DfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> DfStatus {
    let status = match e {
        Error::Config(_) | Error::Serde(_) => DfStatus::DfConfigError,
        Error::Io { .. } => DfStatus::DfIoError,
        Error::Parse { .. } => DfStatus::DfParseError,
        Error::Shape(_) | Error::Domain(_) => DfStatus::DfInvalidArgument,
        _ => DfStatus::DfNumericalError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> DfStatus) -> DfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DfStatus::DfPanic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, DfStatus> {
    if p.is_null() {
        return Err(fail(DfStatus::DfNullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DfStatus::DfInvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn copy_str(s: &str, buf: *mut c_char, capacity: usize, required: *mut usize) -> DfStatus {
    let need = s.len() + 1;
    if !required.is_null() {
        *required = need;
    }
    if buf.is_null() || capacity < need {
        return fail(DfStatus::DfBufferTooSmall, format!("buffer of {capacity} bytes, {need} needed"));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    DfStatus::DfOk
}

macro_rules! deref {
    ($p:expr, $what:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(DfStatus::DfNullPointer, concat!($what, " is null")),
        }
    };
}

macro_rules! out {
    ($p:expr, $v:expr) => {{
        if $p.is_null() {
            return fail(DfStatus::DfNullPointer, "output pointer is null");
        }
        *$p = $v;
        DfStatus::DfOk
    }};
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message; an empty string if none.
#[no_mangle]
pub unsafe extern "C" fn df_last_error_message(buf: *mut c_char, capacity: usize, required: *mut usize) -> DfStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().as_ref().map(|c| c.to_string_lossy().into_owned()));
    copy_str(msg.as_deref().unwrap_or(""), buf, capacity, required)
}

/// Loads a TOML configuration file.
#[no_mangle]
pub unsafe extern "C" fn df_config_load(path: *const c_char, out: *mut *mut DfConfig) -> DfStatus {
    guard(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match RunConfig::load(Path::new(path)) {
            Ok(c) => out!(out, Box::into_raw(Box::new(DfConfig { inner: c }))),
            Err(e) => from_error(e),
        }
    })
}

/// Parses a TOML configuration held in memory; relative data paths resolve
/// against `base_dir` (may be null for the working directory).
#[no_mangle]
pub unsafe extern "C" fn df_config_from_toml(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut DfConfig,
) -> DfStatus {
    guard(|| {
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let dir = if base_dir.is_null() {
            "."
        } else {
            match str_arg(base_dir, "base_dir") {
                Ok(d) => d,
                Err(s) => return s,
            }
        };
        match RunConfig::from_toml(text, dir) {
            Ok(c) => out!(out, Box::into_raw(Box::new(DfConfig { inner: c }))),
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn df_config_free(config: *mut DfConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

#[no_mangle]
pub unsafe extern "C" fn df_config_set_seed(config: *mut DfConfig, seed: u64) -> DfStatus {
    let c = match config.as_mut() {
        Some(c) => c,
        None => return fail(DfStatus::DfNullPointer, "config is null"),
    };
    c.inner.seed = seed;
    DfStatus::DfOk
}

/// Number of model inputs.
#[no_mangle]
pub unsafe extern "C" fn df_config_input_count(config: *const DfConfig, out: *mut usize) -> DfStatus {
    let c = deref!(config, "config");
    out!(out, c.inner.prior.len())
}

/// Number of nodes of the simulation grid.
#[no_mangle]
pub unsafe extern "C" fn df_config_grid_len(config: *const DfConfig, out: *mut usize) -> DfStatus {
    guard(|| {
        let c = deref!(config, "config");
        match c.inner.simulator() {
            Ok(m) => out!(out, m.grid().len()),
            Err(e) => from_error(e),
        }
    })
}

/// Runs the configured model at `inputs` (`input_len` values) and writes the
/// trajectory into `values`, which must hold the grid length.
#[no_mangle]
pub unsafe extern "C" fn df_simulate(
    config: *const DfConfig,
    inputs: *const f64,
    input_len: usize,
    values: *mut f64,
    capacity: usize,
) -> DfStatus {
    guard(|| {
        let c = deref!(config, "config");
        if inputs.is_null() || values.is_null() {
            return fail(DfStatus::DfNullPointer, "inputs or values is null");
        }
        let model = match c.inner.simulator() {
            Ok(m) => m,
            Err(e) => return from_error(e),
        };
        if capacity < model.grid().len() {
            return fail(
                DfStatus::DfBufferTooSmall,
                format!("values holds {capacity}, grid has {}", model.grid().len()),
            );
        }
        match model.simulate(slice::from_raw_parts(inputs, input_len)) {
            Ok(y) => {
                ptr::copy_nonoverlapping(y.as_ptr(), values, y.len());
                DfStatus::DfOk
            }
            Err(e) => from_error(e),
        }
    })
}

/// Biased HSIC estimate between two samples of length `n`.
#[no_mangle]
pub unsafe extern "C" fn df_hsic(x: *const f64, z: *const f64, n: usize, out: *mut f64) -> DfStatus {
    guard(|| {
        if x.is_null() || z.is_null() {
            return fail(DfStatus::DfNullPointer, "sample is null");
        }
        match hsic::hsic_v_statistic(slice::from_raw_parts(x, n), slice::from_raw_parts(z, n)) {
            Ok(v) => out!(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// Normalized HSIC (R2) between two samples of length `n`.
#[no_mangle]
pub unsafe extern "C" fn df_r2_hsic(x: *const f64, z: *const f64, n: usize, out: *mut f64) -> DfStatus {
    guard(|| {
        if x.is_null() || z.is_null() {
            return fail(DfStatus::DfNullPointer, "sample is null");
        }
        match hsic::r2_hsic(slice::from_raw_parts(x, n), slice::from_raw_parts(z, n)) {
            Ok(v) => out!(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// Loads the configured data and runs the whole pipeline.
#[no_mangle]
pub unsafe extern "C" fn df_pipeline_run(config: *const DfConfig, out: *mut *mut DfReport) -> DfStatus {
    guard(|| {
        let c = deref!(config, "config");
        let run = || -> degfusion::Result<FinalReport> {
            let data = c.inner.load_data()?;
            run_full_pipeline(c.inner.simulator()?, c.inner.prior_spec()?, &data, &c.inner.pipeline_config())
        };
        match run() {
            Ok(r) => out!(
                out,
                Box::into_raw(Box::new(DfReport {
                    inner: r,
                    config: c.inner.clone(),
                }))
            ),
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn df_report_free(report: *mut DfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub unsafe extern "C" fn df_report_termination(report: *const DfReport, out: *mut DfTermination) -> DfStatus {
    let r = deref!(report, "report");
    let t = match r.inner.termination {
        Termination::Converged => DfTermination::DfConverged,
        Termination::CapReached => DfTermination::DfCapReached,
        Termination::ExhaustedVariables => DfTermination::DfExhaustedVariables,
        Termination::NoData => DfTermination::DfNoData,
    };
    out!(out, t)
}

#[no_mangle]
pub unsafe extern "C" fn df_report_iterations(report: *const DfReport, out: *mut usize) -> DfStatus {
    let r = deref!(report, "report");
    out!(out, r.inner.history.len())
}

/// 1 when every iteration's chains passed the Gelman-Rubin check.
#[no_mangle]
pub unsafe extern "C" fn df_report_chains_converged(report: *const DfReport, out: *mut i32) -> DfStatus {
    let r = deref!(report, "report");
    out!(out, r.inner.chains_converged() as i32)
}

/// Name of input `index`.
#[no_mangle]
pub unsafe extern "C" fn df_report_variable_name(
    report: *const DfReport,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
    required: *mut usize,
) -> DfStatus {
    let r = deref!(report, "report");
    match r.inner.names.get(index) {
        Some(n) => copy_str(n, buf, capacity, required),
        None => fail(DfStatus::DfOutOfRange, format!("variable {index} does not exist")),
    }
}

/// Largest KL divergence recorded for input `index` (0 if never calibrated).
#[no_mangle]
pub unsafe extern "C" fn df_report_kl(report: *const DfReport, index: usize, out: *mut f64) -> DfStatus {
    let r = deref!(report, "report");
    let name = match r.inner.names.get(index) {
        Some(n) => n,
        None => return fail(DfStatus::DfOutOfRange, format!("variable {index} does not exist")),
    };
    out!(out, r.inner.kl_by_variable()[name])
}

/// Median RUL of the final prior (`posterior` nonzero) or of the initial one.
#[no_mangle]
pub unsafe extern "C" fn df_report_rul_median(report: *const DfReport, posterior: i32, out: *mut f64) -> DfStatus {
    let r = deref!(report, "report");
    let s = if posterior != 0 {
        r.inner.rul_posterior_summary.as_ref()
    } else {
        r.inner.rul_prior_summary.as_ref()
    };
    match s {
        Some(s) => out!(out, s.median),
        None => fail(DfStatus::DfOutOfRange, "no RUL without data"),
    }
}

/// Time of the last observation, from which RUL is measured.
#[no_mangle]
pub unsafe extern "C" fn df_report_current_time(report: *const DfReport, out: *mut f64) -> DfStatus {
    let r = deref!(report, "report");
    out!(out, r.inner.current_time)
}

/// Writes the report directory layout into `dir`.
#[no_mangle]
pub unsafe extern "C" fn df_report_write(report: *const DfReport, dir: *const c_char) -> DfStatus {
    guard(|| {
        let r = deref!(report, "report");
        let dir = match str_arg(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match write_report(&r.inner, &r.config.pipeline_config(), Path::new(dir)) {
            Ok(()) => DfStatus::DfOk,
            Err(e) => from_error(e),
        }
    })
}
