//! C ABI for the byzsgd simulator.
//!
//! The surface is deliberately small: build a configuration from the same
//! flat JSON the CLI accepts, run it, then read per-tick metrics and the
//! summary scalars back out. Handles are opaque; every function returns a
//! [`ByzsgdStatus`] (or a pointer that is null on failure), and the message
//! for the most recent failure on the calling thread is available through
//! [`byzsgd_last_error_message`].
//!
//! Ownership rules, which the per-function `# Safety` contracts repeat:
//! everything returned as a pointer is allocated by this library and must
//! be released with the matching `byzsgd_*_free` function, exactly once.
//! Handles are not thread-safe; do not share one across threads without
//! external synchronization.
//!
//! The generated header lands in `include/byzsgd.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use byzsgd::config::{resolve_with_env, ExperimentConfig, PartialConfig, DATA_DIR_ENV};
use byzsgd::engine::bounds::{theorem1_bound, theorem2_bound, TheoremBoundParams};
use byzsgd::engine::{run_experiment, ProblemData, Role, RunOutput};
use byzsgd::Error;

/// Outcome of a C API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ByzsgdStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration was malformed or violated an invariant.
    InvalidConfig = 3,
    /// The run or query failed; see `byzsgd_last_error_message`.
    RuntimeError = 4,
    /// An index argument was out of range.
    OutOfRange = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).ok();
    });
}

fn status_of(err: &Error) -> ByzsgdStatus {
    match err.exit_code() {
        1 => ByzsgdStatus::InvalidConfig,
        _ => ByzsgdStatus::RuntimeError,
    }
}

/// Opaque, resolved experiment configuration.
pub struct ByzsgdConfig {
    inner: ExperimentConfig,
}

/// Opaque result of a completed run.
pub struct ByzsgdRun {
    inner: RunOutput,
}

/// One per-tick metrics record, mirroring the CSV schema.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ByzsgdTickRow {
    /// Tick index, starting at 0.
    pub tick: u64,
    /// Simulated global time of the tick.
    pub time: f64,
    /// Id of the worker that woke up.
    pub worker: u64,
    /// True when that worker is Byzantine.
    pub byzantine: bool,
    /// Peer vectors the worker accepted (0 for Byzantine ticks).
    pub accepted_count: u64,
    /// Whether `sum_sq_dist` carries a value (quadratic runs only).
    pub has_sum_sq_dist: bool,
    /// Summed squared honest distance to the optimum after the tick.
    pub sum_sq_dist: f64,
}

/// Constants of the closed-form convergence bounds.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct ByzsgdBoundParams {
    /// Step size.
    pub eta: f64,
    /// Strong-convexity constant.
    pub lambda: f64,
    /// Gradient Lipschitz constant.
    pub l: f64,
    /// Uniform bound on stochastic gradient norms.
    pub g: f64,
    /// Per-update gradient noise scale.
    pub sigma: f64,
    /// Distance-threshold bound of the descent rule.
    pub delta: f64,
    /// Total worker count.
    pub n: u64,
    /// Assumed Byzantine worker count.
    pub p: u64,
    /// Summed squared distance to the optimum at initialization.
    pub sum_sq_init: f64,
    /// Summed distance to the optimum at initialization.
    pub sum_init: f64,
}

impl ByzsgdBoundParams {
    fn to_internal(self) -> TheoremBoundParams {
        TheoremBoundParams {
            eta: self.eta,
            lambda: self.lambda,
            l: self.l,
            g: self.g,
            sigma: self.sigma,
            delta: self.delta,
            n: self.n as usize,
            p: self.p as usize,
            sum_sq_init: self.sum_sq_init,
            sum_init: self.sum_init,
        }
    }
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn byzsgd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread, or null if there was
/// none. The caller owns the returned string and must release it with
/// [`byzsgd_string_free`].
#[no_mangle]
pub extern "C" fn byzsgd_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by a `byzsgd_*`
/// function that transfers string ownership, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_string_free(s: *mut c_char) {
    if s.is_null() {
        return;
    }
    // SAFETY: caller guarantees `s` came from CString::into_raw above.
    drop(CString::from_raw(s));
}

/// Build a configuration from flat JSON (the CLI config-file schema).
/// Missing fields take their documented defaults; the `BYZSGD_DATA_DIR`
/// environment variable supplies the dataset directory when the JSON does
/// not. On success writes a handle to `out`; release it with
/// [`byzsgd_config_free`].
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer;
/// both must stay alive for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_config_from_json(
    json: *const c_char,
    out: *mut *mut ByzsgdConfig,
) -> ByzsgdStatus {
    if json.is_null() || out.is_null() {
        set_last_error("byzsgd_config_from_json: null argument");
        return ByzsgdStatus::NullPointer;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_last_error("byzsgd_config_from_json: json is not valid UTF-8");
            return ByzsgdStatus::InvalidUtf8;
        }
    };
    let partial: PartialConfig = match serde_json::from_str(text) {
        Ok(p) => p,
        Err(err) => {
            set_last_error(format!("invalid config JSON: {err}"));
            return ByzsgdStatus::InvalidConfig;
        }
    };
    let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    match resolve_with_env(partial, env_dir) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ByzsgdConfig { inner }));
            ByzsgdStatus::Ok
        }
        Err(err) => {
            set_last_error(&err);
            status_of(&err)
        }
    }
}

/// Serialize a configuration back to flat JSON. The caller owns the
/// returned string and must release it with [`byzsgd_string_free`].
/// Returns null if `config` is null.
///
/// # Safety
/// `config` must be null or a live handle from [`byzsgd_config_from_json`].
#[no_mangle]
pub unsafe extern "C" fn byzsgd_config_to_json(config: *const ByzsgdConfig) -> *mut c_char {
    let Some(config) = config.as_ref() else {
        set_last_error("byzsgd_config_to_json: null config");
        return std::ptr::null_mut();
    };
    match serde_json::to_string_pretty(&config.inner) {
        Ok(json) => CString::new(json).map_or(std::ptr::null_mut(), CString::into_raw),
        Err(err) => {
            set_last_error(err);
            std::ptr::null_mut()
        }
    }
}

/// Release a configuration handle.
///
/// # Safety
/// `config` must be null or a handle from [`byzsgd_config_from_json`],
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_config_free(config: *mut ByzsgdConfig) {
    if !config.is_null() {
        // SAFETY: caller guarantees the handle came from Box::into_raw.
        drop(Box::from_raw(config));
    }
}

/// Run the configured experiment to completion. Loads the dataset, plays
/// every tick, and on success writes a run handle to `out`; release it
/// with [`byzsgd_run_free`]. Deterministic: the same configuration always
/// produces the same run.
///
/// # Safety
/// `config` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_run(
    config: *const ByzsgdConfig,
    out: *mut *mut ByzsgdRun,
) -> ByzsgdStatus {
    if config.is_null() || out.is_null() {
        set_last_error("byzsgd_run: null argument");
        return ByzsgdStatus::NullPointer;
    }
    let config = &(*config).inner;
    let result = ProblemData::prepare(config).and_then(|data| run_experiment(config, &data));
    match result {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(ByzsgdRun { inner }));
            ByzsgdStatus::Ok
        }
        Err(err) => {
            set_last_error(&err);
            status_of(&err)
        }
    }
}

/// Release a run handle.
///
/// # Safety
/// `run` must be null or a handle from [`byzsgd_run`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_run_free(run: *mut ByzsgdRun) {
    if !run.is_null() {
        // SAFETY: caller guarantees the handle came from Box::into_raw.
        drop(Box::from_raw(run));
    }
}

/// Number of per-tick records in a run; 0 if `run` is null.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_run_num_ticks(run: *const ByzsgdRun) -> u64 {
    run.as_ref().map_or(0, |r| r.inner.log.rows.len() as u64)
}

/// Copy the per-tick record at `index` into `out`.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_run_tick_row(
    run: *const ByzsgdRun,
    index: u64,
    out: *mut ByzsgdTickRow,
) -> ByzsgdStatus {
    if run.is_null() || out.is_null() {
        set_last_error("byzsgd_run_tick_row: null argument");
        return ByzsgdStatus::NullPointer;
    }
    let rows = &(*run).inner.log.rows;
    let Some(row) = rows.get(index as usize) else {
        set_last_error(format!(
            "tick index {index} out of range (run has {} ticks)",
            rows.len()
        ));
        return ByzsgdStatus::OutOfRange;
    };
    *out = ByzsgdTickRow {
        tick: row.tick,
        time: row.time,
        worker: row.worker as u64,
        byzantine: row.role == Role::Byzantine,
        accepted_count: row.accepted_count as u64,
        has_sum_sq_dist: row.sum_sq_dist.is_some(),
        sum_sq_dist: row.sum_sq_dist.unwrap_or(0.0),
    };
    ByzsgdStatus::Ok
}

/// Mean final test accuracy over honest workers. Fails with
/// `RUNTIME_ERROR` on problems that have no accuracy notion.
///
/// # Safety
/// `run` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_run_mean_honest_accuracy(
    run: *const ByzsgdRun,
    out: *mut f64,
) -> ByzsgdStatus {
    if run.is_null() || out.is_null() {
        set_last_error("byzsgd_run_mean_honest_accuracy: null argument");
        return ByzsgdStatus::NullPointer;
    }
    match (*run).inner.log.mean_honest_accuracy {
        Some(acc) => {
            *out = acc;
            ByzsgdStatus::Ok
        }
        None => {
            set_last_error("this run's problem has no classification accuracy");
            ByzsgdStatus::RuntimeError
        }
    }
}

/// Write the run's per-tick metrics CSV
/// (`tick,time,worker,role,accepted_count,sum_sq_dist`) to `path`.
///
/// # Safety
/// `run` must be a live run handle and `path` a valid NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_run_write_metrics_csv(
    run: *const ByzsgdRun,
    path: *const c_char,
) -> ByzsgdStatus {
    if run.is_null() || path.is_null() {
        set_last_error("byzsgd_run_write_metrics_csv: null argument");
        return ByzsgdStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p,
        Err(_) => {
            set_last_error("byzsgd_run_write_metrics_csv: path is not valid UTF-8");
            return ByzsgdStatus::InvalidUtf8;
        }
    };
    let write = || -> byzsgd::Result<()> {
        let file = std::fs::File::create(path)?;
        (*run).inner.log.write_csv(std::io::BufWriter::new(file))
    };
    match write() {
        Ok(()) => ByzsgdStatus::Ok,
        Err(err) => {
            set_last_error(&err);
            status_of(&err)
        }
    }
}

unsafe fn eval_bound(
    params: *const ByzsgdBoundParams,
    t: u64,
    out: *mut f64,
    f: impl Fn(&TheoremBoundParams, u64) -> byzsgd::Result<f64>,
) -> ByzsgdStatus {
    if params.is_null() || out.is_null() {
        set_last_error("bound evaluation: null argument");
        return ByzsgdStatus::NullPointer;
    }
    match f(&(*params).to_internal(), t) {
        Ok(v) => {
            *out = v;
            ByzsgdStatus::Ok
        }
        Err(err) => {
            set_last_error(&err);
            status_of(&err)
        }
    }
}

/// Evaluate the convergence bound of the closest-vectors rule at tick `t`
/// and write it to `out`. Uses `eta`, `lambda`, `g`, `sigma`, `n`, `p`,
/// and `sum_sq_init` from `params`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_theorem1_bound(
    params: *const ByzsgdBoundParams,
    t: u64,
    out: *mut f64,
) -> ByzsgdStatus {
    eval_bound(params, t, out, theorem1_bound)
}

/// Evaluate the convergence bound of the descent-threshold rule at tick
/// `t` and write it to `out`. Uses `eta`, `lambda`, `l`, `delta`, `n`,
/// `p`, and `sum_init` from `params`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn byzsgd_theorem2_bound(
    params: *const ByzsgdBoundParams,
    t: u64,
    out: *mut f64,
) -> ByzsgdStatus {
    eval_bound(params, t, out, theorem2_bound)
}
