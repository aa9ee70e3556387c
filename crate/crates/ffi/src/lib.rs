//! C ABI for `chunk-cascade`.
//!
//! Every fallible function returns a [`CcStatus`]. On failure a message is
//! kept per thread and can be read with [`cc_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chunk_cascade::cascade::{run_cascade, run_single_level, ChunkKey, EngineOptions};
use chunk_cascade::simulate::{run_trials_with, SimEstimate};
use chunk_cascade::stats::{multi_level_metrics, single_level_metrics, CascadeMetrics};
use chunk_cascade::{CascadeModel, ChunkClassifier, ChunkSource, DetectorProfile, Error, PyramidSpec, RunReport};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A chunk could not be read or the store is malformed.
    DataError = 3,
    Io = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
    /// A caller-supplied buffer is too small.
    BufferTooSmall = 6,
}

/// A cascade model: prevalence, dimension and per-level detector rates.
pub struct CcModel(CascadeModel);

/// Chunk-grid geometry.
pub struct CcPyramid(PyramidSpec);

/// The result of a single-level or cascade run.
pub struct CcReport(RunReport);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CcMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    /// 0 when precision is undefined (nothing predicted positive).
    pub precision_defined: u8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CcEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// 0 when the estimate's denominator never occurred.
    pub defined: u8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CcSimSummary {
    pub trials: u64,
    pub tpr: CcEstimate,
    pub fpr: CcEstimate,
    pub precision: CcEstimate,
}

/// Decides one chunk. Returns nonzero for positive.
pub type CcClassifyFn = Option<unsafe extern "C" fn(user: *mut c_void, level: usize, linear_index: usize) -> u8>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: CcStatus, msg: impl Into<String>) -> CcStatus {
    set_last_error(msg);
    status
}

fn from_error(e: Error) -> CcStatus {
    let status = match &e {
        Error::Domain(_) => CcStatus::InvalidArgument,
        Error::MissingChunk { .. } | Error::Format(_) => CcStatus::DataError,
        Error::Io { .. } => CcStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> CcStatus) -> CcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(CcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(CcStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// The message of the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a model. `tpr` and `fpr` hold `levels` rates each, level 0 first.
///
/// # Safety
/// `tpr` and `fpr` must point to `levels` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cc_model_new(
    dim: usize,
    prevalence: f64,
    tpr: *const f64,
    fpr: *const f64,
    levels: usize,
    out: *mut *mut CcModel,
) -> CcStatus {
    guard(|| {
        non_null!(tpr, fpr, out);
        let tpr = std::slice::from_raw_parts(tpr, levels);
        let fpr = std::slice::from_raw_parts(fpr, levels);
        let profiles = tpr
            .iter()
            .zip(fpr)
            .map(|(&tpr, &fpr)| DetectorProfile { tpr, fpr })
            .collect();
        match CascadeModel::new(dim, prevalence, profiles) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(CcModel(m)));
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from [`cc_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_model_free(model: *mut CcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn write_metrics(m: &CascadeMetrics, out: &mut CcMetrics) {
    *out = CcMetrics {
        tpr: m.tpr,
        fpr: m.fpr,
        precision: m.precision.unwrap_or(f64::NAN),
        precision_defined: m.precision.is_some() as u8,
    };
}

/// Closed-form cascade metrics. `calls` receives the expected classifier
/// calls per level-0 chunk for each level, level 0 first; `calls_len` must
/// be at least the number of levels.
///
/// # Safety
/// `model` must be a live handle; `out` writable; `calls` writable for
/// `calls_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cc_model_metrics(
    model: *const CcModel,
    out: *mut CcMetrics,
    calls: *mut f64,
    calls_len: usize,
) -> CcStatus {
    guard(|| {
        non_null!(model, out, calls);
        let model = &(*model).0;
        if calls_len < model.levels() {
            return fail(
                CcStatus::BufferTooSmall,
                format!("calls buffer holds {calls_len}, need {}", model.levels()),
            );
        }
        match multi_level_metrics(model) {
            Ok(m) => {
                write_metrics(&m, &mut *out);
                std::slice::from_raw_parts_mut(calls, calls_len)[..model.levels()]
                    .copy_from_slice(&m.expected_calls_per_l0_chunk);
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Metrics of a lone level-0 detector, for comparison.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_single_level_metrics(tpr: f64, fpr: f64, prevalence: f64, out: *mut CcMetrics) -> CcStatus {
    guard(|| {
        non_null!(out);
        match single_level_metrics(DetectorProfile { tpr, fpr }, prevalence) {
            Ok(m) => {
                write_metrics(&m, &mut *out);
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Builds a pyramid with `dim` axes of `l0_chunks_per_axis[i]` level-0
/// chunks each.
///
/// # Safety
/// `l0_chunks_per_axis` must point to `dim` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cc_pyramid_new(
    dim: usize,
    levels: usize,
    l0_chunks_per_axis: *const usize,
    out: *mut *mut CcPyramid,
) -> CcStatus {
    guard(|| {
        non_null!(l0_chunks_per_axis, out);
        let axes = std::slice::from_raw_parts(l0_chunks_per_axis, dim).to_vec();
        match PyramidSpec::new(dim, levels, axes) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(CcPyramid(p)));
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `pyramid` must be null or a handle from [`cc_pyramid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_pyramid_free(pyramid: *mut CcPyramid) {
    if !pyramid.is_null() {
        drop(Box::from_raw(pyramid));
    }
}

/// # Safety
/// `pyramid` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cc_pyramid_chunk_count(pyramid: *const CcPyramid, level: usize, out: *mut usize) -> CcStatus {
    guard(|| {
        non_null!(pyramid, out);
        match (*pyramid).0.chunk_count(level) {
            Ok(n) => {
                *out = n;
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

fn estimate(e: Option<SimEstimate>) -> CcEstimate {
    e.map_or(
        CcEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            defined: 0,
        },
        |e| CcEstimate {
            mean: e.mean,
            std_error: e.std_error,
            defined: 1,
        },
    )
}

/// Monte Carlo estimates of the model's metrics on `pyramid`. `calls`
/// receives per-level call estimates per level-0 chunk. Results do not
/// depend on `parallel`.
///
/// # Safety
/// Handles must be live; `out` writable; `calls` writable for `calls_len`
/// estimates.
#[no_mangle]
pub unsafe extern "C" fn cc_simulate(
    model: *const CcModel,
    pyramid: *const CcPyramid,
    trials: u64,
    seed: u64,
    parallel: u8,
    out: *mut CcSimSummary,
    calls: *mut CcEstimate,
    calls_len: usize,
) -> CcStatus {
    guard(|| {
        non_null!(model, pyramid, out, calls);
        let spec = &(*pyramid).0;
        if calls_len < spec.levels() {
            return fail(
                CcStatus::BufferTooSmall,
                format!("calls buffer holds {calls_len}, need {}", spec.levels()),
            );
        }
        match run_trials_with(&(*model).0, spec, trials, seed, parallel != 0) {
            Ok(r) => {
                *out = CcSimSummary {
                    trials: r.trials,
                    tpr: estimate(r.tpr),
                    fpr: estimate(r.fpr),
                    precision: estimate(r.precision),
                };
                let dst = std::slice::from_raw_parts_mut(calls, calls_len);
                for (d, s) in dst.iter_mut().zip(&r.calls_per_l0_chunk) {
                    *d = estimate(Some(*s));
                }
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Chunks are addressed, not loaded: the callback reads its own data.
struct KeySource;

impl ChunkSource for KeySource {
    type Chunk = (usize, usize);

    fn load(&self, key: ChunkKey<'_>) -> chunk_cascade::Result<(usize, usize)> {
        Ok((key.level, key.linear))
    }
}

struct CallbackClassifier {
    level: usize,
    f: unsafe extern "C" fn(*mut c_void, usize, usize) -> u8,
    user: *mut c_void,
}

// The engine only calls back from the calling thread: this classifier is
// never marked concurrent-safe and the runs below are sequential.
unsafe impl Sync for CallbackClassifier {}

impl ChunkClassifier<(usize, usize)> for CallbackClassifier {
    fn level(&self) -> usize {
        self.level
    }

    fn classify(&self, &(level, linear): &(usize, usize)) -> bool {
        unsafe { (self.f)(self.user, level, linear) != 0 }
    }
}

/// Runs the cascade over `pyramid`, calling `classify(user, level, index)`
/// for each visited chunk, top level first. With `single_level` nonzero
/// only level 0 is classified, exhaustively. Callbacks happen on the
/// calling thread.
///
/// # Safety
/// `pyramid` must be a live handle, `classify` a valid function, `out`
/// writable. `user` is passed through untouched.
#[no_mangle]
pub unsafe extern "C" fn cc_run(
    pyramid: *const CcPyramid,
    classify: CcClassifyFn,
    user: *mut c_void,
    single_level: u8,
    out: *mut *mut CcReport,
) -> CcStatus {
    guard(|| {
        non_null!(pyramid, out);
        let Some(f) = classify else {
            return fail(CcStatus::NullPointer, "`classify` is null");
        };
        let spec = &(*pyramid).0;
        let classifiers: Vec<CallbackClassifier> = (0..spec.levels())
            .map(|level| CallbackClassifier { level, f, user })
            .collect();
        let opts = EngineOptions::default();
        let result = if single_level != 0 {
            run_single_level(&classifiers[0], &KeySource, spec, &opts)
        } else {
            let refs: Vec<&dyn ChunkClassifier<(usize, usize)>> = classifiers
                .iter()
                .map(|c| c as &dyn ChunkClassifier<(usize, usize)>)
                .collect();
            run_cascade(&refs, &KeySource, spec, &opts)
        };
        match result {
            Ok(r) => {
                *out = Box::into_raw(Box::new(CcReport(r)));
                CcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `report` must be null or a handle from [`cc_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_report_free(report: *mut CcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Classifier calls at `level`, or 0 for an out-of-range level.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cc_report_calls(report: *const CcReport, level: usize) -> u64 {
    if report.is_null() {
        return 0;
    }
    let report = &*report;
    report.0.calls_per_level.get(level).copied().unwrap_or(0)
}

/// Positive classifier outputs at `level`, or 0 for an out-of-range level.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cc_report_positives(report: *const CcReport, level: usize) -> u64 {
    if report.is_null() {
        return 0;
    }
    let report = &*report;
    report.0.positives_per_level.get(level).copied().unwrap_or(0)
}

/// Copies the final level-0 predictions (0 or 1 per chunk, by linear
/// index) into `out`.
///
/// # Safety
/// `report` must be a live handle; `out` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cc_report_predictions(report: *const CcReport, out: *mut u8, len: usize) -> CcStatus {
    guard(|| {
        non_null!(report, out);
        let preds = &(*report).0.predictions;
        if len < preds.len() {
            return fail(
                CcStatus::BufferTooSmall,
                format!("buffer holds {len}, need {}", preds.len()),
            );
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, &p) in dst.iter_mut().zip(preds) {
            *d = p as u8;
        }
        CcStatus::Ok
    })
}

/// Writes the `L1:L0`-style call string, NUL-terminated, into `buf`.
/// `needed`, if not null, receives the size required including the NUL.
///
/// # Safety
/// `report` must be a live handle; `buf` writable for `len` bytes (may be
/// null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn cc_report_call_string(
    report: *const CcReport,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> CcStatus {
    guard(|| {
        non_null!(report);
        let s = (*report).0.call_string();
        let size = s.len() + 1;
        if !needed.is_null() {
            *needed = size;
        }
        if len < size || buf.is_null() {
            return fail(CcStatus::BufferTooSmall, format!("buffer holds {len}, need {size}"));
        }
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
        CcStatus::Ok
    })
}
