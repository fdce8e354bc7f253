//! C ABI over `pls-core`.
//!
//! Every function returns a [`PlsStatus`]; results come back through out
//! pointers. On failure, `pls_last_error_message` describes the most recent
//! error on the calling thread. Handles are opaque and must be released with
//! their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use pls_core::bench::persist_run;
use pls_core::credal::CriterionKind;
use pls_core::data::{generate_synthetic, load_csv, split, Dataset, SplitSpec, SyntheticSpec};
use pls_core::laplace::{laplace_log_marginal, GaussianPrior};
use pls_core::logistic::Design;
use pls_core::optim::BfgsConfig;
use pls_core::self_training::{run_self_training, RunResult, SelfTrainingConfig, StoppingRule};
use pls_core::PlsError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Numerical = 5,
    Config = 6,
    Panic = 7,
}

/// Opaque dataset handle.
pub struct PlsDataset(Dataset);

/// Opaque self-training result handle.
pub struct PlsRunResult(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &PlsError) -> PlsStatus {
    match e {
        PlsError::Candidate { source, .. } | PlsError::Iteration { source, .. } => status_of(source),
        PlsError::Io { .. } => PlsStatus::Io,
        PlsError::InvalidInput { .. } | PlsError::DimensionMismatch { .. } | PlsError::Json(_) => {
            PlsStatus::InvalidArgument
        }
        PlsError::InvalidConfig { .. } => PlsStatus::Config,
        PlsError::FitNonConvergence { .. }
        | PlsError::NonFiniteObjective { .. }
        | PlsError::BfgsNonConvergence { .. }
        | PlsError::NotPositiveDefinite { .. }
        | PlsError::Infeasible { .. }
        | PlsError::MaxEvaluations { .. }
        | PlsError::EmptyCandidates => PlsStatus::Numerical,
        _ => PlsStatus::Data,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (PlsStatus, String)>) -> PlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            PlsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            PlsStatus::Panic
        }
    }
}

fn core<T>(r: pls_core::Result<T>) -> Result<T, (PlsStatus, String)> {
    r.map_err(|e| (status_of(&e), format!("{}: {e}", e.kind())))
}

fn null(what: &str) -> (PlsStatus, String) {
    (PlsStatus::NullPointer, format!("null pointer: {what}"))
}

fn invalid(msg: impl Into<String>) -> (PlsStatus, String) {
    (PlsStatus::InvalidArgument, msg.into())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PlsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (PlsStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (PlsStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PlsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the most recent failure on this thread; empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pls_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    positive_class: *const c_char,
    out: *mut *mut PlsDataset,
) -> PlsStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let label = c_str(label_column, "label_column")?;
        let positive = c_str(positive_class, "positive_class")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = core(load_csv(Path::new(path), label, positive))?;
        write_out(out, Box::into_raw(Box::new(PlsDataset(d))), "out")
    })
}

/// Synthetic logistic data; `beta` holds the intercept then one slope per
/// covariate.
///
/// # Safety
/// `beta` must point to `beta_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pls_dataset_synthetic(
    n_total: usize,
    beta: *const f64,
    beta_len: usize,
    seed: u64,
    out: *mut *mut PlsDataset,
) -> PlsStatus {
    guard(|| {
        let beta = slice(beta, beta_len, "beta")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = core(generate_synthetic(&SyntheticSpec {
            n_total,
            true_beta: beta.to_vec(),
            seed,
        }))?;
        write_out(out, Box::into_raw(Box::new(PlsDataset(d))), "out")
    })
}

/// # Safety
/// `dataset` must be a live handle or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pls_dataset_shape(
    dataset: *const PlsDataset,
    n_rows: *mut usize,
    n_features: *mut usize,
) -> PlsStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        write_out(n_rows, d.n_rows(), "n_rows")?;
        write_out(n_features, d.n_features(), "n_features")
    })
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pls_dataset_free(dataset: *mut PlsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Laplace log marginal likelihood of a logistic model under
/// `N(prior_mean, sigma_scale * I)`. `features` is row-major `n x p` without
/// the intercept column; `prior_mean` has `p + 1` entries.
///
/// # Safety
/// Arrays must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pls_log_marginal(
    features: *const f64,
    labels: *const u8,
    n: usize,
    p: usize,
    prior_mean: *const f64,
    sigma_scale: f64,
    out: *mut f64,
) -> PlsStatus {
    guard(|| {
        let x = slice(features, n * p, "features")?;
        let y = slice(labels, n, "labels")?;
        let mu = slice(prior_mean, p + 1, "prior_mean")?;
        if y.iter().any(|&v| v > 1) {
            return Err(invalid("labels must be 0 or 1"));
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i * p + j - 1] });
        let response = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
        let data = core(Design::from_parts(design, response))?;
        let prior = core(GaussianPrior::isotropic(DVector::from_column_slice(mu), sigma_scale))?;
        let ev = core(laplace_log_marginal(&data, &prior, &BfgsConfig::default()))?;
        write_out(out, ev.log_value, "out")
    })
}

/// Splits `dataset`, standardizes with training statistics and runs
/// self-training with default settings. `criterion` is a criterion label
/// such as `ppp` or `gamma-maximin-alpha0.5`; `max_iterations < 0` means no
/// cap.
///
/// # Safety
/// `dataset` must be a live handle, `criterion` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pls_run_self_training(
    dataset: *const PlsDataset,
    labeled_fraction: f64,
    test_fraction: f64,
    seed: u64,
    criterion: *const c_char,
    max_iterations: i64,
    out: *mut *mut PlsRunResult,
) -> PlsStatus {
    guard(|| {
        let d = &handle(dataset, "dataset")?.0;
        let kind: CriterionKind = core(c_str(criterion, "criterion")?.parse())?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = SplitSpec {
            labeled_fraction,
            test_fraction,
            seed,
        };
        let (part, _) = core(split(d, &spec))?.standardized();
        let stop = StoppingRule {
            max_iterations: usize::try_from(max_iterations).ok(),
        };
        let mut result = core(run_self_training(
            &part.labeled,
            &part.unlabeled,
            &part.test,
            kind,
            stop,
            &SelfTrainingConfig::default(),
        ))?;
        result.seed = Some(seed);
        write_out(out, Box::into_raw(Box::new(PlsRunResult(result))), "out")
    })
}

/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pls_run_n_records(run: *const PlsRunResult, out: *mut usize) -> PlsStatus {
    guard(|| write_out(out, handle(run, "run")?.0.records.len(), "out"))
}

/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pls_run_criterion_evaluations(run: *const PlsRunResult, out: *mut u64) -> PlsStatus {
    guard(|| write_out(out, handle(run, "run")?.0.criterion_evaluations, "out"))
}

/// Test accuracy recorded at `iteration`.
///
/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pls_run_accuracy(run: *const PlsRunResult, iteration: usize, out: *mut f64) -> PlsStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        let rec = r
            .records
            .get(iteration)
            .ok_or_else(|| invalid(format!("iteration {iteration} out of range")))?;
        write_out(out, rec.test_accuracy, "out")
    })
}

/// Pool index selected at `iteration`, or -1 when nothing was selected.
///
/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pls_run_selected_index(run: *const PlsRunResult, iteration: usize, out: *mut i64) -> PlsStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        let rec = r
            .records
            .get(iteration)
            .ok_or_else(|| invalid(format!("iteration {iteration} out of range")))?;
        write_out(out, rec.selected_pool_index.map_or(-1, |i| i as i64), "out")
    })
}

/// The run as JSON. Release the string with `pls_string_free`.
///
/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pls_run_to_json(run: *const PlsRunResult, out: *mut *mut c_char) -> PlsStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = core(serde_json::to_string(r).map_err(PlsError::from))?;
        let c = CString::new(text).map_err(|_| invalid("json contains NUL"))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// Writes the run file format used by the benchmark CLI.
///
/// # Safety
/// `run` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pls_run_write_json(run: *const PlsRunResult, path: *const c_char) -> PlsStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        core(persist_run(r, Path::new(c_str(path, "path")?)))
    })
}

/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pls_run_free(run: *mut PlsRunResult) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
