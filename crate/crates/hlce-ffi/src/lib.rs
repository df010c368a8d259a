//! C ABI for the hlce estimation library.
//!
//! Conventions: handle-returning calls yield NULL on failure and
//! status-returning calls yield a nonzero [`HlceStatus`]; either way the
//! message is retrievable with `hlce_last_error`. Handles are opaque and
//! must be released with their matching `_free` function. All functions are
//! panic-safe at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hlce::dataset::{GroundTruth, PanelDataset};
use hlce::estimator::{self, EstimatorConfig, EstimatorKind, FittedHLCE, Splitting};
use hlce::metrics;
use hlce::nuisance::NuisanceSpec;
use hlce::regress::{KernelSpec, RegressorSpec};
use hlce::simgen;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = CString::new(message.to_string().replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlceStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    RuntimeError = 3,
    Panic = 4,
}

/// Estimator kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlceEstimator {
    Naive = 0,
    Reg = 1,
    Pro = 2,
    Mr = 3,
}

/// Nuisance backends.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlceNuisance {
    CorrectParametric = 0,
    MisspecParametric = 1,
    Kernel = 2,
    MlpShared = 3,
    Oracle = 4,
}

/// Second-stage regressors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlceStage2 {
    Ols = 0,
    Poly2 = 1,
    KernelRidge = 2,
    Mlp = 3,
}

/// Data sharing between the two stages.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlceSplitting {
    FullData = 0,
    TwoFold = 1,
    /// Uses the `folds` argument of `hlce_fit`.
    CrossFit = 2,
}

/// Opaque combined panel.
pub struct HlceDataset {
    inner: PanelDataset,
}

/// Opaque ground-truth sidecar.
pub struct HlceTruth {
    inner: GroundTruth,
}

/// Opaque fitted effect model.
pub struct HlceModel {
    inner: FittedHLCE,
}

fn guard_status(f: impl FnOnce() -> Result<(), (HlceStatus, String)>) -> HlceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlceStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside hlce");
            HlceStatus::Panic
        }
    }
}

fn guard_ptr<T>(f: impl FnOnce() -> Result<*mut T, (HlceStatus, String)>) -> *mut T {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(ptr)) => ptr,
        Ok(Err((_, message))) => {
            set_error(message);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("panic inside hlce");
            std::ptr::null_mut()
        }
    }
}

fn runtime<E: std::fmt::Display>(err: E) -> (HlceStatus, String) {
    (HlceStatus::RuntimeError, err.to_string())
}

fn invalid(message: &str) -> (HlceStatus, String) {
    (HlceStatus::InvalidArgument, message.to_string())
}

fn null_arg(name: &str) -> (HlceStatus, String) {
    (HlceStatus::NullArgument, format!("null argument: {name}"))
}

unsafe fn path_from<'a>(path: *const c_char) -> Result<&'a Path, (HlceStatus, String)> {
    if path.is_null() {
        return Err(null_arg("path"));
    }
    let text = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(text))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`); returns the full message length in bytes excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null to query the length.
#[no_mangle]
pub unsafe extern "C" fn hlce_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// ---------------------------------------------------------------------------
// Dataset handles
// ---------------------------------------------------------------------------

/// Loads a panel from the canonical CSV schema; NULL on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_load_csv(path: *const c_char) -> *mut HlceDataset {
    guard_ptr(|| {
        let path = path_from(path)?;
        let inner = PanelDataset::load_csv(path).map_err(runtime)?;
        Ok(Box::into_raw(Box::new(HlceDataset { inner })))
    })
}

/// Writes the panel in the canonical CSV schema.
///
/// # Safety
/// `dataset` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_write_csv(
    dataset: *const HlceDataset,
    path: *const c_char,
) -> HlceStatus {
    guard_status(|| {
        let dataset = dataset.as_ref().ok_or_else(|| null_arg("dataset"))?;
        let path = path_from(path)?;
        dataset.inner.write_csv(path).map_err(runtime)
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_rows(dataset: *const HlceDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n())
}

/// Covariate dimension; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_dim(dataset: *const HlceDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.d())
}

/// Empirical prior p(G=O); NaN for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_group_prior(dataset: *const HlceDataset) -> f64 {
    dataset.as_ref().map_or(f64::NAN, |d| d.inner.group_prior())
}

/// Copies the covariates of row `row` into `out` (length `hlce_dataset_dim`).
///
/// # Safety
/// `dataset` must be a live handle; `out` must point to `hlce_dataset_dim`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_covariates(
    dataset: *const HlceDataset,
    row: usize,
    out: *mut f64,
) -> HlceStatus {
    guard_status(|| {
        let dataset = dataset.as_ref().ok_or_else(|| null_arg("dataset"))?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let rows = dataset.inner.rows();
        if row >= rows.len() {
            return Err(invalid("row index out of range"));
        }
        std::ptr::copy_nonoverlapping(rows[row].x.as_ptr(), out, dataset.inner.d());
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hlce_dataset_free(dataset: *mut HlceDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// ---------------------------------------------------------------------------
// Ground-truth handles
// ---------------------------------------------------------------------------

/// Loads a truth sidecar (`tau[,s0,s1,y0,y1]`); NULL on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hlce_truth_load_csv(path: *const c_char) -> *mut HlceTruth {
    guard_ptr(|| {
        let path = path_from(path)?;
        let inner = GroundTruth::load_csv(path).map_err(runtime)?;
        Ok(Box::into_raw(Box::new(HlceTruth { inner })))
    })
}

/// Number of truth rows.
///
/// # Safety
/// `truth` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hlce_truth_rows(truth: *const HlceTruth) -> usize {
    truth.as_ref().map_or(0, |t| t.inner.n())
}

/// Copies the per-row true effects into `out` (length `hlce_truth_rows`).
///
/// # Safety
/// `truth` must be a live handle; `out` must point to enough writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn hlce_truth_tau(truth: *const HlceTruth, out: *mut f64) -> HlceStatus {
    guard_status(|| {
        let truth = truth.as_ref().ok_or_else(|| null_arg("truth"))?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        std::ptr::copy_nonoverlapping(truth.inner.tau.as_ptr(), out, truth.inner.tau.len());
        Ok(())
    })
}

/// # Safety
/// `truth` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hlce_truth_free(truth: *mut HlceTruth) {
    if !truth.is_null() {
        drop(Box::from_raw(truth));
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Draws the closed-form synthetic panel plus truth into fresh handles.
///
/// # Safety
/// `out_dataset` and `out_truth` must be valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn hlce_gen_dataset1(
    n_e: usize,
    n_o: usize,
    seed: u64,
    out_dataset: *mut *mut HlceDataset,
    out_truth: *mut *mut HlceTruth,
) -> HlceStatus {
    gen_into(out_dataset, out_truth, || simgen::sample_dataset1(n_e, n_o, seed))
}

/// Draws the Gaussian-process synthetic panel plus truth.
///
/// # Safety
/// `out_dataset` and `out_truth` must be valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn hlce_gen_dataset2(
    n_e: usize,
    n_o: usize,
    seed: u64,
    out_dataset: *mut *mut HlceDataset,
    out_truth: *mut *mut HlceTruth,
) -> HlceStatus {
    gen_into(out_dataset, out_truth, || simgen::sample_dataset2(n_e, n_o, seed))
}

unsafe fn gen_into(
    out_dataset: *mut *mut HlceDataset,
    out_truth: *mut *mut HlceTruth,
    gen: impl FnOnce() -> Result<simgen::GenOutput, simgen::SimGenError>,
) -> HlceStatus {
    guard_status(|| {
        if out_dataset.is_null() {
            return Err(null_arg("out_dataset"));
        }
        if out_truth.is_null() {
            return Err(null_arg("out_truth"));
        }
        let output = gen().map_err(runtime)?;
        *out_dataset = Box::into_raw(Box::new(HlceDataset { inner: output.dataset }));
        *out_truth = Box::into_raw(Box::new(HlceTruth { inner: output.truth }));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Fitting and prediction
// ---------------------------------------------------------------------------

/// Fits an estimator; `folds` only matters for cross-fitting. NULL on
/// failure.
///
/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hlce_fit(
    dataset: *const HlceDataset,
    estimator: HlceEstimator,
    nuisance: HlceNuisance,
    stage2: HlceStage2,
    splitting: HlceSplitting,
    folds: u32,
    seed: u64,
) -> *mut HlceModel {
    guard_ptr(|| {
        let dataset = dataset.as_ref().ok_or_else(|| null_arg("dataset"))?;
        let config = EstimatorConfig {
            kind: match estimator {
                HlceEstimator::Naive => EstimatorKind::Naive,
                HlceEstimator::Reg => EstimatorKind::Reg,
                HlceEstimator::Pro => EstimatorKind::Pro,
                HlceEstimator::Mr => EstimatorKind::Mr,
            },
            nuisance: match nuisance {
                HlceNuisance::CorrectParametric => NuisanceSpec::correct_parametric(),
                HlceNuisance::MisspecParametric => NuisanceSpec::misspec_parametric(),
                HlceNuisance::Kernel => NuisanceSpec::kernel(),
                HlceNuisance::MlpShared => NuisanceSpec::mlp_shared(),
                HlceNuisance::Oracle => NuisanceSpec::oracle(),
            },
            stage2: match stage2 {
                HlceStage2::Ols => RegressorSpec::Ols,
                HlceStage2::Poly2 => RegressorSpec::polynomial(2),
                HlceStage2::KernelRidge => RegressorSpec::KernelRidge(KernelSpec::default()),
                HlceStage2::Mlp => RegressorSpec::Mlp(Default::default()),
            },
            splitting: match splitting {
                HlceSplitting::FullData => Splitting::FullData,
                HlceSplitting::TwoFold => Splitting::TwoFoldSplit,
                HlceSplitting::CrossFit => Splitting::CrossFit(folds as usize),
            },
            seed,
        };
        let inner = estimator::fit_two_stage(&dataset.inner, &config).map_err(runtime)?;
        Ok(Box::into_raw(Box::new(HlceModel { inner })))
    })
}

/// Predicted effect at one covariate vector of length `dim`.
///
/// # Safety
/// `model` must be a live handle; `x` must point to `dim` readable doubles
/// and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn hlce_predict(
    model: *const HlceModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> HlceStatus {
    guard_status(|| {
        let model = model.as_ref().ok_or_else(|| null_arg("model"))?;
        if x.is_null() {
            return Err(null_arg("x"));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let xs = std::slice::from_raw_parts(x, dim);
        let value = model.inner.predict_one(xs).map_err(runtime)?;
        *out = value;
        Ok(())
    })
}

/// Row-wise predictions over a row-major matrix (`rows` x `dim`).
///
/// # Safety
/// `model` must be a live handle; `x` must point to rows*dim readable
/// doubles and `out` to `rows` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hlce_predict_batch(
    model: *const HlceModel,
    x: *const f64,
    rows: usize,
    dim: usize,
    out: *mut f64,
) -> HlceStatus {
    guard_status(|| {
        let model = model.as_ref().ok_or_else(|| null_arg("model"))?;
        if x.is_null() {
            return Err(null_arg("x"));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let xs = std::slice::from_raw_parts(x, rows * dim);
        let preds = model.inner.predict(xs, dim).map_err(runtime)?;
        std::ptr::copy_nonoverlapping(preds.as_ptr(), out, rows);
        Ok(())
    })
}

/// Mean predicted effect over the rows of a row-major matrix.
///
/// # Safety
/// `model` must be a live handle; `x` must point to rows*dim readable
/// doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn hlce_ate(
    model: *const HlceModel,
    x: *const f64,
    rows: usize,
    dim: usize,
    out: *mut f64,
) -> HlceStatus {
    guard_status(|| {
        let model = model.as_ref().ok_or_else(|| null_arg("model"))?;
        if x.is_null() {
            return Err(null_arg("x"));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let xs = std::slice::from_raw_parts(x, rows * dim);
        let value = model.inner.ate(xs, dim).map_err(runtime)?;
        *out = value;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hlce_model_free(model: *mut HlceModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Root mean squared error between estimated and true effects.
///
/// # Safety
/// `tau_hat` and `tau` must point to `len` readable doubles; `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn hlce_pehe(
    tau_hat: *const f64,
    tau: *const f64,
    len: usize,
    out: *mut f64,
) -> HlceStatus {
    metric_into(tau_hat, tau, len, out, metrics::pehe)
}

/// Absolute error of the average effect (normalized by the sample size).
///
/// # Safety
/// `tau_hat` and `tau` must point to `len` readable doubles; `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn hlce_ate_error(
    tau_hat: *const f64,
    tau: *const f64,
    len: usize,
    out: *mut f64,
) -> HlceStatus {
    metric_into(tau_hat, tau, len, out, metrics::ate_error)
}

unsafe fn metric_into(
    tau_hat: *const f64,
    tau: *const f64,
    len: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> Result<f64, metrics::MetricsError>,
) -> HlceStatus {
    guard_status(|| {
        if tau_hat.is_null() {
            return Err(null_arg("tau_hat"));
        }
        if tau.is_null() {
            return Err(null_arg("tau"));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let a = std::slice::from_raw_parts(tau_hat, len);
        let b = std::slice::from_raw_parts(tau, len);
        *out = f(a, b).map_err(runtime)?;
        Ok(())
    })
}

/// Least-squares slope of log(err) on log(size).
///
/// # Safety
/// `sizes` and `errs` must point to `len` readable elements; `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn hlce_rate_slope(
    sizes: *const usize,
    errs: *const f64,
    len: usize,
    out: *mut f64,
) -> HlceStatus {
    guard_status(|| {
        if sizes.is_null() {
            return Err(null_arg("sizes"));
        }
        if errs.is_null() {
            return Err(null_arg("errs"));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let s = std::slice::from_raw_parts(sizes, len);
        let e = std::slice::from_raw_parts(errs, len);
        let points: Vec<(usize, f64)> = s.iter().copied().zip(e.iter().copied()).collect();
        *out = metrics::rate_slope(&points).map_err(runtime)?;
        Ok(())
    })
}
