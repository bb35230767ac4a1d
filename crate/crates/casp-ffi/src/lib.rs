//! C ABI for the covariance-aware repair operators.
//!
//! The surface is small on purpose: build an opaque market handle from raw
//! arrays, then call the repair or projection entry points with plain
//! buffers. Every function returns a [`CaspStatus`]; a human-readable
//! message for the most recent failure on the calling thread is available
//! via [`casp_last_error_message`]. The generated header lives in
//! `include/casp.h`.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use casp::market::MarketModel;
use casp::projection::{self, Candidate, ConstraintSet};
use casp::repair::{self, MethodName, RaParams, RepairMethod};

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Outcome of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaspStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Sizes, bounds or values were invalid.
    InvalidArgument = 2,
    /// The cardinality/box constraints describe an empty feasible region.
    InfeasibleConstraints = 3,
    /// The QP solver did not reach the requested tolerance.
    ConvergenceFailure = 4,
    /// An unexpected internal failure (never expected; check the message).
    InternalError = 5,
}

/// The seven repair methods.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaspMethod {
    Euclidean = 0,
    VolnormEuc = 1,
    MinvarEuc = 2,
    SharpeEuc = 3,
    CaspBasic = 4,
    CaspRetsel = 5,
    RaCasp = 6,
}

impl From<CaspMethod> for MethodName {
    fn from(m: CaspMethod) -> Self {
        match m {
            CaspMethod::Euclidean => MethodName::Euclidean,
            CaspMethod::VolnormEuc => MethodName::VolnormEuc,
            CaspMethod::MinvarEuc => MethodName::MinvarEuc,
            CaspMethod::SharpeEuc => MethodName::SharpeEuc,
            CaspMethod::CaspBasic => MethodName::CaspBasic,
            CaspMethod::CaspRetsel => MethodName::CaspRetsel,
            CaspMethod::RaCasp => MethodName::RaCasp,
        }
    }
}

/// Projection diagnostics mirrored into C.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaspQpReport {
    /// Achieved ½(w−z)ᵀM(w−z) under the projection metric.
    pub objective_value: f64,
    /// Max violation across budget, bounds, stationarity, complementarity.
    pub kkt_residual: f64,
    /// Solver iterations.
    pub iterations: u64,
    /// 1 when the metric needed an eigenvalue-floor ridge.
    pub regularized: u8,
    /// 1 when every selection score was zero and the lowest-index fallback
    /// active set was used.
    pub degenerate_selection: u8,
}

impl From<projection::QpReport> for CaspQpReport {
    fn from(r: projection::QpReport) -> Self {
        Self {
            objective_value: r.objective_value,
            kkt_residual: r.kkt_residual,
            iterations: r.iterations as u64,
            regularized: r.regularized as u8,
            degenerate_selection: r.degenerate_selection as u8,
        }
    }
}

/// Opaque market handle: expected returns, covariance and ESG scores.
pub struct CaspModel {
    inner: MarketModel,
}

fn status_of(err: &casp::Error) -> CaspStatus {
    match err {
        casp::Error::InfeasibleConstraints(_) => CaspStatus::InfeasibleConstraints,
        casp::Error::Convergence { .. } => CaspStatus::ConvergenceFailure,
        _ => CaspStatus::InvalidArgument,
    }
}

fn guarded<F: FnOnce() -> CaspStatus>(f: F) -> CaspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CaspStatus::InternalError
        }
    }
}

unsafe fn slice_or_zeros(ptr: *const f64, len: usize) -> Option<Vec<f64>> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len).to_vec())
    }
}

/// Build a market handle from raw arrays.
///
/// * `omega_row_major` — n×n covariance, row major, symmetrized internally.
/// * `mu`, `esg` — length n; may be NULL, in which case zeros are used
///   (sufficient for the return-agnostic methods).
///
/// On success writes a handle to `*out`; free it with [`casp_model_free`].
///
/// # Safety
/// `omega_row_major` must point to n·n readable doubles; `mu` and `esg`,
/// when non-null, to n readable doubles; `out` must be a valid writable
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn casp_model_new(
    n_assets: usize,
    mu: *const f64,
    omega_row_major: *const f64,
    esg: *const f64,
    out: *mut *mut CaspModel,
) -> CaspStatus {
    guarded(|| {
        if out.is_null() || omega_row_major.is_null() {
            set_error("out and omega_row_major must be non-null");
            return CaspStatus::NullArgument;
        }
        if n_assets == 0 {
            set_error("n_assets must be ≥ 1");
            return CaspStatus::InvalidArgument;
        }
        let omega_flat = std::slice::from_raw_parts(omega_row_major, n_assets * n_assets);
        let mu_vec = slice_or_zeros(mu, n_assets).unwrap_or_else(|| vec![0.0; n_assets]);
        let esg_vec = slice_or_zeros(esg, n_assets).unwrap_or_else(|| vec![0.0; n_assets]);
        let asset_ids = (0..n_assets).map(|i| format!("A{i}")).collect();
        match MarketModel::from_raw(asset_ids, mu_vec, omega_flat.to_vec(), esg_vec) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CaspModel { inner: model }));
                CaspStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Release a handle produced by [`casp_model_new`]. NULL is a no-op.
///
/// # Safety
/// `model` must be a pointer previously returned by [`casp_model_new`] and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn casp_model_free(model: *mut CaspModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of assets behind a handle (0 for NULL).
///
/// # Safety
/// `model`, when non-null, must be a live handle from [`casp_model_new`].
#[no_mangle]
pub unsafe extern "C" fn casp_model_len(model: *const CaspModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).inner.n_assets()
    }
}

/// Repair a raw candidate onto the feasible region.
///
/// * `z` — length-n candidate (any sign, any sum).
/// * `k`, `lower`, `upper` — cardinality limit and per-asset bounds.
/// * `lambda`, `gamma` — return-awareness parameters for the return-aware
///   methods (ignored otherwise); `risk_free` feeds the Sharpe selection.
/// * `out_weights` — length-n buffer receiving the dense repaired weights
///   (zeros off the active set).
/// * `out_report` — optional diagnostics; may be NULL.
///
/// # Safety
/// `z` and `out_weights` must point to n readable/writable doubles for the
/// model's n; `out_report`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn casp_repair(
    model: *const CaspModel,
    k: usize,
    lower: f64,
    upper: f64,
    method: CaspMethod,
    lambda: f64,
    gamma: f64,
    risk_free: f64,
    z: *const f64,
    out_weights: *mut f64,
    out_report: *mut CaspQpReport,
) -> CaspStatus {
    guarded(|| {
        if model.is_null() || z.is_null() || out_weights.is_null() {
            set_error("model, z and out_weights must be non-null");
            return CaspStatus::NullArgument;
        }
        let model = &(*model).inner;
        let n = model.n_assets();
        let z_slice = std::slice::from_raw_parts(z, n);
        let candidate = match Candidate::new(z_slice.to_vec()) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return CaspStatus::InvalidArgument;
            }
        };
        let constraints = match ConstraintSet::new(k, lower, upper) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        if !(lambda >= 0.0 && gamma >= 0.0) {
            set_error("lambda and gamma must be ≥ 0");
            return CaspStatus::InvalidArgument;
        }
        let preset = RepairMethod::preset(method.into(), RaParams { lambda, gamma }, risk_free);
        match repair::repair(&candidate, model, &constraints, &preset) {
            Ok((portfolio, report)) => {
                let dense = portfolio.to_dense(n);
                std::ptr::copy_nonoverlapping(dense.as_ptr(), out_weights, n);
                if !out_report.is_null() {
                    *out_report = report.into();
                }
                CaspStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Euclidean projection onto `{w : Σw = 1, lower ≤ w ≤ upper}`.
///
/// `z` and `out_weights` are length-k buffers.
///
/// # Safety
/// `z` must point to k readable doubles and `out_weights` to k writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn casp_project_simplex_box(
    z: *const f64,
    k: usize,
    lower: f64,
    upper: f64,
    tol: f64,
    out_weights: *mut f64,
) -> CaspStatus {
    guarded(|| {
        if z.is_null() || out_weights.is_null() {
            set_error("z and out_weights must be non-null");
            return CaspStatus::NullArgument;
        }
        let z_slice = std::slice::from_raw_parts(z, k);
        match projection::project_simplex_box(z_slice, lower, upper, tol) {
            Ok(w) => {
                std::ptr::copy_nonoverlapping(w.as_ptr(), out_weights, k);
                CaspStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Covariance-metric projection: minimize ½(w−z)ᵀΩ(w−z) over the
/// box-constrained simplex. `omega_row_major` is k×k.
///
/// # Safety
/// `z` and `out_weights` must cover k doubles, `omega_row_major` k·k;
/// `out_report`, when non-null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn casp_project_omega(
    z: *const f64,
    omega_row_major: *const f64,
    k: usize,
    lower: f64,
    upper: f64,
    tol: f64,
    out_weights: *mut f64,
    out_report: *mut CaspQpReport,
) -> CaspStatus {
    guarded(|| {
        if z.is_null() || omega_row_major.is_null() || out_weights.is_null() {
            set_error("z, omega_row_major and out_weights must be non-null");
            return CaspStatus::NullArgument;
        }
        let z_slice = std::slice::from_raw_parts(z, k);
        let omega_flat = std::slice::from_raw_parts(omega_row_major, k * k);
        match projection::project_omega_flat(z_slice, omega_flat, lower, upper, tol) {
            Ok((w, report)) => {
                std::ptr::copy_nonoverlapping(w.as_ptr(), out_weights, k);
                if !out_report.is_null() {
                    *out_report = report.into();
                }
                CaspStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Copy the calling thread's last error message (NUL-terminated) into `buf`.
/// Returns the full message length in bytes (excluding the NUL); when it
/// exceeds `len − 1` the copy is truncated. `buf` may be NULL to query the
/// length.
///
/// # Safety
/// `buf`, when non-null, must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn casp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static version string of the underlying library.
#[no_mangle]
pub extern "C" fn casp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
