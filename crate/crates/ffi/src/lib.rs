//! C ABI over `expdyn`.
//!
//! Every fallible entry point returns an [`ExpdynStatus`]; on failure a
//! message is stored per thread and read with [`expdyn_last_error`]. Results
//! come back as opaque handles owned by the caller and released with the
//! matching `_free` function. Strings returned as `char *` are freed with
//! [`expdyn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use expdyn::certify::{classify, Classification, Verdict};
use expdyn::density::{density_sweep, DensityError, DensityReport, DensitySweepConfig};
use expdyn::io::{to_json_string, ClassificationJson};
use expdyn::misiurewicz::{solve_misiurewicz, MisiurewiczCertificate, MisiurewiczError};
use expdyn::orbit::ExpParameter;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpdynStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericFailure = 2,
    NullPointer = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpdynVerdict {
    Hyperbolic = 0,
    EscapeSuspect = 1,
    Undecided = 2,
}

/// Result of classifying one parameter.
pub struct ExpdynClassification(Classification);

/// A certified Misiurewicz parameter.
pub struct ExpdynMisiurewicz(MisiurewiczCertificate);

/// Per-radius tallies of a density sweep.
pub struct ExpdynDensityReport(DensityReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(ExpdynStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Self(ExpdynStatus::InvalidArgument, msg.into())
    }
    fn numeric(msg: impl ToString) -> Self {
        Self(ExpdynStatus::NumericFailure, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ExpdynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ExpdynStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ExpdynStatus::Panic
        }
    }
}

fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a pointer valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(ExpdynStatus::NullPointer, format!("{name} is null")))
}

fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles come from this library and are still live.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(ExpdynStatus::NullPointer, "handle is null".into()))
}

fn param(re: f64, im: f64) -> Result<ExpParameter, Failure> {
    ExpParameter::from_parts(re, im).map_err(|e| Failure::invalid(e.to_string()))
}

fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    *out_ptr(out, "out")? = Box::into_raw(Box::new(value));
    Ok(())
}

fn json_out(out: *mut *mut c_char, json: Result<String, expdyn::io::IoError>) -> Result<(), Failure> {
    let slot = out_ptr(out, "out")?;
    let s = json.map_err(Failure::numeric)?;
    *slot = CString::new(s).map_err(Failure::numeric)?.into_raw();
    Ok(())
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn expdyn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn expdyn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Classifies `λ = re + i·im` with an iteration `budget` and maximal period
/// `p_max`. Non-hyperbolic verdicts still succeed; inspect the verdict.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_classify(
    re: f64,
    im: f64,
    budget: usize,
    p_max: usize,
    out: *mut *mut ExpdynClassification,
) -> ExpdynStatus {
    guard(|| {
        if budget == 0 || p_max == 0 {
            return Err(Failure::invalid("budget and p_max must be positive"));
        }
        let p = param(re, im)?;
        boxed(out, ExpdynClassification(classify(p, budget, p_max)))
    })
}

/// # Safety
/// `h` must be a live handle; `verdict` and `period` must be valid for
/// writes. `period` receives 0 unless the verdict is hyperbolic.
#[no_mangle]
pub unsafe extern "C" fn expdyn_classification_verdict(
    h: *const ExpdynClassification,
    verdict: *mut ExpdynVerdict,
    period: *mut usize,
) -> ExpdynStatus {
    guard(|| {
        let c = &handle(h)?.0;
        let (v, p) = match c.verdict {
            Verdict::Hyperbolic { period, .. } => (ExpdynVerdict::Hyperbolic, period),
            Verdict::EscapeSuspect => (ExpdynVerdict::EscapeSuspect, 0),
            Verdict::Undecided => (ExpdynVerdict::Undecided, 0),
        };
        *out_ptr(verdict, "verdict")? = v;
        *out_ptr(period, "period")? = p;
        Ok(())
    })
}

/// JSON form of the classification, certificate included.
///
/// # Safety
/// `h` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_classification_json(
    h: *const ExpdynClassification,
    out: *mut *mut c_char,
) -> ExpdynStatus {
    guard(|| {
        let c = &handle(h)?.0;
        json_out(out, to_json_string(&ClassificationJson::from(c)))
    })
}

/// # Safety
/// `h` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn expdyn_classification_free(h: *mut ExpdynClassification) {
    free_box(h)
}

/// Solves `ξ_{k+p}(λ) = ξ_k(λ)` by Newton from `seed` and certifies the
/// solution.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_misiurewicz_solve(
    seed_re: f64,
    seed_im: f64,
    preperiod: usize,
    period: usize,
    tol: f64,
    out: *mut *mut ExpdynMisiurewicz,
) -> ExpdynStatus {
    guard(|| {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Failure::invalid("tol must be positive"));
        }
        let seed = param(seed_re, seed_im)?;
        let cert = solve_misiurewicz(seed, preperiod, period, tol).map_err(|e| match e {
            MisiurewiczError::InvalidArgument(m) => Failure::invalid(m),
            e => Failure::numeric(e),
        })?;
        boxed(out, ExpdynMisiurewicz(cert))
    })
}

/// # Safety
/// `h` must be a live handle; `re` and `im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_misiurewicz_lambda(
    h: *const ExpdynMisiurewicz,
    re: *mut f64,
    im: *mut f64,
) -> ExpdynStatus {
    guard(|| {
        let l = handle(h)?.0.lambda.value();
        *out_ptr(re, "re")? = l.re;
        *out_ptr(im, "im")? = l.im;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_misiurewicz_json(h: *const ExpdynMisiurewicz, out: *mut *mut c_char) -> ExpdynStatus {
    guard(|| json_out(out, to_json_string(&handle(h)?.0)))
}

/// # Safety
/// `h` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn expdyn_misiurewicz_free(h: *mut ExpdynMisiurewicz) {
    free_box(h)
}

/// Classifies `samples` uniform points in each disk `|λ - center| < r` for the
/// `n_radii` strictly decreasing radii. Deterministic in `seed`.
///
/// # Safety
/// `radii` must point to `n_radii` readable doubles; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_density_sweep(
    center_re: f64,
    center_im: f64,
    radii: *const f64,
    n_radii: usize,
    samples: usize,
    seed: u64,
    budget: usize,
    p_max: usize,
    out: *mut *mut ExpdynDensityReport,
) -> ExpdynStatus {
    guard(|| {
        if radii.is_null() {
            return Err(Failure(ExpdynStatus::NullPointer, "radii is null".into()));
        }
        let radii = std::slice::from_raw_parts(radii, n_radii).to_vec();
        let mut cfg = DensitySweepConfig::new(radii, samples, seed);
        cfg.classify.budget = budget;
        cfg.classify.p_max = p_max;
        let center = param(center_re, center_im)?;
        let report = density_sweep(center, &cfg).map_err(|e| match e {
            DensityError::InvalidConfig(m) => Failure::invalid(m),
            e => Failure::numeric(e),
        })?;
        boxed(out, ExpdynDensityReport(report))
    })
}

/// Number of radii in the report, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn expdyn_density_len(h: *const ExpdynDensityReport) -> usize {
    h.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Certified-hyperbolic count and Wilson 95% interval for radius index `i`.
///
/// # Safety
/// `h` must be a live handle; all out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_density_row(
    h: *const ExpdynDensityReport,
    i: usize,
    hyperbolic: *mut usize,
    fraction: *mut f64,
    wilson_lo: *mut f64,
    wilson_hi: *mut f64,
) -> ExpdynStatus {
    guard(|| {
        let rows = &handle(h)?.0.rows;
        let row = rows.get(i).ok_or_else(|| Failure::invalid(format!("row {i} out of range ({} rows)", rows.len())))?;
        *out_ptr(hyperbolic, "hyperbolic")? = row.hyperbolic;
        *out_ptr(fraction, "fraction")? = row.fraction;
        *out_ptr(wilson_lo, "wilson_lo")? = row.wilson_lo;
        *out_ptr(wilson_hi, "wilson_hi")? = row.wilson_hi;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn expdyn_density_json(h: *const ExpdynDensityReport, out: *mut *mut c_char) -> ExpdynStatus {
    guard(|| json_out(out, to_json_string(&handle(h)?.0)))
}

/// # Safety
/// `h` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn expdyn_density_free(h: *mut ExpdynDensityReport) {
    free_box(h)
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn expdyn_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version"),
    };
    V.as_ptr()
}
