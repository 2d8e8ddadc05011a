//! C ABI over `ips-core`.
//!
//! Every fallible function returns an [`IpsStatus`]. On failure the message is kept
//! per thread and can be read with [`ips_last_error_message`]. Handles are opaque and
//! must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ips_core::dataset::{load_csv, AnalysisFrame, ColumnSchema};
use ips_core::estimator::{DeltaGrid, GridSpec, LearnerConfig, OutcomeMode, DEFAULT_FOLDS};
use ips_core::inference::{contrast_difference, contrast_overlap_test, ContrastResult, Decision, IntervalKind};
use ips_core::learners::LearnerSpec;
use ips_core::pipeline::{run_analysis, Analysis, AnalysisSettings, BandSettings};
use ips_core::{Error, ErrorKind};
use ndarray::Array2;
use serde::Deserialize;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Estimation = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque analysis frame.
pub struct IpsFrame {
    frame: AnalysisFrame,
}

/// Opaque estimated curve with its influence values.
pub struct IpsCurve {
    analysis: Analysis,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IpsCurvePoint {
    pub delta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub pointwise_lo: f64,
    pub pointwise_hi: f64,
    /// NaN when the band is absent.
    pub band_lo: f64,
    pub band_hi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IpsContrast {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub interval_lo_lo: f64,
    pub interval_lo_hi: f64,
    pub interval_hi_lo: f64,
    pub interval_hi_hi: f64,
    /// Difference estimate and interval; NaN for the overlap test.
    pub difference: f64,
    pub difference_lo: f64,
    pub difference_hi: f64,
    pub overlap: bool,
    pub reject: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: IpsStatus, message: impl Into<String>) -> IpsStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> IpsStatus {
    let status = match e.kind() {
        ErrorKind::Config => IpsStatus::Config,
        ErrorKind::Data => IpsStatus::Data,
        ErrorKind::Estimation => IpsStatus::Estimation,
        ErrorKind::Io => IpsStatus::Io,
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> IpsStatus) -> IpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(IpsStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, IpsStatus> {
    if p.is_null() {
        return Err(fail(IpsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IpsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message for the last failure on this thread, or null. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn ips_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ips_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `δπ / (δπ + 1 − π)`. NaN for δ ≤ 0 or π outside [0, 1].
#[no_mangle]
pub extern "C" fn ips_shift_propensity(delta: f64, pi: f64) -> f64 {
    if !(delta > 0.0 && (0.0..=1.0).contains(&pi)) {
        return f64::NAN;
    }
    ips_core::estimator::shift_propensity(delta, pi)
}

/// Influence value of one unit. NaN when `a` or `y` is not 0/1, δ ≤ 0 or π is
/// outside [0, 1].
#[no_mangle]
pub extern "C" fn ips_influence_value(delta: f64, a: u8, y: u8, pi: f64, mu1: f64, mu0: f64) -> f64 {
    if a > 1 || y > 1 || !(delta > 0.0 && (0.0..=1.0).contains(&pi)) {
        return f64::NAN;
    }
    ips_core::estimator::influence_value(delta, a, y as f64, pi, mu1, mu0)
}

/// Builds a frame from a row-major `n × p` covariate array and 0/1 vectors of length n.
///
/// # Safety
/// `x` must point to `n * p` doubles (may be null when `p == 0`); `a` and `y` to `n`
/// bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ips_frame_from_arrays(
    x: *const f64,
    n: usize,
    p: usize,
    a: *const u8,
    y: *const u8,
    out: *mut *mut IpsFrame,
) -> IpsStatus {
    guarded(|| {
        if out.is_null() || a.is_null() || y.is_null() || (x.is_null() && p > 0) {
            return fail(IpsStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let Some(len) = n.checked_mul(p) else {
            return fail(IpsStatus::InvalidArgument, "n * p overflows");
        };
        let xs = if p == 0 { &[][..] } else { std::slice::from_raw_parts(x, len) };
        let a = std::slice::from_raw_parts(a, n).to_vec();
        let y = std::slice::from_raw_parts(y, n).to_vec();
        let x = match Array2::from_shape_vec((n, p), xs.to_vec()) {
            Ok(x) => x,
            Err(e) => return fail(IpsStatus::InvalidArgument, e.to_string()),
        };
        match AnalysisFrame::new(x, a, y) {
            Ok(frame) => {
                *out = Box::into_raw(Box::new(IpsFrame { frame }));
                IpsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads and encodes a CSV file. `schema_json` is a column schema object, e.g.
/// `{"outcome_column":"y","treatment_column":"a","covariate_columns":["x1"]}`.
///
/// # Safety
/// `path` and `schema_json` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ips_frame_from_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut IpsFrame,
) -> IpsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IpsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match read_str(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let schema_text = match read_str(schema_json, "schema_json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let schema: ColumnSchema = match serde_json::from_str(schema_text) {
            Ok(s) => s,
            Err(e) => return fail(IpsStatus::Config, format!("schema_json: {e}")),
        };
        match load_csv(path, &schema) {
            Ok(frame) => {
                *out = Box::into_raw(Box::new(IpsFrame { frame }));
                IpsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `frame` must come from an `ips_frame_from_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ips_frame_free(frame: *mut IpsFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ips_frame_rows(frame: *const IpsFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.frame.n())
}

/// Number of encoded covariate columns, or 0 for a null handle.
///
/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ips_frame_cols(frame: *const IpsFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.frame.p())
}

fn two() -> usize {
    DEFAULT_FOLDS
}

fn ten() -> usize {
    10
}

fn five_percent() -> f64 {
    0.05
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateOptions {
    seed: u64,
    #[serde(default)]
    grid: GridSpec,
    #[serde(default = "two")]
    k_folds: usize,
    #[serde(default = "LearnerSpec::default_roster")]
    learners: Vec<LearnerSpec>,
    #[serde(default = "ten")]
    inner_folds: usize,
    #[serde(default)]
    outcome_mode: OutcomeMode,
    #[serde(default)]
    bootstrap: BandSettings,
    #[serde(default = "five_percent")]
    alpha: f64,
}

fn settings_from(options: EstimateOptions) -> Result<AnalysisSettings, Error> {
    let grid = DeltaGrid::from_spec(&options.grid)?;
    Ok(AnalysisSettings {
        learners: LearnerConfig {
            inner_folds: options.inner_folds,
            outcome_mode: options.outcome_mode,
            ..LearnerConfig::uniform(options.learners)
        },
        k_folds: options.k_folds,
        alpha: options.alpha,
        band: options.bootstrap,
        contrast: None,
        ..AnalysisSettings::new(grid, options.seed)
    })
}

/// Cross-fits nuisances and estimates the curve with uniform bands. `options_json`
/// must contain `seed`; `grid`, `k_folds`, `learners`, `inner_folds`,
/// `outcome_mode`, `bootstrap` and `alpha` are optional.
///
/// # Safety
/// `frame` must be a live handle, `options_json` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ips_estimate(
    frame: *const IpsFrame,
    options_json: *const c_char,
    out: *mut *mut IpsCurve,
) -> IpsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IpsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(frame) = frame.as_ref() else {
            return fail(IpsStatus::NullPointer, "frame is null");
        };
        let text = match read_str(options_json, "options_json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let options: EstimateOptions = match serde_json::from_str(text) {
            Ok(o) => o,
            Err(e) => return fail(IpsStatus::Config, format!("options_json: {e}")),
        };
        let result = settings_from(options).and_then(|s| run_analysis(&frame.frame, &s));
        match result {
            Ok(analysis) => {
                *out = Box::into_raw(Box::new(IpsCurve { analysis }));
                IpsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `curve` must come from [`ips_estimate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ips_curve_free(curve: *mut IpsCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ips_curve_len(curve: *const IpsCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.analysis.curve.points().len())
}

/// Bootstrap critical value, or NaN.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ips_curve_critical_value(curve: *const IpsCurve) -> f64 {
    curve
        .as_ref()
        .and_then(|c| c.analysis.curve.critical_value())
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `curve` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ips_curve_point(curve: *const IpsCurve, index: usize, out: *mut IpsCurvePoint) -> IpsStatus {
    guarded(|| {
        let (Some(curve), false) = (curve.as_ref(), out.is_null()) else {
            return fail(IpsStatus::NullPointer, "null argument");
        };
        let points = curve.analysis.curve.points();
        let Some(p) = points.get(index) else {
            return fail(
                IpsStatus::InvalidArgument,
                format!("index {index} out of range for {} points", points.len()),
            );
        };
        *out = IpsCurvePoint {
            delta: p.delta,
            estimate: p.estimate,
            std_error: p.std_error,
            pointwise_lo: p.pointwise_lo,
            pointwise_hi: p.pointwise_hi,
            band_lo: p.band_lo.unwrap_or(f64::NAN),
            band_hi: p.band_hi.unwrap_or(f64::NAN),
        };
        IpsStatus::Ok
    })
}

/// The curve as a JSON string. Release it with [`ips_string_free`].
///
/// # Safety
/// `curve` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ips_curve_to_json(curve: *const IpsCurve, out: *mut *mut c_char) -> IpsStatus {
    guarded(|| {
        let (Some(curve), false) = (curve.as_ref(), out.is_null()) else {
            return fail(IpsStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        match serde_json::to_string(&curve.analysis.curve) {
            Ok(s) => {
                *out = CString::new(s).expect("json has no NUL").into_raw();
                IpsStatus::Ok
            }
            Err(e) => fail(IpsStatus::Io, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ips_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn to_c(r: &ContrastResult) -> IpsContrast {
    let (difference, difference_lo, difference_hi) = r
        .difference
        .as_ref()
        .map_or((f64::NAN, f64::NAN, f64::NAN), |d| (d.estimate, d.interval.lo, d.interval.hi));
    IpsContrast {
        delta_lo: r.delta_lo,
        delta_hi: r.delta_hi,
        interval_lo_lo: r.interval_lo.lo,
        interval_lo_hi: r.interval_lo.hi,
        interval_hi_lo: r.interval_hi.lo,
        interval_hi_hi: r.interval_hi.hi,
        difference,
        difference_lo,
        difference_hi,
        overlap: r.overlap,
        reject: r.decision == Decision::Reject,
    }
}

/// Overlap test between two grid points, on the uniform band (`use_uniform`) or
/// the pointwise intervals. Off-grid δ values fail with the nearest grid point in
/// the error message.
///
/// # Safety
/// `curve` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ips_contrast_overlap(
    curve: *const IpsCurve,
    delta_lo: f64,
    delta_hi: f64,
    use_uniform: bool,
    out: *mut IpsContrast,
) -> IpsStatus {
    guarded(|| {
        let (Some(curve), false) = (curve.as_ref(), out.is_null()) else {
            return fail(IpsStatus::NullPointer, "null argument");
        };
        let kind = if use_uniform {
            IntervalKind::Uniform
        } else {
            IntervalKind::Pointwise
        };
        match contrast_overlap_test(&curve.analysis.curve, delta_lo, delta_hi, kind) {
            Ok(r) => {
                *out = to_c(&r);
                IpsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Wald test of `ψ(δ_hi) − ψ(δ_lo) = 0` from per-unit influence differences.
///
/// # Safety
/// `curve` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ips_contrast_difference(
    curve: *const IpsCurve,
    delta_lo: f64,
    delta_hi: f64,
    out: *mut IpsContrast,
) -> IpsStatus {
    guarded(|| {
        let (Some(curve), false) = (curve.as_ref(), out.is_null()) else {
            return fail(IpsStatus::NullPointer, "null argument");
        };
        let alpha = curve.analysis.curve.alpha();
        match contrast_difference(&curve.analysis.influence, delta_lo, delta_hi, alpha) {
            Ok(r) => {
                *out = to_c(&r);
                IpsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
