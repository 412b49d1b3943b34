//! C ABI over the `iecsi` analysis toolkit.
//!
//! Every function returns an [`IecsiStatus`]. On failure a message is kept
//! per thread and can be read with [`iecsi_last_error`]. Strings handed out
//! by the library must be released with [`iecsi_string_free`]; studies with
//! [`iecsi_study_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use iecsi::knowledge_gain::{classify_gain, GainDeltas};
use iecsi::model::{AnalysisConfig, NeutralBand, ReferenceStats, Sentiment, Study};
use iecsi::stats::{self, StatTestResult};
use iecsi::{qualitative, storage, Error, ReportFormat};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IecsiStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Validation = 5,
    Io = 6,
    GateFailed = 7,
    Undefined = 8,
    InsufficientData = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IecsiSentiment {
    Negative = -1,
    Neutral = 0,
    Positive = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IecsiFormat {
    Structured = 0,
    Markdown = 1,
}

/// Analysis settings. Obtain defaults from [`iecsi_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IecsiConfig {
    pub alpha: f64,
    pub kappa_threshold: f64,
    pub scale_min: i32,
    pub scale_max: i32,
    pub neutral_lower: f64,
    pub neutral_upper: f64,
    pub exact_test_cutoff: u32,
}

/// Result of a significance test. `df` and `effect_size` are NaN when not
/// applicable.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IecsiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: f64,
    pub effect_size: f64,
    pub significant: bool,
    pub exact: bool,
}

/// Opaque handle to a loaded study.
pub struct IecsiStudy {
    study: Study,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> IecsiStatus {
    match e {
        Error::Parse { .. } => IecsiStatus::Parse,
        Error::Validation(_) => IecsiStatus::Validation,
        Error::Io { .. } => IecsiStatus::Io,
        Error::ReAnnotationRequired { .. } => IecsiStatus::GateFailed,
        Error::KappaUndefined => IecsiStatus::Undefined,
        Error::ZeroVariance(_)
        | Error::NoNonzeroPairs
        | Error::NoSessions
        | Error::EmptySubscale { .. }
        | Error::MissingRatings(_) => IecsiStatus::InsufficientData,
        _ => IecsiStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (IecsiStatus, String)>) -> IecsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IecsiStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IecsiStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (IecsiStatus, String)>;

fn lib_err(e: Error) -> (IecsiStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (IecsiStatus, String) {
    (IecsiStatus::NullArgument, format!("{name} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (IecsiStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

/// Nulls an output pointer up front so it never holds a stale value on error.
unsafe fn clear_out<T>(out: *mut *mut T) -> FfiResult<()> {
    write_out(out, ptr::null_mut(), "out")
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul removed")
        .into_raw()
}

unsafe fn config_from(cfg: *const IecsiConfig) -> FfiResult<AnalysisConfig> {
    if cfg.is_null() {
        return Ok(AnalysisConfig::default());
    }
    let c = &*cfg;
    let config = AnalysisConfig {
        alpha: c.alpha,
        kappa_threshold: c.kappa_threshold,
        scale_min: c.scale_min,
        scale_max: c.scale_max,
        neutral_band: NeutralBand {
            lower: c.neutral_lower,
            upper: c.neutral_upper,
        },
        exact_test_cutoff: c.exact_test_cutoff as usize,
        waive_kappa_gate: false,
    };
    match config.problems().first() {
        Some(p) => Err((IecsiStatus::InvalidArgument, p.clone())),
        None => Ok(config),
    }
}

fn test_result(r: &StatTestResult) -> IecsiTestResult {
    IecsiTestResult {
        statistic: r.statistic,
        p_value: r.p_value,
        df: r.df.unwrap_or(f64::NAN),
        effect_size: r.effect_size.map_or(f64::NAN, |e| e.value),
        significant: r.significant,
        exact: r.method_note.starts_with("exact"),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iecsi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn iecsi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn iecsi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the default analysis configuration into `out`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_config_default(out: *mut IecsiConfig) -> IecsiStatus {
    guard(|| {
        let d = AnalysisConfig::default();
        write_out(
            out,
            IecsiConfig {
                alpha: d.alpha,
                kappa_threshold: d.kappa_threshold,
                scale_min: d.scale_min,
                scale_max: d.scale_max,
                neutral_lower: d.neutral_band.lower,
                neutral_upper: d.neutral_band.upper,
                exact_test_cutoff: d.exact_test_cutoff as u32,
            },
            "out",
        )
    })
}

/// Reads the study bundle in directory `dir`. Cross-record invariants are
/// checked by [`iecsi_study_validate`] and again before analysis.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_study_load(
    dir: *const c_char,
    out: *mut *mut IecsiStudy,
) -> IecsiStatus {
    guard(|| {
        clear_out(out)?;
        let dir = c_str(dir, "dir")?;
        let study = storage::read_bundle(Path::new(dir)).map_err(lib_err)?;
        out.write(Box::into_raw(Box::new(IecsiStudy { study })));
        Ok(())
    })
}

/// Releases a study handle. NULL is ignored.
///
/// # Safety
/// `study` must come from [`iecsi_study_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn iecsi_study_free(study: *mut IecsiStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}

/// Number of sessions in the study.
///
/// # Safety
/// `study` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_study_session_count(
    study: *const IecsiStudy,
    out: *mut usize,
) -> IecsiStatus {
    guard(|| {
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        write_out(out, s.study.sessions.len(), "out")
    })
}

/// Writes the study's validation violations as a JSON document to `out`
/// (an empty `violations` list when valid). Free with [`iecsi_string_free`].
///
/// # Safety
/// `study` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_study_validate(
    study: *const IecsiStudy,
    out: *mut *mut c_char,
) -> IecsiStatus {
    guard(|| {
        clear_out(out)?;
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        let report = s.study.validate(&s.study.registry());
        write_out(out, to_c_string(storage::canonical_json(&report)), "out")
    })
}

/// Runs the full analysis and renders it. `*out` is NULL on failure. Free the result with
/// [`iecsi_string_free`].
///
/// # Safety
/// `study` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_study_analyze(
    study: *const IecsiStudy,
    format: IecsiFormat,
    out: *mut *mut c_char,
) -> IecsiStatus {
    guard(|| {
        clear_out(out)?;
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        let report = iecsi::analyze(&s.study).map_err(lib_err)?;
        let format = match format {
            IecsiFormat::Structured => ReportFormat::Structured,
            IecsiFormat::Markdown => ReportFormat::Markdown,
        };
        write_out(out, to_c_string(iecsi::render(&report, format)), "out")
    })
}

/// Sentiment of a mean under `config` (defaults when NULL).
///
/// # Safety
/// `config` must be NULL or valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_annotate_mean(
    mean: f64,
    config: *const IecsiConfig,
    out: *mut IecsiSentiment,
) -> IecsiStatus {
    guard(|| {
        let config = config_from(config)?;
        let s = match qualitative::annotate_mean(mean, &config).map_err(lib_err)? {
            Sentiment::Negative => IecsiSentiment::Negative,
            Sentiment::Neutral => IecsiSentiment::Neutral,
            Sentiment::Positive => IecsiSentiment::Positive,
        };
        write_out(out, s, "out")
    })
}

/// Unweighted Cohen's kappa between two aligned category arrays of length `n`.
///
/// # Safety
/// `a` and `b` must point to `n` readable values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_cohen_kappa(
    a: *const i32,
    b: *const i32,
    n: usize,
    out: *mut f64,
) -> IecsiStatus {
    guard(|| {
        let a = slice(a, n, "a")?;
        let b = slice(b, n, "b")?;
        write_out(out, qualitative::cohen_kappa(a, b).map_err(lib_err)?, "out")
    })
}

/// Knowledge-gain rule on post-minus-pre deltas.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_classify_gain(
    delta_dqual: f64,
    delta_dintrp: f64,
    delta_dcrit: f64,
    out: *mut bool,
) -> IecsiStatus {
    guard(|| {
        let d = GainDeltas {
            delta_dqual,
            delta_dintrp,
            delta_dcrit,
        };
        write_out(out, classify_gain(&d), "out")
    })
}

/// Paired t-test on `x - y`.
///
/// # Safety
/// `x` and `y` must point to `n` readable values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_paired_t_test(
    x: *const f64,
    y: *const f64,
    n: usize,
    alpha: f64,
    out: *mut IecsiTestResult,
) -> IecsiStatus {
    guard(|| {
        let r =
            stats::paired_t_test(slice(x, n, "x")?, slice(y, n, "y")?, alpha).map_err(lib_err)?;
        write_out(out, test_result(&r), "out")
    })
}

/// Wilcoxon signed-rank test on `x - y`.
///
/// # Safety
/// `x` and `y` must point to `n` readable values; `config` must be NULL or
/// valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_wilcoxon_signed_rank(
    x: *const f64,
    y: *const f64,
    n: usize,
    config: *const IecsiConfig,
    out: *mut IecsiTestResult,
) -> IecsiStatus {
    guard(|| {
        let config = config_from(config)?;
        let r = stats::wilcoxon_signed_rank(slice(x, n, "x")?, slice(y, n, "y")?, &config)
            .map_err(lib_err)?;
        write_out(out, test_result(&r), "out")
    })
}

/// One-sample t-test against benchmark mean `mu`.
///
/// # Safety
/// `x` must point to `n` readable values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_one_sample_t_test(
    x: *const f64,
    n: usize,
    mu: f64,
    alpha: f64,
    out: *mut IecsiTestResult,
) -> IecsiStatus {
    guard(|| {
        let r = stats::one_sample_t_test(slice(x, n, "x")?, mu, alpha).map_err(lib_err)?;
        write_out(out, test_result(&r), "out")
    })
}

/// Welch t-test of a sample against reference summary statistics.
///
/// # Safety
/// `x` must point to `n` readable values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_welch_t_test(
    x: *const f64,
    n: usize,
    ref_mean: f64,
    ref_sd: f64,
    ref_n: usize,
    alpha: f64,
    out: *mut IecsiTestResult,
) -> IecsiStatus {
    guard(|| {
        let reference = ReferenceStats {
            mean: ref_mean,
            sd: ref_sd,
            n: ref_n,
        };
        let r = stats::welch_t_test(slice(x, n, "x")?, &reference, alpha).map_err(lib_err)?;
        write_out(out, test_result(&r), "out")
    })
}

/// Mann-Whitney U test of `x` against `y`.
///
/// # Safety
/// `x` and `y` must point to `nx` and `ny` readable values; `config` must be
/// NULL or valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iecsi_mann_whitney_u(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    config: *const IecsiConfig,
    out: *mut IecsiTestResult,
) -> IecsiStatus {
    guard(|| {
        let config = config_from(config)?;
        let r = stats::mann_whitney_u(slice(x, nx, "x")?, slice(y, ny, "y")?, &config)
            .map_err(lib_err)?;
        write_out(out, test_result(&r), "out")
    })
}
