//! C ABI over the oscilab core. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `*_free`; every call returns an [`OscilabStatus`], and the message of
//! the most recent failure on the calling thread is available from [`oscilab_last_error`].

use oscilab::cli::{replay, run_experiment, CliError, ExperimentConfig, ResultRecord};
use oscilab::exponents::threshold_p;
use oscilab::kakeya_lab::{curved_family_from_phase, union_volume_family, TubeFamily};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscilabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Precondition = 4,
    Io = 5,
    ReplayMismatch = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed and canonicalized experiment config.
pub struct OscilabConfig(ExperimentConfig);

/// Record of a finished run.
pub struct OscilabResult(ResultRecord);

/// Tube family held for repeated raster queries.
pub struct OscilabTubeFamily(TubeFamily);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: OscilabStatus, msg: impl Into<String>) -> OscilabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn from_cli(e: CliError) -> OscilabStatus {
    let s = match e {
        CliError::Config(_) => OscilabStatus::Config,
        CliError::Precondition(_) => OscilabStatus::Precondition,
        CliError::Io(_) => OscilabStatus::Io,
        CliError::Mismatch(_) => OscilabStatus::ReplayMismatch,
    };
    fail(s, e.to_string())
}

fn guard(f: impl FnOnce() -> OscilabStatus) -> OscilabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(OscilabStatus::Panic, "panic inside oscilab"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, OscilabStatus> {
    if p.is_null() {
        return Err(fail(OscilabStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(OscilabStatus::InvalidUtf8, "argument is not UTF-8"))
}

/// Copies `s` with a trailing NUL into `buf`; `needed` receives the full size including the NUL.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> OscilabStatus {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || len < n {
        return fail(OscilabStatus::BufferTooSmall, format!("need {n} bytes"));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    OscilabStatus::Ok
}

/// Message of the last failed call on this thread.
///
/// # Safety
/// `buf` must be writable for `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn oscilab_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> OscilabStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    write_str(&msg, buf, len, needed)
}

/// Exact threshold exponent for dimension `n` as numerator and denominator.
///
/// # Safety
/// `num` and `den` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_threshold(n: u32, num: *mut i64, den: *mut i64) -> OscilabStatus {
    if num.is_null() || den.is_null() {
        return fail(OscilabStatus::NullPointer, "null output");
    }
    guard(|| match threshold_p(n) {
        Ok(t) => {
            *num = *t.numer() as i64;
            *den = *t.denom() as i64;
            OscilabStatus::Ok
        }
        Err(e) => fail(OscilabStatus::Precondition, e.to_string()),
    })
}

/// Parses a JSON experiment config.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_config_from_json(json: *const c_char, out: *mut *mut OscilabConfig) -> OscilabStatus {
    if out.is_null() {
        return fail(OscilabStatus::NullPointer, "null output");
    }
    let text = match str_arg(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    guard(|| {
        let cfg: ExperimentConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(OscilabStatus::Config, e.to_string()),
        };
        match cfg.canonical() {
            Ok(c) => {
                *out = Box::into_raw(Box::new(OscilabConfig(c)));
                OscilabStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}

/// Hex sha256 of the canonical config (64 characters plus NUL).
///
/// # Safety
/// `cfg` must come from `oscilab_config_from_json`; `buf` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_config_hash(cfg: *const OscilabConfig, buf: *mut c_char, len: usize, needed: *mut usize) -> OscilabStatus {
    let Some(cfg) = cfg.as_ref() else {
        return fail(OscilabStatus::NullPointer, "null config");
    };
    match cfg.0.hash() {
        Ok(h) => write_str(&h, buf, len, needed),
        Err(e) => from_cli(e),
    }
}

/// # Safety
/// `cfg` must come from `oscilab_config_from_json` and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn oscilab_config_free(cfg: *mut OscilabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the experiment into `out_dir`; `threads` = 0 uses the global pool.
///
/// # Safety
/// `cfg` must be a live config handle, `out_dir` a NUL-terminated path, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_run(
    cfg: *const OscilabConfig,
    out_dir: *const c_char,
    threads: usize,
    out: *mut *mut OscilabResult,
) -> OscilabStatus {
    let Some(cfg) = cfg.as_ref() else {
        return fail(OscilabStatus::NullPointer, "null config");
    };
    if out.is_null() {
        return fail(OscilabStatus::NullPointer, "null output");
    }
    let dir = match str_arg(out_dir) {
        Ok(d) => d,
        Err(s) => return s,
    };
    guard(|| match run_experiment(&cfg.0, Path::new(dir), (threads > 0).then_some(threads)) {
        Ok(r) => {
            *out = Box::into_raw(Box::new(OscilabResult(r)));
            OscilabStatus::Ok
        }
        Err(e) => from_cli(e),
    })
}

/// 1 when every gate passed, 0 otherwise, −1 for a null handle.
///
/// # Safety
/// `res` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn oscilab_result_passed(res: *const OscilabResult) -> i32 {
    res.as_ref().map_or(-1, |r| r.0.passed() as i32)
}

/// Number of CSV data rows, or 0 for a null handle.
///
/// # Safety
/// `res` must be a live result handle or null.
#[no_mangle]
pub unsafe extern "C" fn oscilab_result_rows(res: *const OscilabResult) -> usize {
    res.as_ref().map_or(0, |r| r.0.rows)
}

/// The full result record as JSON.
///
/// # Safety
/// `res` must be a live result handle; `buf` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_result_json(res: *const OscilabResult, buf: *mut c_char, len: usize, needed: *mut usize) -> OscilabStatus {
    let Some(res) = res.as_ref() else {
        return fail(OscilabStatus::NullPointer, "null result");
    };
    match serde_json::to_string(&res.0) {
        Ok(s) => write_str(&s, buf, len, needed),
        Err(e) => fail(OscilabStatus::Io, e.to_string()),
    }
}

/// # Safety
/// `res` must come from `oscilab_run` and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn oscilab_result_free(res: *mut OscilabResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Re-runs a result record; `identical` receives 1 when the CSV bytes match.
///
/// # Safety
/// `record_path` must be a NUL-terminated path and `identical` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_replay(record_path: *const c_char, threads: usize, identical: *mut i32) -> OscilabStatus {
    if identical.is_null() {
        return fail(OscilabStatus::NullPointer, "null output");
    }
    let path = match str_arg(record_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guard(|| match replay(Path::new(path), (threads > 0).then_some(threads)) {
        Ok(r) => {
            *identical = r.identical as i32;
            OscilabStatus::Ok
        }
        Err(e) => from_cli(e),
    })
}

/// Curved tubes of width `delta` along the cores of the twisted phase; `shifted` selects the
/// family lying in x2 = x1x3.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_tube_family_curved(delta: f64, shifted: bool, out: *mut *mut OscilabTubeFamily) -> OscilabStatus {
    if out.is_null() {
        return fail(OscilabStatus::NullPointer, "null output");
    }
    guard(|| match curved_family_from_phase(delta, shifted) {
        Ok(f) => {
            *out = Box::into_raw(Box::new(OscilabTubeFamily(f)));
            OscilabStatus::Ok
        }
        Err(e) => fail(OscilabStatus::Precondition, e.to_string()),
    })
}

/// # Safety
/// `fam` must be a live family handle or null.
#[no_mangle]
pub unsafe extern "C" fn oscilab_tube_family_len(fam: *const OscilabTubeFamily) -> usize {
    fam.as_ref().map_or(0, |f| f.0.len())
}

/// Volume of the union of the tubes on a lattice of the given spacing.
///
/// # Safety
/// `fam` must be a live family handle and `volume` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn oscilab_tube_family_union_volume(fam: *const OscilabTubeFamily, spacing: f64, volume: *mut f64) -> OscilabStatus {
    let Some(fam) = fam.as_ref() else {
        return fail(OscilabStatus::NullPointer, "null family");
    };
    if volume.is_null() {
        return fail(OscilabStatus::NullPointer, "null output");
    }
    guard(|| match union_volume_family(&fam.0, spacing) {
        Ok(v) => {
            *volume = v;
            OscilabStatus::Ok
        }
        Err(e) => fail(OscilabStatus::Precondition, e.to_string()),
    })
}

/// # Safety
/// `fam` must come from `oscilab_tube_family_curved` and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn oscilab_tube_family_free(fam: *mut OscilabTubeFamily) {
    if !fam.is_null() {
        drop(Box::from_raw(fam));
    }
}
