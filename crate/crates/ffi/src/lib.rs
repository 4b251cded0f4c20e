//! C interface to the cslw engine.
//!
//! Models are opaque handles created by one of the `cslw_model_*` loaders
//! and released with [`cslw_model_free`]. Every fallible call returns a
//! [`CslwStatus`]; on failure [`cslw_last_error`] describes the error for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cslw_core::cli::{load_model, run_method, CliError, LoadedModel, Method};
use cslw_core::parser::{parse_bif, parse_dcp, serialize_dcp};
use libc::c_char;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CslwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    Unsupported = 5,
    NoEffectiveSamples = 6,
    Failed = 7,
    Panic = 8,
}

/// Opaque model handle.
pub struct CslwModel {
    inner: LoadedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &CliError) -> CslwStatus {
    match e {
        CliError::Parse { .. } | CliError::Spec(_) => CslwStatus::Parse,
        CliError::Io { .. } => CslwStatus::Io,
        CliError::Unsupported { .. } => CslwStatus::Unsupported,
        CliError::NoEffectiveSamples => CslwStatus::NoEffectiveSamples,
        _ => CslwStatus::Failed,
    }
}

struct Fail(CslwStatus, String);

impl From<CliError> for Fail {
    fn from(e: CliError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CslwStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CslwStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CslwStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid nul-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail(CslwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail(CslwStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn store(out: *mut *mut CslwModel, model: LoadedModel) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(CslwStatus::NullPointer, "output handle is null".into()));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(CslwModel { inner: model })) };
    Ok(())
}

/// Load a model file; `.bif` is read as a network, anything else as DCP.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_load(path: *const c_char, out: *mut *mut CslwModel) -> CslwStatus {
    guard(|| {
        let path = text(path, "path")?;
        store(out, load_model(Path::new(path))?)
    })
}

/// Parse DCP rule text.
///
/// # Safety
/// `source` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_from_dcp(source: *const c_char, out: *mut *mut CslwModel) -> CslwStatus {
    guard(|| {
        let source = text(source, "source")?;
        let program = parse_dcp(source).map_err(|e| Fail(CslwStatus::Parse, e.to_string()))?;
        store(out, LoadedModel::from_program("dcp", program))
    })
}

/// Parse BIF network text.
///
/// # Safety
/// `source` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_from_bif(source: *const c_char, out: *mut *mut CslwModel) -> CslwStatus {
    guard(|| {
        let source = text(source, "source")?;
        let net = parse_bif(source).map_err(|e| Fail(CslwStatus::Parse, e.to_string()))?;
        store(out, LoadedModel::from_network("bif", net))
    })
}

/// # Safety
/// `model` must be null or a handle from a loader, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_free(model: *mut CslwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of variables, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_variable_count(model: *const CslwModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.program.len())
}

/// Number of rules of the model's program (the tree program for BIF).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_rule_count(model: *const CslwModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.program.rules().len())
}

/// The model's program as DCP text. Free with [`cslw_string_free`].
/// Returns null for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cslw_model_to_dcp(model: *const CslwModel) -> *mut c_char {
    match model.as_ref() {
        Some(m) => CString::new(serialize_dcp(&m.inner.program)).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// P(query | evidence) with `method` (`lw-full`, `lw`, `cslw`, `exact-enum`,
/// `exact-ve` or `exact-ctx`). `evidence` may be null for none. Sampling
/// methods draw `samples` samples from `seed`.
///
/// # Safety
/// `model` must be a live handle, the strings nul-terminated, and `out` a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cslw_infer(
    model: *const CslwModel,
    method: *const c_char,
    query: *const c_char,
    evidence: *const c_char,
    samples: u64,
    seed: u64,
    out: *mut f64,
) -> CslwStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| Fail(CslwStatus::NullPointer, "model is null".into()))?;
        let method: Method = text(method, "method")?.parse().map_err(|e: String| Fail(CslwStatus::Unsupported, e))?;
        let query = text(query, "query")?;
        let evidence = if evidence.is_null() { "" } else { text(evidence, "evidence")? };
        if out.is_null() {
            return Err(Fail(CslwStatus::NullPointer, "output is null".into()));
        }
        let outcome = run_method(&model.inner, method, query, evidence, samples as usize, seed)?;
        *out = outcome.value;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cslw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
