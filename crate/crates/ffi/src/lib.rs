//! C ABI over the query engine.
//!
//! Every function returns a [`ParlragStatus`]. Results are JSON strings
//! written to an out-pointer and owned by the caller, who releases them with
//! [`parlrag_string_free`]. On failure [`parlrag_last_error`] returns the
//! error as JSON (`{"code", "message", "http_status"}`), the same body the
//! HTTP service sends.
//!
//! A [`ParlragEngine`] is immutable after opening and may be shared between
//! threads; calls on it block the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde::Serialize;

use parlrag::feedback::FeedbackLog;
use parlrag::service::{open_data_dir, ApiError, FeedbackRequest, Health, QueryRequest, Suggestions};
use parlrag::store::integrity_check;
use parlrag::{Config, QueryEngine};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParlragStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed or semantically invalid request (HTTP 400 equivalent).
    InvalidRequest = 3,
    /// Unknown chunk or missing enrichment (HTTP 404 equivalent).
    NotFound = 4,
    /// The generation or embedding backend failed (HTTP 502 equivalent).
    Backend = 5,
    /// Store, index or configuration problem (HTTP 500 equivalent).
    Internal = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Opaque engine handle.
pub struct ParlragEngine {
    runtime: tokio::runtime::Runtime,
    engine: QueryEngine,
    feedback: FeedbackLog,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn error(code: &str, http_status: u16, message: impl Into<String>) -> ApiError {
    ApiError {
        code: code.into(),
        message: message.into(),
        http_status,
    }
}

fn status_of(err: &ApiError) -> ParlragStatus {
    match (err.code.as_str(), err.http_status) {
        ("null_argument", _) => ParlragStatus::NullArgument,
        ("invalid_utf8", _) => ParlragStatus::InvalidUtf8,
        ("panic", _) => ParlragStatus::Panic,
        (_, 400) => ParlragStatus::InvalidRequest,
        (_, 404) => ParlragStatus::NotFound,
        (_, 502) => ParlragStatus::Backend,
        _ => ParlragStatus::Internal,
    }
}

fn set_last_error(err: Option<&ApiError>) {
    let value = err.map(|e| CString::new(serde_json::to_string(e).expect("error serializes")).expect("JSON has no NUL"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = value);
}

fn guard(f: impl FnOnce() -> Result<(), ApiError>) -> ParlragStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(error("panic", 500, message))
    });
    match outcome {
        Ok(()) => {
            set_last_error(None);
            ParlragStatus::Ok
        }
        Err(e) => {
            set_last_error(Some(&e));
            status_of(&e)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ApiError> {
    if p.is_null() {
        return Err(error("null_argument", 400, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| error("invalid_utf8", 400, format!("{name}: {e}")))
}

unsafe fn engine_arg<'a>(p: *const ParlragEngine) -> Result<&'a ParlragEngine, ApiError> {
    p.as_ref().ok_or_else(|| error("null_argument", 400, "engine is NULL"))
}

fn out_arg(out: *mut *mut c_char) -> Result<(), ApiError> {
    if out.is_null() {
        Err(error("null_argument", 400, "out_json is NULL"))
    } else {
        Ok(())
    }
}

unsafe fn write_json(out: *mut *mut c_char, value: &impl Serialize) -> Result<(), ApiError> {
    let json = serde_json::to_string(value).map_err(|e| error("internal", 500, e.to_string()))?;
    *out = CString::new(json).expect("JSON has no NUL").into_raw();
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(json: &str) -> Result<T, ApiError> {
    serde_json::from_str(json).map_err(|e| error("invalid_request", 400, e.to_string()))
}

/// Opens a built data directory. `config_path` may be NULL for the offline
/// defaults.
///
/// # Safety
/// `data_dir` must be a NUL-terminated string, `config_path` NULL or a
/// NUL-terminated string, and `out_engine` a valid pointer. On success
/// `*out_engine` receives a handle to release with [`parlrag_engine_free`].
#[no_mangle]
pub unsafe extern "C" fn parlrag_engine_open(
    data_dir: *const c_char,
    config_path: *const c_char,
    out_engine: *mut *mut ParlragEngine,
) -> ParlragStatus {
    guard(|| {
        if out_engine.is_null() {
            return Err(error("null_argument", 400, "out_engine is NULL"));
        }
        *out_engine = ptr::null_mut();
        let data_dir = str_arg(data_dir, "data_dir")?;
        let config = if config_path.is_null() {
            Config::default()
        } else {
            let path = str_arg(config_path, "config_path")?;
            Config::load(Path::new(path)).map_err(|e| error("invalid_config", 500, e.to_string()))?
        };
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| error("internal", 500, e.to_string()))?;
        // Backends built here may need a runtime context (HTTP clients).
        let (engine, feedback) = {
            let _enter = runtime.enter();
            open_data_dir(Path::new(data_dir), &config).map_err(|e| error("not_initialized", 500, e.to_string()))?
        };
        *out_engine = Box::into_raw(Box::new(ParlragEngine {
            runtime,
            engine,
            feedback,
        }));
        Ok(())
    })
}

/// # Safety
/// `engine` must be NULL or a handle from [`parlrag_engine_open`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn parlrag_engine_free(engine: *mut ParlragEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Stage one. `request_json` has the shape of the `/api/query` body:
/// `{"query": str, "k"?: int, "filter"?: {...}}`.
///
/// # Safety
/// Pointers must be valid; `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn parlrag_query(
    engine: *const ParlragEngine,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let e = engine_arg(engine)?;
        let req: QueryRequest = parse(str_arg(request_json, "request_json")?)?;
        let filter = req.filter.unwrap_or_default();
        let result = e.runtime.block_on(e.engine.ask(&req.query, req.k, &filter))?;
        write_json(out_json, &result)
    })
}

/// Stage two: a generated answer grounded in `chunk_id`.
///
/// # Safety
/// Pointers must be valid; `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn parlrag_respond(
    engine: *const ParlragEngine,
    chunk_id: *const c_char,
    query: *const c_char,
    out_json: *mut *mut c_char,
) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let e = engine_arg(engine)?;
        let chunk_id = str_arg(chunk_id, "chunk_id")?;
        let query = str_arg(query, "query")?;
        let result = e.runtime.block_on(e.engine.respond(query, chunk_id))?;
        write_json(out_json, &result)
    })
}

/// The chunk with its full turn and document.
///
/// # Safety
/// Pointers must be valid; `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn parlrag_source(
    engine: *const ParlragEngine,
    chunk_id: *const c_char,
    out_json: *mut *mut c_char,
) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let e = engine_arg(engine)?;
        let bundle = e.engine.get_source(str_arg(chunk_id, "chunk_id")?)?;
        write_json(out_json, &bundle)
    })
}

/// Records feedback. `request_json` has the shape of the `/api/feedback`
/// body; the stored event is written to `out_json`.
///
/// # Safety
/// Pointers must be valid; `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn parlrag_feedback(
    engine: *const ParlragEngine,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let e = engine_arg(engine)?;
        let req: FeedbackRequest = parse(str_arg(request_json, "request_json")?)?;
        let event = e.feedback.record(&req.query, &req.chunk_id, req.stage, req.rating)?;
        write_json(out_json, &event)
    })
}

/// # Safety
/// Pointers must be valid; `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn parlrag_suggestions(engine: *const ParlragEngine, out_json: *mut *mut c_char) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let e = engine_arg(engine)?;
        write_json(
            out_json,
            &Suggestions {
                suggestions: e.engine.suggestions().to_vec(),
            },
        )
    })
}

/// # Safety
/// Pointers must be valid; `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn parlrag_health(engine: *const ParlragEngine, out_json: *mut *mut c_char) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let e = engine_arg(engine)?;
        write_json(out_json, &Health::of(&e.engine))
    })
}

/// Integrity report for a data directory. Returns OK whenever a report was
/// produced; inspect its `ok` field.
///
/// # Safety
/// `data_dir` must be a NUL-terminated string and `out_json` valid.
#[no_mangle]
pub unsafe extern "C" fn parlrag_integrity_check(data_dir: *const c_char, out_json: *mut *mut c_char) -> ParlragStatus {
    guard(|| {
        out_arg(out_json)?;
        let report = integrity_check(Path::new(str_arg(data_dir, "data_dir")?));
        write_json(out_json, &report)
    })
}

/// Releases a string returned through an out-pointer.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn parlrag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The last error on this thread as JSON, or NULL after a successful call.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn parlrag_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn parlrag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statuses_follow_http_classes() {
        assert_eq!(status_of(&error("empty_query", 400, "")), ParlragStatus::InvalidRequest);
        assert_eq!(status_of(&error("unknown_chunk", 404, "")), ParlragStatus::NotFound);
        assert_eq!(status_of(&error("backend_unavailable", 502, "")), ParlragStatus::Backend);
        assert_eq!(status_of(&error("empty_index", 500, "")), ParlragStatus::Internal);
        assert_eq!(status_of(&error("null_argument", 400, "")), ParlragStatus::NullArgument);
        assert_eq!(status_of(&error("invalid_utf8", 400, "")), ParlragStatus::InvalidUtf8);
    }

    #[test]
    fn panics_are_caught() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, ParlragStatus::Panic);
        let last = unsafe { CStr::from_ptr(parlrag_last_error()) }.to_str().unwrap();
        assert!(last.contains("boom"));
        assert_eq!(guard(|| Ok(())), ParlragStatus::Ok);
        assert!(parlrag_last_error().is_null());
    }
}
