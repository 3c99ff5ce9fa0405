//! C interface to the checker and the refinement engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Strings returned through `out` parameters are
//! owned by the caller and released with [`sifo_string_free`]. Every function
//! returns a [`SifoStatus`]; on failure [`sifo_last_error_message`] describes
//! the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sifo::program::{self, Program, SourceFile};
use sifo::refiner::{RefinementStep, Session, SessionOptions, SoundnessError};
use sifo::service::protocol::SessionView;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SifoStatus {
    Ok = 0,
    /// The program or step was rejected by the type system.
    Rejected = 1,
    /// A null pointer, invalid UTF-8 or malformed text was passed.
    InvalidArgument = 2,
    /// The class or method does not exist.
    NotFound = 3,
    /// The soundness oracle failed on a completed session.
    Unsound = 4,
    /// The library panicked; the handle involved should be freed.
    Internal = 5,
}

/// A lattice and class table.
pub struct SifoProgram {
    program: Program,
}

/// A refinement session on one method.
pub struct SifoSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: SifoStatus, message: impl Into<String>) -> SifoStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> SifoStatus) -> SifoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SifoStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, SifoStatus> {
    if p.is_null() {
        return Err(fail(SifoStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SifoStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> SifoStatus {
    if out.is_null() {
        return fail(SifoStatus::InvalidArgument, "output pointer is null");
    }
    *out = CString::new(s.replace('\0', " ")).expect("NUL removed").into_raw();
    SifoStatus::Ok
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Returns a copy of the last error message on this thread, or null if
/// there was none. Release it with [`sifo_string_free`].
#[no_mangle]
pub extern "C" fn sifo_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sifo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a lattice description and one source text into a program. Parse
/// and class-table errors yield `Rejected` with the diagnostics in the error
/// message.
///
/// # Safety
/// `lattice` and `source` must be NUL-terminated strings; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sifo_program_new(
    lattice: *const c_char,
    source: *const c_char,
    out: *mut *mut SifoProgram,
) -> SifoStatus {
    guard(|| {
        let lattice = try_ffi!(text(lattice, "lattice"));
        let source = try_ffi!(text(source, "source"));
        if out.is_null() {
            return fail(SifoStatus::InvalidArgument, "output pointer is null");
        }
        let lat = SourceFile::new("lattice.lat", lattice);
        match program::load(&lat, &[SourceFile::new("source.sifo", source)]) {
            Ok(program) => {
                *out = Box::into_raw(Box::new(SifoProgram { program }));
                SifoStatus::Ok
            }
            Err(ds) => fail(SifoStatus::Rejected, join(&ds)),
        }
    })
}

fn join(ds: &[program::Diagnostic]) -> String {
    ds.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

/// Type checks every method body. On `Rejected`, `diagnostics` (if not
/// null) receives one diagnostic per line.
///
/// # Safety
/// `program` must be a live handle; `diagnostics` must be null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn sifo_program_check(program: *const SifoProgram, diagnostics: *mut *mut c_char) -> SifoStatus {
    guard(|| {
        let Some(p) = program.as_ref() else {
            return fail(SifoStatus::InvalidArgument, "program is null");
        };
        let ds = program::check(&p.program);
        if ds.is_empty() {
            return SifoStatus::Ok;
        }
        let text = join(&ds);
        if !diagnostics.is_null() {
            put_string(diagnostics, text.clone());
        }
        fail(SifoStatus::Rejected, text)
    })
}

/// # Safety
/// `program` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sifo_program_free(program: *mut SifoProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Opens a refinement session on `class_name.method`. The session keeps
/// its own reference to the program, which may be freed independently.
///
/// # Safety
/// `program` must be a live handle, the names NUL-terminated strings and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_start(
    program: *const SifoProgram,
    class_name: *const c_char,
    method: *const c_char,
    allow_declassify: bool,
    out: *mut *mut SifoSession,
) -> SifoStatus {
    guard(|| {
        let Some(p) = program.as_ref() else {
            return fail(SifoStatus::InvalidArgument, "program is null");
        };
        let class = try_ffi!(text(class_name, "class name"));
        let method = try_ffi!(text(method, "method name"));
        if out.is_null() {
            return fail(SifoStatus::InvalidArgument, "output pointer is null");
        }
        let options = SessionOptions {
            allow_declassify,
            ..Default::default()
        };
        match Session::start(p.program.table.clone(), p.program.lattice.clone(), class, method, options) {
            Ok(session) => {
                *out = Box::into_raw(Box::new(SifoSession { session }));
                SifoStatus::Ok
            }
            Err(e) => fail(SifoStatus::NotFound, e.to_string()),
        }
    })
}

unsafe fn session_mut<'a>(s: *mut SifoSession) -> Result<&'a mut SifoSession, SifoStatus> {
    s.as_mut().ok_or_else(|| fail(SifoStatus::InvalidArgument, "session is null"))
}

unsafe fn session_ref<'a>(s: *const SifoSession) -> Result<&'a SifoSession, SifoStatus> {
    s.as_ref().ok_or_else(|| fail(SifoStatus::InvalidArgument, "session is null"))
}

/// Applies one step written as `<Rule> @ <hole> <args>`. A rejected step
/// leaves the session unchanged.
///
/// # Safety
/// `session` must be a live handle and `step` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_apply(session: *mut SifoSession, step: *const c_char) -> SifoStatus {
    guard(|| {
        let s = try_ffi!(session_mut(session));
        let step: RefinementStep = match try_ffi!(text(step, "step")).parse() {
            Ok(step) => step,
            Err(e) => return fail(SifoStatus::InvalidArgument, format!("{e}")),
        };
        match s.session.apply_in_place(&step) {
            Ok(()) => SifoStatus::Ok,
            Err(e) => fail(SifoStatus::Rejected, format!("`{step}` rejected: {e}")),
        }
    })
}

/// Reverts the most recent step. Fails with `Rejected` on a fresh session.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_undo(session: *mut SifoSession) -> SifoStatus {
    guard(|| {
        let s = try_ffi!(session_mut(session));
        match s.session.undo() {
            Ok(prev) => {
                s.session = prev;
                SifoStatus::Ok
            }
            Err(e) => fail(SifoStatus::Rejected, e.to_string()),
        }
    })
}

/// Number of open holes, or 0 for a null handle.
///
/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_hole_count(session: *const SifoSession) -> usize {
    session.as_ref().map_or(0, |s| s.session.hole_count())
}

/// # Safety
/// `session` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_is_complete(session: *const SifoSession) -> bool {
    session.as_ref().is_some_and(|s| s.session.is_complete())
}

/// The session as the JSON document served by `GET /session/{id}`, with
/// id `ffi` and the number of applied steps as revision.
///
/// # Safety
/// `session` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_view_json(session: *const SifoSession, out: *mut *mut c_char) -> SifoStatus {
    guard(|| {
        let s = try_ffi!(session_ref(session));
        let view = SessionView::new("ffi", s.session.log().len() as u64, &s.session);
        put_string(out, serde_json::to_string(&view).expect("views serialize"))
    })
}

/// Source text of the completed method. Fails with `Rejected` while holes
/// remain.
///
/// # Safety
/// `session` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_export(session: *const SifoSession, out: *mut *mut c_char) -> SifoStatus {
    guard(|| {
        let s = try_ffi!(session_ref(session));
        match s.session.export_method() {
            Ok(text) => put_string(out, text),
            Err(e) => fail(SifoStatus::Rejected, e.to_string()),
        }
    })
}

/// Re-checks the completed method with the type checker. `Unsound` means
/// the engine built a method the checker rejects.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_verify(session: *const SifoSession) -> SifoStatus {
    guard(|| {
        let s = try_ffi!(session_ref(session));
        match s.session.verify_soundness() {
            Ok(()) => SifoStatus::Ok,
            Err(SoundnessError::Incomplete(e)) => fail(SifoStatus::Rejected, e.to_string()),
            Err(e) => fail(SifoStatus::Unsound, e.to_string()),
        }
    })
}

/// # Safety
/// `session` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sifo_session_free(session: *mut SifoSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sifo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
