//! The C interface, driven from Rust and from a C program linked against
//! the static library.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sifo_ffi::*;

const LATTICE: &str = "level low high\nflow low -> high\n";
const CARD: &str = "class Card { low imm int number; high imm int pin;\n  low mut method low imm void setNumber(low imm int x); }\n";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { sifo_string_free(p) };
    s
}

fn last_error() -> String {
    take(sifo_last_error_message())
}

fn program(source: &str) -> Result<*mut SifoProgram, (SifoStatus, String)> {
    let mut out = ptr::null_mut();
    let status = unsafe { sifo_program_new(c(LATTICE).as_ptr(), c(source).as_ptr(), &mut out) };
    if status == SifoStatus::Ok {
        Ok(out)
    } else {
        Err((status, last_error()))
    }
}

fn start(p: *const SifoProgram) -> *mut SifoSession {
    let mut s = ptr::null_mut();
    let status = unsafe { sifo_session_start(p, c("Card").as_ptr(), c("setNumber").as_ptr(), false, &mut s) };
    assert_eq!(status, SifoStatus::Ok);
    s
}

fn apply(s: *mut SifoSession, step: &str) -> SifoStatus {
    unsafe { sifo_session_apply(s, c(step).as_ptr()) }
}

#[test]
fn setter_session_through_the_c_interface() {
    let p = program(CARD).unwrap();
    assert_eq!(unsafe { sifo_program_check(p, ptr::null_mut()) }, SifoStatus::Ok);
    let s = start(p);
    unsafe { sifo_program_free(p) };
    assert_eq!(unsafe { sifo_session_hole_count(s) }, 1);

    assert_eq!(apply(s, "Variable @ eA x"), SifoStatus::Rejected);
    assert!(last_error().contains("Variable"));
    assert_eq!(apply(s, "not a step"), SifoStatus::InvalidArgument);

    for step in ["FieldAssignment @ eA low mut Card number", "Variable @ eA1 this", "Variable @ eA2 x"] {
        assert_eq!(apply(s, step), SifoStatus::Ok, "{step}: {}", last_error());
    }
    assert!(unsafe { sifo_session_is_complete(s) });
    assert_eq!(unsafe { sifo_session_verify(s) }, SifoStatus::Ok);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { sifo_session_export(s, &mut text) }, SifoStatus::Ok);
    assert!(take(text).contains("this.number = x;"));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sifo_session_view_json(s, &mut json) }, SifoStatus::Ok);
    let view: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!((view["status"].as_str(), view["revision"].as_u64()), (Some("complete"), Some(3)));

    assert_eq!(unsafe { sifo_session_undo(s) }, SifoStatus::Ok);
    assert_eq!(unsafe { sifo_session_hole_count(s) }, 1);
    assert_eq!(unsafe { sifo_session_export(s, &mut text) }, SifoStatus::Rejected);
    assert_eq!(unsafe { sifo_session_verify(s) }, SifoStatus::Rejected);
    unsafe { sifo_session_free(s) };
}

#[test]
fn rejected_programs_report_diagnostics() {
    let (status, msg) = program("class {").unwrap_err();
    assert_eq!(status, SifoStatus::Rejected);
    assert!(msg.contains("source.sifo:1:"), "{msg}");

    let leak = "class Leak { low imm int out; high imm int secret;\n  low mut method low imm void go() { this.out = this.secret; } }";
    let p = program(leak).unwrap();
    let mut diags = ptr::null_mut();
    assert_eq!(unsafe { sifo_program_check(p, &mut diags) }, SifoStatus::Rejected);
    assert!(take(diags).contains("FlowViolation"));
    let mut s = ptr::null_mut();
    let status = unsafe { sifo_session_start(p, c("Leak").as_ptr(), c("nothing").as_ptr(), false, &mut s) };
    assert_eq!(status, SifoStatus::NotFound);
    assert!(s.is_null());
    unsafe { sifo_program_free(p) };
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { sifo_program_new(ptr::null(), c(CARD).as_ptr(), &mut out) },
        SifoStatus::InvalidArgument
    );
    assert!(last_error().contains("lattice is null"));
    assert_eq!(
        unsafe { sifo_program_new(c(LATTICE).as_ptr(), c(CARD).as_ptr(), ptr::null_mut()) },
        SifoStatus::InvalidArgument
    );
    assert_eq!(apply(ptr::null_mut(), "Variable @ eA x"), SifoStatus::InvalidArgument);
    assert_eq!(unsafe { sifo_session_hole_count(ptr::null()) }, 0);
    assert!(!unsafe { sifo_session_is_complete(ptr::null()) });
    unsafe {
        sifo_session_free(ptr::null_mut());
        sifo_program_free(ptr::null_mut());
        sifo_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(sifo_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header_dir().join("sifo.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from sifo.h");
    }
    assert!(header.contains("typedef struct SifoSession SifoSession;"));
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libsifo_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let out_dir = tempfile_dir();
    let exe = out_dir.join("smoke");
    let status = Command::new("cc")
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c"))
        .arg("-I")
        .arg(header_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("this.number = x;"));
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sifo-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
