//! The card program and its insecure variants, checked line by line.

mod common;

use std::time::Instant;

use common::{ctx, expr, load};
use sifo::diagnostics::TypeErrorCode;
use sifo::syntax::TypingContext;
use sifo::typechecker::Checker;

fn outcome(prog: &sifo::program::Program, gamma: &TypingContext, src: &str) -> Result<(), TypeErrorCode> {
    let checker = Checker::new(&prog.table, &prog.lattice);
    checker.derive(gamma, &expr(src)).map(|_| ()).map_err(|e| e.code)
}

fn card_context() -> TypingContext {
    ctx(&[("c", "low mut Card"), ("highInt", "high imm int")])
}

/// (line, statement, expected outcome) for the field access and assignment
/// lines. Declarations get a trailing `unit` so they form a full body.
const ACCESS_LINES: &[(u32, &str, Option<TypeErrorCode>)] = &[
    (6, "high mut Balance blc = c.blc; unit", None),
    (7, "high imm int blc = c.blc.blc; unit", None),
    (8, "low imm int blc = c.blc.blc; unit", Some(TypeErrorCode::FlowViolation)),
    (9, "c.blc.blc = highInt", None),
    (10, "c.blc.blc = c.number", None),
    (11, "c.number = highInt", Some(TypeErrorCode::FlowViolation)),
];

#[test]
fn access_lines_accept_and_reject() {
    let prog = load("two_level.lat", &["card.sifo"]);
    let gamma = card_context();
    for (line, src, expected) in ACCESS_LINES {
        let got = outcome(&prog, &gamma, src).err();
        assert_eq!(got, *expected, "line {line}: {src}");
    }
}

const ALIAS_DECLS: &[(u32, &str)] = &[
    (12, "low mut Balance newBlc = new low Balance(0);"),
    (15, "low capsule Balance capsBlc = new low Balance(0);"),
    (17, "low imm Pin immPin = new low Pin(1234);"),
];

/// Prefixes `stmt` with the local declarations made before `line`.
fn in_alias_scope(line: u32, stmt: &str) -> String {
    let mut out = String::new();
    for (_, decl) in ALIAS_DECLS.iter().filter(|(l, _)| *l < line) {
        out.push_str(decl);
        out.push(' ');
    }
    out + stmt
}

const ALIAS_LINES: &[(u32, &str, Option<TypeErrorCode>)] = &[
    (12, "low mut Balance newBlc = new low Balance(0); unit", None),
    (13, "c.blc = newBlc", Some(TypeErrorCode::FlowViolation)),
    (15, "low capsule Balance capsBlc = new low Balance(0); unit", None),
    (16, "c.blc = capsBlc", None),
    (17, "low imm Pin immPin = new low Pin(1234); unit", None),
    (18, "c.pin = immPin", None),
    (19, "immPin.pin = 5678", Some(TypeErrorCode::ModifierViolation)),
];

#[test]
fn alias_lines_accept_and_reject() {
    let prog = load("two_level.lat", &["card.sifo"]);
    let gamma = card_context();
    for (line, src, expected) in ALIAS_LINES {
        let got = outcome(&prog, &gamma, &in_alias_scope(*line, src)).err();
        assert_eq!(got, *expected, "line {line}: {src}");
    }
}

#[test]
fn mutable_alias_write_accepts_only_without_the_leak() {
    let prog = load("two_level.lat", &["card.sifo"]);
    let gamma = card_context();
    let with_leak = "low mut Balance newBlc = new low Balance(0); c.blc = newBlc; newBlc.blc = 10";
    let without = "low mut Balance newBlc = new low Balance(0); newBlc.blc = 10";
    assert_eq!(outcome(&prog, &gamma, with_leak), Err(TypeErrorCode::FlowViolation));
    assert_eq!(outcome(&prog, &gamma, without), Ok(()));
}

#[test]
fn whole_corpus_is_fast() {
    let start = Instant::now();
    access_lines_accept_and_reject();
    alias_lines_accept_and_reject();
    mutable_alias_write_accepts_only_without_the_leak();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}
