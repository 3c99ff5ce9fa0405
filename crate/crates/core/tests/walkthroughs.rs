//! Replaying the setter and signature scripts, plus the frame and
//! determinism properties of individual steps.

mod common;

use common::{fixture, load};
use proptest::prelude::*;
use sifo::parser::{parse_program, parse_script};
use sifo::pretty::normalize_whitespace;
use sifo::refiner::{RefinementStep, Session, SessionOptions};
use sifo::typechecker::Checker;

struct Walkthrough {
    lattice: &'static str,
    source: &'static str,
    class: &'static str,
    method: &'static str,
    script: &'static str,
    expected: &'static str,
}

const SET_NUMBER: Walkthrough = Walkthrough {
    lattice: "two_level.lat",
    source: "card.sifo",
    class: "Card",
    method: "setNumber",
    script: "setNumber.ifbc",
    expected: "setNumber.expected",
};

const SIGNATURE: Walkthrough = Walkthrough {
    lattice: "two_level.lat",
    source: "signature.sifo",
    class: "Verifier",
    method: "verifySignature",
    script: "signature.ifbc",
    expected: "verifySignature.expected",
};

const ALL: [&Walkthrough; 2] = [&SET_NUMBER, &SIGNATURE];

fn steps(w: &Walkthrough) -> Vec<RefinementStep> {
    parse_script(&fixture(w.script).text)
        .unwrap()
        .into_iter()
        .map(|s| s.step)
        .collect()
}

fn start(w: &Walkthrough) -> Session {
    let p = load(w.lattice, &[w.source]);
    Session::start(p.table, p.lattice, w.class, w.method, SessionOptions::default()).unwrap()
}

fn replay(w: &Walkthrough) -> Session {
    let mut s = start(w);
    for (i, step) in steps(w).iter().enumerate() {
        s.apply_in_place(step).unwrap_or_else(|e| panic!("{} step {}: {step}: {e}", w.script, i + 1));
    }
    s
}

fn assert_reproduces(w: &Walkthrough) {
    let s = replay(w);
    assert!(s.is_complete(), "{}: open holes remain", w.script);
    let exported = s.export_method().unwrap();
    assert_eq!(
        normalize_whitespace(&exported),
        normalize_whitespace(&fixture(w.expected).text),
        "{} exported:\n{exported}",
        w.script
    );
    s.verify_soundness().unwrap();
}

#[test]
fn setter_script_yields_the_setter() {
    assert_reproduces(&SET_NUMBER);
}

#[test]
fn signature_script_yields_the_verifier() {
    assert_reproduces(&SIGNATURE);
}

/// The expected listings re-typecheck on their own, outside any session.
#[test]
fn expected_listings_typecheck() {
    for w in ALL {
        let p = load(w.lattice, &[w.source]);
        let wrapper = format!("class {} {{ {} }}", w.class, fixture(w.expected).text);
        let parsed = parse_program(&wrapper);
        assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
        let def = parsed.decls[0].method(w.method).unwrap();
        Checker::new(&p.table, &p.lattice)
            .check_method(&w.class.into(), def)
            .unwrap_or_else(|e| panic!("{}: {e:?}", w.expected));
    }
}

#[test]
fn setter_rejects_variable_first() {
    let s = start(&SET_NUMBER);
    let err = s.apply(&"Variable @ eA x".parse().unwrap()).unwrap_err();
    assert!(err.to_string().contains("Variable"), "{err}");
}

/// Every hole not named by a step keeps a byte-identical spec.
fn assert_local(before: &Session, step: &RefinementStep, after: &Session) {
    for h in before.open_holes() {
        if h.id == step.hole {
            continue;
        }
        let kept = after.hole(&h.id).unwrap_or_else(|| panic!("{step} dropped {}", h.id));
        assert_eq!(kept, h);
        assert_eq!(serde_json::to_vec(kept).unwrap(), serde_json::to_vec(h).unwrap());
    }
    for h in after.open_holes() {
        let fresh = !before.open_holes().iter().any(|b| b.id == h.id);
        assert!(
            !fresh || h.id == step.hole || h.id.as_str().starts_with(step.hole.as_str()),
            "{step} created unrelated hole {}",
            h.id
        );
    }
}

#[test]
fn scripted_steps_are_local() {
    for w in ALL {
        let mut s = start(w);
        for step in steps(w) {
            let next = s.apply(&step).unwrap();
            assert_local(&s, &step, &next);
            s = next;
        }
    }
}

#[test]
fn replay_is_deterministic() {
    for w in ALL {
        let a = replay(w);
        let b = replay(w);
        assert_eq!(a.root(), b.root());
        assert_eq!(a.log(), b.log());
        let again = Session::replay(
            a.class_table().clone(),
            a.lattice().clone(),
            w.class,
            w.method,
            SessionOptions::default(),
            a.log(),
        )
        .unwrap();
        assert_eq!(again.root(), a.root());
        assert_eq!(again.export_method().unwrap(), a.export_method().unwrap());
    }
}

#[test]
fn undo_restores_every_prefix() {
    for w in ALL {
        let all = steps(w);
        let mut sessions = vec![start(w)];
        for step in &all {
            let next = sessions.last().unwrap().apply(step).unwrap();
            sessions.push(next);
        }
        for i in (1..sessions.len()).rev() {
            let undone = sessions[i].undo().unwrap();
            assert_eq!(undone.root(), sessions[i - 1].root());
            assert_eq!(undone.open_holes(), sessions[i - 1].open_holes());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Walks of suggested steps stay local and replay to the same tree.
    #[test]
    fn suggested_walks_are_local_and_replayable(
        pick_script in 0usize..2,
        choices in proptest::collection::vec(any::<prop::sample::Index>(), 1..12),
    ) {
        let w = ALL[pick_script];
        let mut s = start(w);
        for choice in choices {
            let holes = s.open_holes();
            if holes.is_empty() {
                break;
            }
            let hole = holes[choice.index(holes.len())].id.clone();
            let rules = s.applicable_rules(&hole).unwrap();
            if rules.is_empty() {
                break;
            }
            let step = &rules[choice.index(rules.len())];
            let next = s.apply(step).unwrap();
            assert_local(&s, step, &next);
            s = next;
        }
        let again = Session::replay(
            s.class_table().clone(),
            s.lattice().clone(),
            w.class,
            w.method,
            SessionOptions::default(),
            s.log(),
        )
        .unwrap();
        prop_assert_eq!(again.root(), s.root());
    }
}
