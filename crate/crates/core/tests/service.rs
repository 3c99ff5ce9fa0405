//! The session host called in process: persistence, revisions and
//! concurrency.

mod common;

use std::sync::Arc;
use std::thread;

use common::{script, workspace};
use proptest::prelude::*;
use sifo::refiner::{RefinementStep, SessionStatus};
use sifo::service::protocol::{
    Binding, CheckRequest, CreateSessionRequest, ErrorCode, ErrorResponse, SessionView, StepRequest, UndoRequest,
};
use sifo::service::store::{self, WorkspaceSnapshot};
use sifo::service::{Service, ServiceConfig, ServiceError};

fn open(dir: &std::path::Path) -> Service {
    Service::open(dir, ServiceConfig::default()).unwrap()
}

fn create(svc: &Service, class: &str, method: &str) -> SessionView {
    svc.create_session(&CreateSessionRequest {
        class: class.into(),
        method: method.into(),
        allow_declassify: None,
        pre: String::new(),
        post: String::new(),
    })
    .unwrap()
}

fn step(svc: &Service, view: &SessionView, text: &str) -> Result<SessionView, ServiceError> {
    svc.apply_step(
        &view.id,
        &StepRequest {
            step: text.parse().unwrap(),
            revision: view.revision,
        },
    )
}

fn binding(name: &str, level: &str, modifier: &str, class: &str) -> Binding {
    serde_json::from_value(serde_json::json!({"name": name, "level": level, "modifier": modifier, "class": class}))
        .unwrap()
}

#[test]
fn new_session_shows_one_hole_with_ordered_context() {
    let dir = workspace();
    let svc = open(dir.path());
    let view = create(&svc, "Card", "setNumber");
    let fetched = svc.get_session(&view.id).unwrap();
    assert_eq!(fetched, view);
    assert_eq!((fetched.revision, fetched.status), (0, SessionStatus::InProgress));
    assert_eq!(fetched.holes.len(), 1);
    let hole = &fetched.holes[0];
    assert_eq!(hole.id.as_str(), "eA");
    assert_eq!(hole.required.to_string(), "low imm void");
    assert_eq!(
        hole.context,
        vec![binding("this", "low", "mut", "Card"), binding("x", "low", "imm", "int")]
    );
}

#[test]
fn setter_completes_and_exports() {
    let dir = workspace();
    let svc = open(dir.path());
    let mut view = create(&svc, "Card", "setNumber");
    for s in script("setNumber.ifbc") {
        view = step(&svc, &view, &s.to_string()).unwrap();
    }
    assert_eq!(view.status, SessionStatus::Complete);
    assert!(svc.verify(&view.id).unwrap().ok);
    assert!(svc.export(&view.id).unwrap().method.contains("this.number = x;"));
}

#[test]
fn stale_revision_conflicts() {
    let dir = workspace();
    let svc = open(dir.path());
    let v0 = create(&svc, "Card", "setNumber");
    let v1 = step(&svc, &v0, "FieldAssignment @ eA low mut Card number").unwrap();
    let err = step(&svc, &v0, "Variable @ eA1 this").unwrap_err();
    assert_eq!(err.code(), ErrorCode::Conflict);
    assert_eq!(err.to_response().revision, Some(1));
    let err = svc.undo(&v0.id, &UndoRequest { revision: 0 }).unwrap_err();
    assert_eq!(err.code(), ErrorCode::Conflict);
    assert_eq!(svc.get_session(&v0.id).unwrap(), v1);
}

#[test]
fn rejected_steps_name_the_rule_and_leave_no_trace() {
    let dir = workspace();
    let svc = open(dir.path());
    let v0 = create(&svc, "Card", "setNumber");
    let err = step(&svc, &v0, "Variable @ eA x").unwrap_err();
    assert_eq!(err.code(), ErrorCode::Rejected);
    let response = err.to_response();
    assert_eq!(response.diagnostics[0].rule.as_deref(), Some("Variable"));
    assert_eq!(svc.get_session(&v0.id).unwrap(), v0);
    let log = std::fs::read_to_string(store::log_path(dir.path(), &v0.id)).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn capsule_local_stored_in_high_field_is_suggested_by_promotion() {
    let dir = workspace();
    let svc = open(dir.path());
    let v = create(&svc, "Wallet", "keep");
    let v = step(&svc, &v, "FieldAssignment @ eA low mut Card blc").unwrap();
    let v = step(&svc, &v, "Variable @ eA1 c").unwrap();
    assert_eq!(v.holes[0].required.to_string(), "high mut Balance");
    let rules = svc.applicable_rules(&v.id, "eA2").unwrap();
    let promotion: RefinementStep = "SecurityPromotion @ eA2 low".parse().unwrap();
    assert!(rules.candidates.contains(&promotion), "{:?}", rules.candidates);
    let v = step(&svc, &v, "SecurityPromotion @ eA2 low").unwrap();
    assert_eq!(v.holes[0].required.to_string(), "low capsule Balance");
    let rules = svc.applicable_rules(&v.id, "eA2").unwrap();
    assert!(rules.candidates.contains(&"Variable @ eA2 capsBlc".parse().unwrap()));
    let v = step(&svc, &v, "Variable @ eA2 capsBlc").unwrap();
    assert_eq!(v.status, SessionStatus::Complete);
    assert!(svc.verify(&v.id).unwrap().ok);
    assert_eq!(svc.applicable_rules(&v.id, "eA9").unwrap_err().code(), ErrorCode::NotFound);
}

#[test]
fn restart_restores_sessions() {
    let dir = workspace();
    let (a, b) = {
        let svc = open(dir.path());
        let mut a = create(&svc, "Card", "setNumber");
        for s in script("setNumber.ifbc") {
            a = step(&svc, &a, &s.to_string()).unwrap();
        }
        a = svc.undo(&a.id, &UndoRequest { revision: a.revision }).unwrap();
        let mut b = create(&svc, "Verifier", "verifySignature");
        for s in script("signature.ifbc").iter().take(5) {
            b = step(&svc, &b, &s.to_string()).unwrap();
        }
        (a, b)
    };
    let svc = open(dir.path());
    assert_eq!(svc.get_session(&a.id).unwrap(), a);
    assert_eq!(svc.get_session(&b.id).unwrap(), b);
    assert_eq!(svc.list_sessions().sessions.len(), 2);
    let c = create(&svc, "Card", "setNumber");
    assert_eq!(c.id, "s3");
}

#[test]
fn corrupt_log_line_is_named() {
    let dir = workspace();
    let id = {
        let svc = open(dir.path());
        let v = create(&svc, "Card", "setNumber");
        step(&svc, &v, "FieldAssignment @ eA low mut Card number").unwrap();
        v.id
    };
    let path = store::log_path(dir.path(), &id);
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("Frobnicate @ eA1\n");
    std::fs::write(&path, text).unwrap();
    let err = Service::open(dir.path(), ServiceConfig::default()).err().unwrap();
    assert_eq!(err.code(), ErrorCode::CorruptWorkspace);
    assert!(err.to_string().contains(&format!("{id}.ifbc.log:4")), "{err}");

    // a well-formed step that no longer applies is named the same way
    let text = "# sifo-session v1\nmethod Card.setNumber\nVariable @ eA x\n";
    std::fs::write(&path, text).unwrap();
    let err = Service::open(dir.path(), ServiceConfig::default()).err().unwrap();
    assert!(err.to_string().contains(".ifbc.log:3"), "{err}");
}

#[test]
fn every_log_prefix_loads() {
    let dir = workspace();
    let id = {
        let svc = open(dir.path());
        let mut v = create(&svc, "Verifier", "verifySignature");
        for s in script("signature.ifbc").iter().take(6) {
            v = step(&svc, &v, &s.to_string()).unwrap();
        }
        svc.undo(&v.id, &UndoRequest { revision: v.revision }).unwrap();
        v.id
    };
    let path = store::log_path(dir.path(), &id);
    let full = std::fs::read_to_string(&path).unwrap();
    for cut in 0..=full.len() {
        std::fs::write(&path, &full[..cut]).unwrap();
        let svc = Service::open(dir.path(), ServiceConfig::default())
            .unwrap_or_else(|e| panic!("prefix of {cut} bytes: {e}"));
        let complete_lines = full[..cut].matches('\n').count();
        match svc.get_session(&id) {
            Ok(v) => assert_eq!(v.revision as usize, complete_lines - 2, "cut {cut}"),
            Err(e) => {
                assert!(complete_lines < 2, "cut {cut}: {e}");
                assert_eq!(e.code(), ErrorCode::NotFound);
            }
        }
    }
}

#[test]
fn snapshot_save_is_byte_identical() {
    let dir = workspace();
    {
        let svc = open(dir.path());
        let mut v = create(&svc, "Card", "setNumber");
        for s in script("setNumber.ifbc") {
            v = step(&svc, &v, &s.to_string()).unwrap();
        }
        svc.undo(&v.id, &UndoRequest { revision: v.revision }).unwrap();
        create(&svc, "Wallet", "keep");
    }
    let snap = WorkspaceSnapshot::load(dir.path()).unwrap();
    let copy = tempfile::tempdir().unwrap();
    snap.save(copy.path()).unwrap();
    assert_eq!(WorkspaceSnapshot::load(copy.path()).unwrap(), snap);
    let files = |root: &std::path::Path| {
        let mut out = Vec::new();
        for sub in ["lattice.lat", "src", "sessions"] {
            let p = root.join(sub);
            if p.is_dir() {
                let mut names: Vec<_> = std::fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()).collect();
                names.sort();
                out.extend(names.into_iter().map(|f| (f.strip_prefix(root).unwrap().to_owned(), std::fs::read(&f).unwrap())));
            } else {
                out.push((sub.into(), std::fs::read(&p).unwrap()));
            }
        }
        out
    };
    assert_eq!(files(copy.path()), files(dir.path()));
}

#[test]
fn concurrent_steps_are_linearizable() {
    let dir = workspace();
    let svc = Arc::new(open(dir.path()));
    let id = create(&svc, "Verifier", "verifySignature").id;
    let steps = Arc::new(script("signature.ifbc"));
    let workers: Vec<_> = (0..8)
        .map(|w| {
            let (svc, id, steps) = (svc.clone(), id.clone(), steps.clone());
            thread::spawn(move || {
                let mut wins = 0;
                loop {
                    let v = svc.get_session(&id).unwrap();
                    let r = v.revision as usize;
                    if r >= steps.len() {
                        return wins;
                    }
                    // odd workers occasionally race an undo against the others
                    let result = if w % 2 == 1 && r > 0 && r % 3 == 0 && wins % 4 == 3 {
                        svc.undo(&id, &UndoRequest { revision: v.revision })
                    } else {
                        let next = steps[v.log.len()].clone();
                        svc.apply_step(&id, &StepRequest { step: next, revision: v.revision })
                    };
                    match result {
                        Ok(after) => {
                            assert_eq!(after.revision, v.revision + 1);
                            wins += 1;
                        }
                        Err(e) => assert_eq!(e.code(), ErrorCode::Conflict, "{e}"),
                    }
                }
            })
        })
        .collect();
    let wins: usize = workers.into_iter().map(|w| w.join().unwrap()).sum();
    let fin = svc.get_session(&id).unwrap();
    assert_eq!(fin.revision as usize, wins);
    assert_eq!(fin.log, *steps);
    assert_eq!(fin.status, SessionStatus::Complete);
    let log = std::fs::read_to_string(store::log_path(dir.path(), &id)).unwrap();
    assert_eq!(log.lines().count() - 2, wins);
    drop(svc);
    assert_eq!(open(dir.path()).get_session(&id).unwrap(), fin);
}

#[test]
fn declassification_follows_the_server_setting() {
    let dir = workspace();
    let strict = open(dir.path());
    let req = CreateSessionRequest {
        class: "Card".into(),
        method: "setNumber".into(),
        allow_declassify: Some(true),
        pre: String::new(),
        post: String::new(),
    };
    assert_eq!(strict.create_session(&req).unwrap_err().code(), ErrorCode::Forbidden);
    let plain = create(&strict, "Card", "setNumber");
    assert!(!plain.allow_declassify);
    let declassifies = |svc: &Service, id: &str| {
        svc.applicable_rules(id, "eA")
            .unwrap()
            .candidates
            .iter()
            .any(|s| s.rule().name() == "Declassification")
    };
    assert!(!declassifies(&strict, &plain.id));
    drop(strict);
    let lenient = Service::open(dir.path(), ServiceConfig { allow_declassify: true }).unwrap();
    let v = create(&lenient, "Card", "setNumber");
    assert!(v.allow_declassify);
    assert!(declassifies(&lenient, &v.id));
    drop(lenient);
    // the option is part of the log and survives a restart on a strict server
    assert!(open(dir.path()).get_session(&v.id).unwrap().allow_declassify);
}

#[test]
fn check_uses_the_workspace_or_the_request() {
    let dir = workspace();
    let svc = open(dir.path());
    assert!(svc.check(&CheckRequest::default()).ok);
    let bad = CheckRequest {
        lattice: None,
        sources: Some(vec![sifo::program::SourceFile::new(
            "leak.sifo",
            "class Leak { low imm int out; high imm int secret;\n  low mut method low imm void go() { this.out = this.secret; } }",
        )]),
    };
    let r = svc.check(&bad);
    assert!(!r.ok);
    assert_eq!((r.diagnostics[0].file.as_str(), r.diagnostics[0].code.as_str()), ("leak.sifo", "FlowViolation"));
    assert_eq!(svc.list_methods().methods.len(), 3);
}

#[test]
fn unknown_things_are_not_found() {
    let dir = workspace();
    let svc = open(dir.path());
    assert_eq!(svc.get_session("s9").unwrap_err().code(), ErrorCode::NotFound);
    let err = svc
        .create_session(&CreateSessionRequest {
            class: "Card".into(),
            method: "nope".into(),
            allow_declassify: None,
            pre: String::new(),
            post: String::new(),
        })
        .unwrap_err();
    assert_eq!(err.code(), ErrorCode::NotFound);
}

fn roundtrip<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(x: &T) {
    let text = serde_json::to_string(x).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, x);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every message produced along a random session survives a JSON round
    /// trip unchanged.
    #[test]
    fn protocol_messages_roundtrip(
        which in 0usize..3,
        choices in proptest::collection::vec(any::<prop::sample::Index>(), 0..10),
        revision in any::<u64>(),
        message in ".{0,20}",
    ) {
        let dir = workspace();
        let svc = open(dir.path());
        let (class, method) = [("Card", "setNumber"), ("Verifier", "verifySignature"), ("Wallet", "keep")][which];
        let mut v = create(&svc, class, method);
        roundtrip(&v);
        for choice in choices {
            let Some(hole) = v.holes.get(choice.index(v.holes.len().max(1)) % v.holes.len().max(1)) else { break };
            let rules = svc.applicable_rules(&v.id, hole.id.as_str()).unwrap();
            roundtrip(&rules);
            let Some(next) = rules.candidates.get(choice.index(rules.candidates.len().max(1))) else { break };
            let req = StepRequest { step: next.clone(), revision: v.revision };
            roundtrip(&req);
            v = svc.apply_step(&v.id, &req).unwrap();
            roundtrip(&v);
        }
        roundtrip(&svc.list_sessions());
        roundtrip(&svc.list_methods());
        roundtrip(&svc.check(&CheckRequest::default()));
        if v.status == SessionStatus::Complete {
            roundtrip(&svc.export(&v.id).unwrap());
            roundtrip(&svc.verify(&v.id).unwrap());
        }
        let conflict = ServiceError::Conflict { session: v.id.clone(), current: revision, given: 0 };
        roundtrip(&conflict.to_response());
        roundtrip(&ServiceError::BadRequest(message).to_response());
        if let Err(e) = step(&svc, &v, "Variable @ eA nothing") {
            let r: ErrorResponse = e.to_response();
            roundtrip(&r);
        }
    }
}
