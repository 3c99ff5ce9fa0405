//! Random refinement sessions, each complete one re-checked by the type
//! checker.

use std::time::Instant;

use sifo::fuzz::{self, FuzzConfig};
use sifo::refiner::Fault;

#[test]
fn thousand_sessions_have_no_failures() {
    let start = Instant::now();
    let report = fuzz::run(&FuzzConfig {
        seed: 1,
        iterations: 1000,
        ..FuzzConfig::default()
    });
    let elapsed = start.elapsed();
    assert!(report.passed(), "{report}\n{}", report.failures[0]);
    assert!(report.completed >= 1000, "{report}");
    assert!(elapsed.as_secs() < 60, "{elapsed:?}");
}

#[test]
fn reports_are_reproducible() {
    let config = FuzzConfig {
        seed: 7,
        iterations: 50,
        ..FuzzConfig::default()
    };
    assert_eq!(fuzz::run(&config).to_string(), fuzz::run(&config).to_string());
}

#[test]
fn injected_fault_is_found() {
    let report = fuzz::run(&FuzzConfig {
        seed: 1,
        iterations: 300,
        fault: Some(Fault::SecurityPromotionIgnoresModifier),
        ..FuzzConfig::default()
    });
    assert!(!report.passed(), "{report}");
    let failure = &report.failures[0];
    assert!(failure.log.iter().any(|s| s.rule().name() == "SecurityPromotion"), "{failure}");
}
