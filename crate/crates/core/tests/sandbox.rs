//! Legality accounting over the shipped candidate fixtures.

mod common;

use std::sync::Mutex;

use common::{evaluate_constant_schedule, evaluate_lr_fixture, fixtures_dir};
use evostage::population::Legality;
use evostage::sandbox::{live_candidate_count, pass_rate};

// The live-process counter is global, so tests that assert on it run one
// at a time.
static SERIAL: Mutex<()> = Mutex::new(());

#[test]
fn batch_of_four_legal_and_one_broken_passes_four_fifths() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir().join("candidates/batch"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    let results: Vec<_> = names.iter().map(|n| (n.clone(), evaluate_lr_fixture(&format!("batch/{n}")))).collect();
    for (name, ind) in &results {
        let expected = if name.starts_with("legal") { Legality::Pass } else { Legality::IllegalCode };
        assert_eq!(ind.legality, expected, "{name}: {}", ind.legality_detail);
    }
    let rate = pass_rate(results.iter().map(|(_, ind)| ind.legality));
    assert_eq!((rate.passed, rate.total), (4, 5));
    assert!((rate.rate - 0.80).abs() < 1e-12);
    assert_eq!(live_candidate_count(), 0);
}

#[test]
fn failure_fixtures_map_to_distinct_verdicts() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cases = [
        ("timeout_lr.py", Legality::Timeout),
        ("nan_lr.py", Legality::NonFinite),
        ("target_miss_lr.py", Legality::TargetMissed),
        ("syntax_error_lr.py", Legality::IllegalCode),
    ];
    for (file, expected) in cases {
        let ind = evaluate_lr_fixture(file);
        assert_eq!(ind.legality, expected, "{file}: {}", ind.legality_detail);
        assert!(ind.score.is_none(), "{file} must not be scored");
        assert!(!ind.legality_detail.is_empty(), "{file} has no detail");
    }
    assert_eq!(live_candidate_count(), 0);
}

#[test]
fn constant_schedule_is_repeatable() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let a = evaluate_constant_schedule();
    let b = evaluate_constant_schedule();
    assert_eq!(a.legality, Legality::Pass, "{}", a.legality_detail);
    assert!(a.info.final_metrics["overflow"] <= 0.10);
    assert_eq!(a.info.final_metrics["hpwl"].to_bits(), b.info.final_metrics["hpwl"].to_bits());
    assert_eq!(a.info.stages, b.info.stages);
    println!("constant schedule hpwl {:?}", a.info.final_metrics["hpwl"]);
    assert_eq!(live_candidate_count(), 0);
}
