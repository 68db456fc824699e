use std::path::PathBuf;

use covlab::oracle::{compare_fixtures, generate_fixtures, Fixtures};

const SEED: u64 = 20240611;

fn path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oracle.json")
}

#[test]
fn pinned_oracle_values_reproduce() {
    let fresh = generate_fixtures(SEED).unwrap();
    if std::env::var_os("COVLAB_BLESS").is_some() {
        std::fs::write(path(), serde_json::to_string_pretty(&fresh).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(path()).expect("fixture file missing; rerun with COVLAB_BLESS=1 or `covlab oracle fixtures --bless`");
    let stored: Fixtures = serde_json::from_str(&text).unwrap();
    assert_eq!(stored.seed, fresh.seed);
    assert_eq!(stored.budget, fresh.budget);
    let bad = compare_fixtures(&stored, &fresh, 1e-9);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn known_entries() {
    let text = std::fs::read_to_string(path()).unwrap();
    let stored: Fixtures = serde_json::from_str(&text).unwrap();
    let v = |k: &str| stored.values[k];
    assert!((v("line4.delta0.centered[1]") - 1.0 / 3.0).abs() < 1e-15);
    assert!((v("line4.delta0.uncentered[1]") - 0.5).abs() < 1e-15);
    assert_eq!(v("line4.distinct_balls"), 9.0);
    assert_eq!(v("line1.distinct_balls"), 1.0);
    assert!(v("line4.weak_centered_p2.lower") <= v("line4.strong_centered_p2.lower"));
    assert!(v("line4.suite_p2.weak_margin") >= 1.0);
}
