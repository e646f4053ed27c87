//! Static analysis against frozen dynamic-execution results: every name the
//! interpreter failed to resolve must be reported, and nothing else.

use std::collections::BTreeSet;
use std::process::Command;

use prefixer_core::scope::analyze_source;
use serde::Deserialize;

#[derive(Deserialize)]
struct Oracle {
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    source: String,
    undefined: Vec<String>,
    as_is_name_error: bool,
}

fn load() -> Oracle {
    serde_json::from_str(include_str!("fixtures/analyzer_oracle.json")).unwrap()
}

#[test]
fn matches_frozen_oracle() {
    let oracle = load();
    assert_eq!(oracle.cases.len(), 200);
    let mut mismatches = Vec::new();
    for case in &oracle.cases {
        let refs = analyze_source(&case.source).unwrap();
        let got: BTreeSet<_> = refs.variables.iter().cloned().collect();
        let want: BTreeSet<_> = case.undefined.iter().cloned().collect();
        if got != want {
            mismatches.push(format!("{:?}\n  got {got:?}\n  want {want:?}", case.source));
        }
        assert_eq!(refs.is_empty(), !case.as_is_name_error, "{}", case.source);
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

/// Regenerates the oracle with a local interpreter and checks it still agrees
/// with the frozen copy. Skipped when `python3` is unavailable.
#[test]
fn frozen_oracle_is_reproducible() {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/oracles/name_oracle.py");
    let Ok(output) = Command::new("python3").args([script, "200", "7"]).output() else {
        eprintln!("python3 not found; skipping");
        return;
    };
    if !output.status.success() {
        eprintln!("oracle script failed; skipping: {}", String::from_utf8_lossy(&output.stderr));
        return;
    }
    let fresh: Oracle = serde_json::from_slice(&output.stdout).unwrap();
    let frozen = load();
    let fresh: Vec<_> = fresh.cases.iter().map(|c| (&c.source, &c.undefined)).collect();
    let frozen: Vec<_> = frozen.cases.iter().map(|c| (&c.source, &c.undefined)).collect();
    assert_eq!(fresh, frozen);
}
