use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn prefixer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefixer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("PREFIXER_SHIM")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn snippet_file(dir: &Path, name: &str, source: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, source).unwrap();
    path.to_str().unwrap().to_string()
}

fn test_shim() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/shim.py")
}

#[test]
fn analyze_prints_both_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let file = snippet_file(dir.path(), "s.py", "total = order.price * qty\n");
    let text = stdout(&prefixer(&["analyze", &file]));
    assert_eq!(
        text,
        "# begin undefined variables\norder\nqty\n# end undefined variables\n\n\
         # begin undefined attributes and methods\norder.price\n# end undefined attributes and methods\n"
    );
}

#[test]
fn instrument_prints_source_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let file = snippet_file(dir.path(), "s.py", "a = 1\nb = a\n");
    let text = stdout(&prefixer(&["instrument", &file]));
    assert!(text.starts_with("a = 1\n__pfx_probe__(1)\nb = a\n__pfx_probe__(2)\n"));
    assert!(text.contains("# 1 -> 1\n# 2 -> 2\n"));
}

#[test]
fn prompt_prints_the_conversation() {
    let dir = tempfile::tempdir().unwrap();
    let file = snippet_file(dir.path(), "s.py", "print(x)\n");
    let text = stdout(&prefixer(&["prompt", &file]));
    assert!(text.starts_with("=== system ===\n"));
    assert!(text.contains("=== user ===\n"));
    assert!(text.contains("# begin code snippet\nprint(x)\n# end code snippet"));
}

#[test]
fn demo_reaches_full_coverage() {
    let text = stdout(&prefixer(&["demo"]));
    assert!(text.contains("step 1: 1 prompts, 2 prefixes, coverage 0.30"));
    assert!(text.contains("step 2: 2 prompts, 2 prefixes, coverage 0.60"));
    assert!(text.contains("step 3: 3 prompts, 3 prefixes, coverage 1.00"));
    assert!(text.contains("p_best = 2-1-0"));
}

#[test]
fn unparseable_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let file = snippet_file(dir.path(), "s.py", "def f(:\n");
    let out = prefixer(&["analyze", &file]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a usable snippet"));
}

#[test]
fn run_needs_a_runtime_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefixer(&["run", dir.path().to_str().unwrap(), "--no-install"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--shim"));
}

#[test]
fn run_rejects_zero_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefixer(&["run", dir.path().to_str().unwrap(), "--n", "0", "--no-install"]);
    assert!(!out.status.success());
}

#[test]
fn run_writes_reports_and_summary() {
    if !Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success()) {
        eprintln!("python3 not available, skipping");
        return;
    }
    let corpus = tempfile::tempdir().unwrap();
    snippet_file(corpus.path(), "ok.py", "y = x + 1\nprint(y)\n");
    snippet_file(corpus.path(), "broken.py", "def f(:\n");
    let out = tempfile::tempdir().unwrap();
    let shim = test_shim();
    let text = stdout(&prefixer(&[
        "run",
        corpus.path().to_str().unwrap(),
        "--n",
        "2",
        "--k",
        "1",
        "--no-install",
        "--shim",
        shim.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]));
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["snippet_count"], 1);
    assert_eq!(summary["skipped"][0]["snippet_id"], "broken");
    assert_eq!(summary["full_execution_rate"], 1.0);
    assert!(out.path().join("reports/ok.json").exists());
    assert!(out.path().join("reports/broken.json").exists());
    let csv = fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
