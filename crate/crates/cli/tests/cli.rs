use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

fn jccopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jccopf"))
        .args(args)
        .env("JCCOPF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = jccopf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn solve_writes_identical_files_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = case("five_bus.json");
    for dir in [&a, &b] {
        run_ok(&[
            "solve",
            "--case",
            c.to_str().unwrap(),
            "--samples",
            "2000",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    for f in ["dispatch.csv", "trace.csv", "summary.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let summary = read(a.path(), "summary.csv");
    assert!(summary.starts_with("method,"), "{summary}");
    assert!(summary.contains("iterative"));
}

#[test]
fn boole_method_is_the_presolve() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = case("five_bus.json");
    run_ok(&["solve", "--case", c.to_str().unwrap(), "--method", "boole", "--out", a.path().to_str().unwrap()]);
    // One pass of the loop: its first trace row is the presolve objective.
    run_ok(&[
        "solve",
        "--case",
        c.to_str().unwrap(),
        "--samples",
        "2000",
        "--out",
        b.path().to_str().unwrap(),
    ]);
    let boole_obj = read(a.path(), "trace.csv").lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    let first = read(b.path(), "trace.csv").lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    assert_eq!(boole_obj, first);
}

#[test]
fn invalid_alpha_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = case("three_bus.json");
    let out = jccopf(&["solve", "--case", c.to_str().unwrap(), "--alpha", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let c = case("three_bus.json");
    let args = ["solve", "--case", c.to_str().unwrap(), "--method", "no_jcc", "--out", dir.path().to_str().unwrap()];
    run_ok(&args);
    let again = jccopf(&args);
    assert_eq!(again.status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    run_ok(&forced);
}

#[test]
fn validate_reports_counts_and_rejects_broken_cases() {
    let out = run_ok(&["validate", "--case", case("five_bus.json").to_str().unwrap()]);
    assert!(!out.stderr.is_empty() || !out.stdout.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(case("three_bus.json"))
        .unwrap()
        .replacen("\"reactance_pu\": 0.1", "\"reactance_pu\": -0.1", 1);
    std::fs::write(&bad, text).unwrap();
    let out = jccopf(&["validate", "--case", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lines[0]"));
}

#[test]
fn compare_covers_every_method_by_default() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "compare",
        "--case",
        case("three_bus.json").to_str().unwrap(),
        "--samples",
        "1000",
        "--eval-samples",
        "1000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let cost = read(dir.path(), "cost.csv");
    for m in ["no_jcc", "boole", "improved_boole", "improving_bound", "iterative"] {
        assert!(cost.lines().any(|l| l.starts_with(&format!("{m},"))), "{m} missing:\n{cost}");
    }
    for f in ["pos.csv", "violations.csv", "trace.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn evaluate_scores_a_saved_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let c = case("five_bus.json");
    run_ok(&["solve", "--case", c.to_str().unwrap(), "--method", "boole", "--out", dir.path().to_str().unwrap()]);
    let eval_dir = dir.path().join("eval");
    let dispatch = dir.path().join("dispatch.csv");
    run_ok(&[
        "evaluate",
        "--case",
        c.to_str().unwrap(),
        "--dispatch",
        dispatch.to_str().unwrap(),
        "--eval-samples",
        "2000",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    let pos = read(&eval_dir, "pos.csv");
    assert_eq!(pos.lines().count(), 1 + 6, "{pos}");
    assert!(pos.lines().skip(1).all(|l| l.starts_with("dispatch,")), "{pos}");
}
