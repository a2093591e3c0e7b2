use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leibniz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const ABS: &str = "version = 1\nname = abs\n[space]\nnode t1 weight=1\nnode t2 weight=1\n[integrand]\n* max_affine pieces=1:0;-1:0\n[points]\nx = 0\n";

#[test]
fn bundled_scenarios_exit_zero() {
    // The slow sqrt example is covered by the acceptance target.
    for name in [
        "smooth_two_atoms",
        "abs_two_atoms",
        "ramps",
        "second_order_abs",
        "interval_atoms",
        "constraint_slater",
        "slater_failure",
    ] {
        let p = scenarios().join(format!("{name}.scn"));
        let out = run(&[p.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn parse_error_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_scenario(
        dir.path(),
        "bad.scn",
        "version = 1\n[space]\nnode t1 weight=abc\n",
    );
    let out = run(&[p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let p = scenarios().join("smooth_two_atoms.scn");
    let p = p.to_str().unwrap();
    assert_eq!(run(&[p, "--format", "xml"]).status.code(), Some(2));
    assert_eq!(run(&[p, "--rule", "no_such_rule"]).status.code(), Some(2));
    assert_eq!(run(&[p, "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["/no/such/file.scn"]).status.code(), Some(2));
}

#[test]
fn missed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{ABS}[checks]\nrule first_order_equality\nexpect first_order_equality=violated\n[tolerances]\nseed = 1\n");
    let p = write_scenario(dir.path(), "miss.scn", &body);
    let out = run(&[p.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn failed_precondition_without_expectation_exits_one() {
    let p = scenarios().join("slater_failure.scn");
    let src = fs::read_to_string(&p).unwrap();
    let stripped: String = src
        .lines()
        .filter(|l| !l.trim_start().starts_with("expect"))
        .map(|l| format!("{l}\n"))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let q = write_scenario(dir.path(), "slater.scn", &stripped);
    let out = run(&[q.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn inconclusive_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // No subgradient of norm 3 exists, so the witness search runs out.
    let body = format!(
        "{ABS}xstar = 3\n[checks]\nrule sequential_witness family=subdifferential\n[tolerances]\nseed = 1\nwitness_budget = 200\n"
    );
    let p = write_scenario(dir.path(), "inc.scn", &body);
    let out = run(&[p.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn structured_output_to_file_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = scenarios().join("abs_two_atoms.scn");
    let mut texts = Vec::new();
    for i in 0..2 {
        let out_path = dir.path().join(format!("r{i}.txt"));
        let out = run(&[
            p.to_str().unwrap(),
            "--format",
            "structured",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
        texts.push(fs::read_to_string(&out_path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert!(
        texts[0].starts_with("schema=leibniz-report/1"),
        "{}",
        texts[0]
    );
}

#[test]
fn rule_filter_and_seed_override() {
    let p = scenarios().join("smooth_two_atoms.scn");
    let out = run(&[
        p.to_str().unwrap(),
        "--rule",
        "EqualityCase",
        "--rule",
        "lipschitz-like",
        "--seed",
        "42",
        "--format",
        "structured",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("seed=42"), "{text}");
    assert!(text.contains("id=equality_case"));
    assert!(text.contains("id=lipschitz_like"));
    assert!(!text.contains("regular_pointwise"));
}
