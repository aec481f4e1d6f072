//! End-to-end runs of the `sprintctl` binary: exit codes, golden outputs and
//! byte stability of every file it writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sprintctl");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny").join(name)
}

fn sprintctl(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("SPRINTCTL_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sprintctl(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}\n{}", stderr(&out));
    stdout(&out)
}

/// Compares with `tests/golden/<name>`; set UPDATE_GOLDEN=1 to rewrite.
fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

fn copy_tiny_fixture(dir: &Path) {
    for name in ["curves.csv", "contexts.csv", "schema.json", "context_a.json"] {
        fs::copy(fixture(name), dir.join(name)).unwrap();
    }
}

fn build_tiny(dir: &Path) -> String {
    copy_tiny_fixture(dir);
    ok(
        dir,
        &[
            "build", "--curves", "curves.csv", "--contexts", "contexts.csv", "--schema", "schema.json",
            "--attribute", "effort", "--target-k", "2", "--grid", "3", "--out", "base.eb",
        ],
    )
}

fn plan_tiny(dir: &Path) -> String {
    ok(
        dir,
        &["plan", "--base", "base.eb", "--id", "N1", "--duration", "4", "--context", "context_a.json", "--out", "N1.tp"],
    )
}

#[test]
fn track_breach_prints_deviation_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    golden("tiny_build.txt", &build_tiny(dir.path()));
    golden("tiny_plan.txt", &plan_tiny(dir.path()));

    let breach = ok(dir.path(), &["track", "--project", "N1.tp", "--t", "0.5", "--value", "13"]);
    assert!(breach.contains("DeviationDetected"), "{breach}");
    golden("tiny_track.txt", &breach);

    let inside = ok(dir.path(), &["track", "--project", "N1.tp", "--elapsed", "3", "--value", "16"]);
    assert!(inside.contains("within tolerance"), "{inside}");

    ok(dir.path(), &["report", "--project", "N1.tp", "--out", "report"]);
    golden("tiny_report.csv", &fs::read_to_string(dir.path().join("report/N1.csv")).unwrap());
    golden("tiny_report.txt", &fs::read_to_string(dir.path().join("report/N1.txt")).unwrap());
}

#[test]
fn usage_errors_exit_two_and_domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    build_tiny(dir.path());
    plan_tiny(dir.path());

    let unknown = sprintctl(dir.path(), &["track", "--project", "N1.tp", "--t", "0.5", "--value", "1", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("Usage"), "{}", stderr(&unknown));

    let no_command = sprintctl(dir.path(), &[]);
    assert_eq!(no_command.status.code(), Some(2));

    let both_rules = sprintctl(
        dir.path(),
        &[
            "build", "--curves", "curves.csv", "--contexts", "contexts.csv", "--schema", "schema.json",
            "--attribute", "effort", "--target-k", "2", "--threshold", "1", "--out", "x.eb",
        ],
    );
    assert_eq!(both_rules.status.code(), Some(2));

    let context_for_wrong_experience =
        sprintctl(dir.path(), &["replan", "--project", "N1.tp", "--cause", "wrong-experience", "--set", "size=3"]);
    assert_eq!(context_for_wrong_experience.status.code(), Some(2));

    ok(dir.path(), &["track", "--project", "N1.tp", "--t", "0.5", "--value", "10"]);
    let backwards = sprintctl(dir.path(), &["track", "--project", "N1.tp", "--t", "0.25", "--value", "10"]);
    assert_eq!(backwards.status.code(), Some(1));
    assert!(stderr(&backwards).starts_with("error[NON_MONOTONE_TIME]:"), "{}", stderr(&backwards));

    let bad_factor = sprintctl(
        dir.path(),
        &["plan", "--base", "base.eb", "--id", "N2", "--duration", "1", "--set", "colour=red", "--out", "N2.tp"],
    );
    assert_eq!(bad_factor.status.code(), Some(1));
    assert!(stderr(&bad_factor).contains("error[SCHEMA_VIOLATION]"));
    assert!(!dir.path().join("N2.tp").exists());

    let missing = sprintctl(dir.path(), &["track", "--project", "nope.tp", "--t", "0.5", "--value", "1"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("error[IO_ERROR]"));
}

#[test]
fn replan_causes_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    build_tiny(dir.path());
    plan_tiny(dir.path());
    let out = ok(dir.path(), &["replan", "--project", "N1.tp", "--cause", "wrong-experience"]);
    assert!(out.starts_with("cluster 0 -> 1\n"), "{out}");
    let out = ok(
        dir.path(),
        &["replan", "--project", "N1.tp", "--cause", "wrong-context", "--set", "lang=rust", "--set", "size=15"],
    );
    assert!(out.starts_with("cluster 1 -> 0\n"), "{out}");
    assert!(out.contains("cause=wrong_context"), "{out}");
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    build_tiny(dir.path());
    fs::write(dir.path().join("defaults.toml"), "[control]\ntolerance = 0.5\n").unwrap();
    let with_config = |args: &[&str]| {
        Command::new(BIN)
            .args(args)
            .current_dir(dir.path())
            .env("SPRINTCTL_CONFIG", "defaults.toml")
            .output()
            .unwrap()
    };
    let plan = with_config(&["plan", "--base", "base.eb", "--id", "N1", "--duration", "4", "--context", "context_a.json", "--out", "N1.tp"]);
    assert_eq!(plan.status.code(), Some(0), "{}", stderr(&plan));
    let track = with_config(&["track", "--project", "N1.tp", "--t", "0.5", "--value", "13"]);
    assert!(stdout(&track).contains("within tolerance"), "{}", stdout(&track));

    fs::write(dir.path().join("defaults.toml"), "[control]\ntolerence = 0.5\n").unwrap();
    let bad = with_config(&["track", "--project", "N1.tp", "--t", "0.75", "--value", "13"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).starts_with("error[CONFIG_ERROR]"), "{}", stderr(&bad));
}

#[test]
fn build_on_simulated_portfolio_finds_five_clusters() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--out", "data"]);
    let out = ok(
        dir.path(),
        &[
            "build", "--curves", "data/curves.csv", "--contexts", "data/contexts.csv", "--schema", "data/schema.json",
            "--attribute", "effort", "--target-k", "5", "--out", "base.eb",
        ],
    );
    assert!(out.starts_with("effort: 5 clusters,"), "{out}");
    let ingest = ok(
        dir.path(),
        &["ingest", "--curves", "data/curves.csv", "--contexts", "data/contexts.csv", "--schema", "data/schema.json"],
    );
    assert!(ingest.starts_with("projects: 17\nfactors: 10\n"), "{ingest}");
}

/// Runs the whole pipeline inside `dir` and returns every command's stdout.
fn pipeline(dir: &Path) -> Vec<String> {
    let mut outs = vec![
        ok(dir, &["simulate", "--out", "data", "--seed", "11"]),
        ok(
            dir,
            &[
                "build", "--curves", "data/curves.csv", "--contexts", "data/contexts.csv", "--schema",
                "data/schema.json", "--attribute", "effort", "--target-k", "5", "--out", "base.eb",
            ],
        ),
        ok(
            dir,
            &[
                "evaluate", "--base", "base.eb", "--test-curves", "data/test_curves.csv", "--test-contexts",
                "data/test_contexts.csv", "--schema", "data/schema.json", "--ground-truth", "data/ground_truth.csv",
                "--strategy", "hybrid", "--out", "eval.json",
            ],
        ),
        ok(dir, &["report", "--evaluation", "eval.json", "--out", "report"]),
    ];
    let contexts = fs::read_to_string(dir.join("data/test_contexts.csv")).unwrap();
    let mut plan: Vec<String> = ["plan", "--base", "base.eb", "--id", "T01", "--duration", "10", "--out", "T01.tp"]
        .map(String::from)
        .to_vec();
    for line in contexts.lines().filter(|l| l.starts_with("T01,")) {
        let fields: Vec<&str> = line.split(',').collect();
        plan.push("--set".into());
        plan.push(format!("{}={}", fields[1], fields[2]));
    }
    outs.push(ok(dir, &plan.iter().map(String::as_str).collect::<Vec<_>>()));
    for (t, v) in [("0.2", "5"), ("0.4", "30"), ("0.6", "90")] {
        outs.push(ok(dir, &["track", "--project", "T01.tp", "--t", t, "--value", v]));
    }
    outs.push(ok(dir, &["replan", "--project", "T01.tp", "--cause", "wrong-experience"]));
    outs.push(ok(dir, &["report", "--project", "T01.tp", "--out", "report"]));
    outs
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn pipeline_outputs_are_byte_stable_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = pipeline(a.path());
    let out_b = pipeline(b.path());
    assert_eq!(out_a, out_b);
    let files_a = read_tree(a.path());
    let files_b = read_tree(b.path());
    assert_eq!(files_a.keys().collect::<Vec<_>>(), files_b.keys().collect::<Vec<_>>());
    for (name, bytes) in &files_a {
        assert!(bytes == &files_b[name], "{name} differs between runs");
    }
    assert!(files_a.contains_key("report/T01.csv"));
    assert!(files_a.contains_key("report/evaluation.csv"));
}
