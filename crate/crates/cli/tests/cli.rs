use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_two-hessian"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dirs_reports_counts_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let out = run(&["dirs", "--n-theta", "2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("directions=98"));
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("direction,")).count(), 98);
}

#[test]
fn validate_passes_for_every_exact_problem() {
    let out = run(&["validate", "--samples", "200"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().filter(|l| l.contains(": ok")).count(), 6);
}

#[test]
fn solve_writes_report_and_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        "--problem",
        "ex7",
        "--scheme",
        "monotone1",
        "-n",
        "11",
        "--levels",
        "-0.01,-0.03",
        "--field-csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("Converged"));
    let report = fs::read_to_string(dir.path().join("ex7_monotone1_N11.json")).unwrap();
    assert!(report.contains("\"converged\": true"));
    assert!(dir.path().join("ex7_monotone1_N11_levels.csv").exists());
    assert!(dir.path().join("ex7_monotone1_N11_field.csv").exists());
}

#[test]
fn study_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "problem = \"ex1\"\nschemes = [\"naive\"]\nn_values = [7]\n").unwrap();
    let out = run(&[
        "study",
        "--config",
        cfg.to_str().unwrap(),
        "--problem",
        "ex2",
        "--n-values",
        "9,11",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    let table = stdout(&out);
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("naive,11,"));
    assert!(dir.path().join("table.csv").exists());
}

#[test]
fn failed_rows_give_nonzero_exit() {
    let out = run(&[
        "study",
        "--problem",
        "ex2",
        "--n-values",
        "9",
        "--init",
        "exact_plus_noise",
        "--max-iters",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("not converged"));
}

#[test]
fn bad_input_is_an_error() {
    let out = run(&["solve", "--problem", "ex42"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["study", "--n-values", "20,15"]);
    assert_eq!(out.status.code(), Some(2));
}
