//! End-to-end checks of the command-line binary: exit codes, output files,
//! and byte-level reproducibility across invocations.

use std::path::Path;
use std::process::{Command, Output};

use hadam::harness::read_trace_csv;

fn hadam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hadam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

/// Small skewed classification setup shared by the divergence-facing tests.
fn skew_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "run",
        "--out",
        out,
        "--set",
        "problem=skew_mlp",
        "--set",
        "n_examples=120",
        "--set",
        "features=5",
        "--set",
        "hidden=5",
        "--set",
        "steps=60",
        "--set",
        "record_every=20",
        "--seeds",
        "1",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn run_writes_traces_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let out_s = out.to_str().unwrap();
    let output = hadam(&[
        "run", "--out", out_s, "--set", "steps=60", "--set", "record_every=20", "--seeds", "1,2",
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("completed 60 steps"));
    for seed in [1, 2] {
        let rows = read_trace_csv(&out.join(format!("trace_{seed}.csv"))).unwrap();
        assert_eq!(rows.last().unwrap().t, 60);
        assert!(!rows.last().unwrap().diverged);
    }
    let resolved = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("steps = 60"));
    assert!(resolved.contains("seeds = 1,2"));
}

#[test]
fn odd_order_divergence_is_a_result_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("odd");
    let out_s = out.to_str().unwrap();
    let output = hadam(&skew_args(out_s, &["--set", "order=3"]));
    assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    assert!(
        stdout(&output).contains("DIVERGED t="),
        "stdout: {}",
        stdout(&output)
    );
    assert!(
        stderr(&output).contains("warning"),
        "odd order must warn on stderr: {}",
        stderr(&output)
    );
    let rows = read_trace_csv(&out.join("trace_1.csv")).unwrap();
    assert!(rows.last().unwrap().diverged);
}

#[test]
fn config_file_settings_apply() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(
        &conf,
        "# tiny run\n[harness]\nsteps = 42\nrecord_every = 21\nseeds = 9\n",
    )
    .unwrap();
    let out = dir.path().join("res");
    let output = hadam(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    let rows = read_trace_csv(&out.join("trace_9.csv")).unwrap();
    assert_eq!(rows.last().unwrap().t, 42);
    let resolved = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("steps = 42"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let out_s = out.to_str().unwrap();

    // unknown --set key
    let output = hadam(&["run", "--out", out_s, "--set", "learning_rate=0.1"]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("learning_rate"));

    // malformed --set
    let output = hadam(&["run", "--out", out_s, "--set", "alpha"]);
    assert_eq!(code(&output), 2);

    // order below the minimum
    let output = hadam(&["run", "--out", out_s, "--set", "order=1"]);
    assert_eq!(code(&output), 2);

    // missing config file
    let output = hadam(&["run", "--config", "/nonexistent/exp.conf", "--out", out_s]);
    assert_eq!(code(&output), 2);

    // unknown key inside a config file, reported with its line
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "steps = 10\nmomentum = 0.9\n").unwrap();
    let output = hadam(&["run", "--config", conf.to_str().unwrap(), "--out", out_s]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("line 2"), "{}", stderr(&output));

    // usage errors from the argument parser share the code
    let output = hadam(&["frobnicate"]);
    assert_eq!(code(&output), 2);

    // config errors must not leave result files behind
    assert!(!out.exists());
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str, jobs: &str| -> Vec<String> {
        [
            "sweep",
            "--out",
            out,
            "--set",
            "problem=skew_mlp",
            "--set",
            "n_examples=120",
            "--set",
            "features=5",
            "--set",
            "hidden=5",
            "--set",
            "steps=40",
            "--set",
            "record_every=10",
            "--set",
            "orders=2,3,4",
            "--seeds",
            "1,2",
            "--jobs",
            jobs,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let run = |out: &Path, jobs: &str| {
        let argv = args(out.to_str().unwrap(), jobs);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let output = hadam(&argv);
        assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    };
    run(&out_a, "4");
    run(&out_b, "1");

    let mut names = vec!["sweep.csv".to_string(), "resolved_config.txt".to_string()];
    for order in [2, 3, 4] {
        for seed in [1, 2] {
            names.push(format!("trace_k{order}_{seed}.csv"));
        }
    }
    for name in names {
        let a = std::fs::read(out_a.join(&name)).unwrap();
        let b = std::fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn probe_writes_moment_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("probe");
    let output = hadam(&[
        "probe",
        "--out",
        out.to_str().unwrap(),
        "--set",
        "problem=logistic",
        "--set",
        "n_examples=150",
        "--set",
        "features=5",
        "--set",
        "orders=2,3,4",
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    let csv = std::fs::read_to_string(out.join("probe.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,raw_moment,metric_mk"));
    // k = 1 plus the three requested orders
    assert_eq!(lines.count(), 4);
    assert!(stdout(&output).contains("skewness"));
}

#[test]
fn verify_passes_clean_and_fails_under_injected_fault() {
    let output = hadam(&["verify"]);
    assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("all 5 suites passed"));

    let output = hadam(&["verify", "--inject-fault"]);
    assert_eq!(code(&output), 1);
    let text = stdout(&output);
    assert!(
        text.contains("ema_closed_form") && text.contains("FAIL"),
        "{text}"
    );
}
