//! Black-box tests of the command-line binary: exit codes, config
//! precedence, output files, and the printed report shapes.

use std::path::Path;
use std::process::{Command, Output};

fn byzsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzsgd"))
        .args(args)
        .env_remove("BYZSGD_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Small synthetic-problem arguments shared by the happy-path tests.
const QUICK: &[&str] = &[
    "--n", "6", "--p-true", "2", "--p-assumed", "2", "--m", "20", "--batch-size", "5",
    "--ticks", "30", "--seed", "7", "--dim", "4",
];

#[test]
fn run_succeeds_and_echoes_the_resolved_config() {
    let out = byzsgd(&[&["run"], QUICK].concat());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    // The resolved config is echoed as JSON before any results.
    assert!(text.contains("\"n\": 6"), "missing config echo:\n{text}");
    assert!(text.contains("\"seed\": 7"));
    assert!(text.contains("\"filter\": \"alg1\""));
    assert!(
        text.contains("final honest sum-sq distance"),
        "missing summary line:\n{text}"
    );
}

#[test]
fn flags_take_precedence_over_the_config_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let file = dir.path().join("experiment.json");
    std::fs::write(&file, r#"{ "n": 6, "p-true": 2, "p-assumed": 2, "m": 20, "batch-size": 5, "ticks": 30, "dim": 4, "eta": 0.125 }"#)
        .expect("config written");
    let out = byzsgd(&["run", "--config", file.to_str().unwrap(), "--eta", "0.25"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("\"eta\": 0.25"), "flag did not win:\n{text}");
    assert!(text.contains("\"n\": 6"), "file field lost:\n{text}");
}

#[test]
fn invalid_configuration_exits_with_code_1() {
    let out = byzsgd(&["run", "--filter", "krum", "--n", "4", "--p-assumed", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("krum needs"),
        "unexpected stderr: {}",
        stderr(&out)
    );
}

#[test]
fn unknown_flags_exit_with_code_1() {
    let out = byzsgd(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_dataset_exits_with_code_2() {
    let dir = tempfile::tempdir().expect("tempdir");
    std::fs::write(dir.path().join("train-images-idx3-ubyte"), b"garbage").expect("file written");
    let out = byzsgd(&[
        "run",
        "--problem",
        "mnist",
        "--data-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("ingestion error"),
        "unexpected stderr: {}",
        stderr(&out)
    );
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("dir readable")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().into_string().expect("utf-8 name"),
                std::fs::read(e.path()).expect("file readable"),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn identical_invocations_write_identical_outputs() {
    let dir = tempfile::tempdir().expect("tempdir");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        let out = byzsgd(
            &[&["run"], QUICK, &["--output-dir", target.to_str().unwrap()]].concat(),
        );
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let first = read_dir_sorted(&a);
    let second = read_dir_sorted(&b);
    assert!(!first.is_empty(), "no outputs written");
    assert_eq!(
        first.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        second.iter().map(|(n, _)| n).collect::<Vec<_>>()
    );
    for ((name, bytes_a), (_, bytes_b)) in first.iter().zip(&second) {
        if name == "manifest.json" {
            // The manifest records the fully resolved config, which
            // includes the output directory itself; everything else in
            // it must match.
            let strip = |bytes: &[u8]| -> serde_json::Value {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).expect("valid json");
                v["config"]["output-dir"] = serde_json::Value::Null;
                v
            };
            assert_eq!(strip(bytes_a), strip(bytes_b), "manifests differ between reruns");
        } else {
            assert_eq!(bytes_a, bytes_b, "{name} differs between reruns");
        }
    }
}

#[test]
fn battery_runs_all_five_mechanisms() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = byzsgd(
        &[
            &["run", "--battery", "compare"],
            QUICK,
            &["--output-dir", dir.path().to_str().unwrap()],
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).expect("summary");
    assert_eq!(summary.lines().count(), 6, "header plus one row per arm:\n{summary}");
    // The summary records each arm's resolved filter (the all-honest
    // control runs the closest rule with zero attackers); the mechanism
    // labels live in the manifest.
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).expect("manifest");
    let parsed: serde_json::Value = serde_json::from_str(&manifest).expect("valid json");
    let runs = parsed["runs"].as_array().expect("runs array");
    let mechanisms: Vec<&str> = runs
        .iter()
        .map(|r| r["mechanism"].as_str().expect("mechanism string"))
        .collect();
    assert_eq!(
        mechanisms,
        ["alg1", "alg2", "non-collaborative", "all-honest", "krum"]
    );
}

#[test]
fn sweep_writes_the_plot_table() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = byzsgd(
        &[
            &["sweep", "--vary", "delta", "--values", "10,inf"],
            QUICK,
            &["--output-dir", dir.path().to_str().unwrap()],
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let plot = std::fs::read_to_string(dir.path().join("sweep-delta.csv")).expect("plot table");
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "x,mechanism,mean,std,n_replicates");
    assert_eq!(lines.len(), 3, "one aggregated row per delta value:\n{plot}");
    assert!(lines[1].starts_with("10,alg2,"));
    assert!(lines[2].starts_with("inf,alg2,"));
}

#[test]
fn sweep_without_output_dir_is_a_config_error() {
    let out = byzsgd(&[&["sweep", "--vary", "delta"], QUICK].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("output"), "stderr: {}", stderr(&out));
}

#[test]
fn verify_bounds_reports_pass_for_both_bounds() {
    let dir = tempfile::tempdir().expect("tempdir");
    for theorem in ["1", "2"] {
        let out = byzsgd(&[
            "verify-bounds",
            "--theorem",
            theorem,
            "--output-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains("PASS"), "missing verdict:\n{text}");
        assert!(text.contains("max empirical/bound ratio"));
        let curve = std::fs::read_to_string(dir.path().join(format!("bound{theorem}.csv")))
            .expect("curve file");
        assert!(curve.starts_with("t,empirical,bound\n"));
        assert!(curve.lines().count() > 100, "curve should cover the run");
    }
}
