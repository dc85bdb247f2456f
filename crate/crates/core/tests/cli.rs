//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_private-ratio"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn weighted_rows(n: usize) -> String {
    let mut body = String::from("y,s,w\n");
    for i in 0..n {
        let s = (i % 10) as f64 / 10.0 + 0.05;
        let y = u8::from(i % 3 != 0);
        let w = 0.5 + (i % 4) as f64 * 0.5;
        body.push_str(&format!("{y},{s},{w}\n"));
    }
    body
}

fn json(out: &[u8]) -> serde_json::Value {
    serde_json::from_slice(out).expect("valid JSON")
}

#[test]
fn huge_epsilon_matches_public_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "y,s\n1,0.8\n0,0.3\n");
    let out = run(&[
        "estimate",
        "--input",
        &input,
        "--epsilon",
        "1e6",
        "--scale",
        "ratio",
        "--include-public",
        "--acknowledge-non-private",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out.stdout);
    let public = report["public"][0]["point"].as_f64().unwrap();
    assert!((public - 1.1).abs() < 1e-12);
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 3);
    for e in estimates {
        let point = e["point"].as_f64().unwrap();
        assert!((point - public).abs() < 1e-3, "{point}");
    }
}

#[test]
fn public_output_requires_acknowledgment() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "y,s\n1,0.8\n0,0.3\n");
    let out = run(&[
        "estimate",
        "--input",
        &input,
        "--epsilon",
        "1",
        "--include-public",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", &weighted_rows(2000));
    let args = [
        "estimate",
        "--input",
        &input,
        "--epsilon",
        "2",
        "--w-bounds",
        "0.5,2",
        "--seed",
        "42",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let report = json(&a.stdout);
    // two scales, three methods each
    assert_eq!(report["estimates"].as_array().unwrap().len(), 6);
    assert_eq!(report["released"]["profile"], "binary6");
}

#[test]
fn malformed_row_exits_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "y,s\n1,0.5\n0,oops\n");
    let out = run(&["estimate", "--input", &input, "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = json(&out.stderr);
    assert_eq!(err["error"]["kind"], "parse");
    assert_eq!(err["error"]["line"], 3);
    assert!(out.stdout.is_empty());
}

#[test]
fn degenerate_release_exits_with_status_3() {
    // Two records at a tiny budget: a noisy sum goes non-positive.
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "y,s\n1,0.8\n0,0.3\n");
    let out = run(&[
        "estimate",
        "--input",
        &input,
        "--epsilon",
        "0.01",
        "--seed",
        "1",
    ]);
    let err = json(&out.stderr);
    assert_eq!(out.status.code(), Some(3), "{err}");
    assert!(err["error"]["kind"]
        .as_str()
        .unwrap()
        .starts_with("degenerate_"));
}

#[test]
fn out_of_bounds_record_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "y,s,w\n1,0.5,1\n0,0.2,9\n");
    let out = run(&[
        "estimate",
        "--input",
        &input,
        "--epsilon",
        "1",
        "--w-bounds",
        "0.5,2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["kind"], "bounds_violation");
}

#[test]
fn delta_contract_depends_on_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let common = [
        "simulate",
        "--replications",
        "2",
        "--epsilon",
        "1",
        "--delta",
        "0",
        "--output-dir",
        out_dir,
    ];
    let laplace = bin()
        .args(common)
        .args(["--mechanism", "laplace"])
        .output()
        .unwrap();
    assert!(
        laplace.status.success(),
        "{}",
        String::from_utf8_lossy(&laplace.stderr)
    );
    let gaussian = bin()
        .args(common)
        .args(["--mechanism", "gaussian"])
        .output()
        .unwrap();
    assert_eq!(gaussian.status.code(), Some(2));
}

#[test]
fn single_replication_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run(&[
        "simulate",
        "--replications",
        "1",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

#[test]
fn default_grid_has_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--replications",
        "3",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv =
        std::fs::read_to_string(dir.path().join("unweighted_n5000_gaussian_ratio.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "method,epsilon,width,coverage,score,effective_n,refusals"
    );
    // public row plus four epsilons times three methods
    assert_eq!(lines.len(), 1 + 13);
    assert!(lines[1].starts_with("public,,"));
    assert!(dir.path().join("report.json").exists());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("public method"));
}

#[test]
fn simulate_output_is_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let sub = dir.path().join(threads);
        let out = run(&[
            "simulate",
            "--replications",
            "40",
            "--weighted",
            "--scale",
            "both",
            "--threads",
            threads,
            "--output-dir",
            sub.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        files.push((
            std::fs::read(sub.join("weighted_n5000_gaussian_ratio.csv")).unwrap(),
            std::fs::read(sub.join("weighted_n5000_gaussian_log.csv")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_file_drives_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "grid.json",
        r#"[{"n": 200, "epsilons": [1.0], "replications": 5},
            {"n": 300, "epsilons": [2.0], "replications": 5, "mechanism": "laplace", "delta": 0.0}]"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        &config,
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("unweighted_n200_gaussian_ratio.csv").exists());
    assert!(out_dir.join("unweighted_n300_laplace_ratio.csv").exists());
}
