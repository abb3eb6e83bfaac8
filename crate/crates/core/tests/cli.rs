use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn epal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epal")).args(args).output().unwrap()
}

fn simulation1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/simulation1.toml")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = epal(&args);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    output
}

/// Summary text with the wall-time lines removed.
fn summary_without_time(dir: &Path) -> String {
    fs::read_to_string(dir.join("summary.json"))
        .unwrap()
        .lines()
        .filter(|l| !l.contains("wall_time_secs"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn seed_files(dir: &Path, seeds: &[u64]) -> Vec<String> {
    seeds
        .iter()
        .flat_map(|s| {
            let d = dir.join(format!("seed-{s}"));
            [
                fs::read_to_string(d.join("trace.csv")).unwrap(),
                fs::read_to_string(d.join("hypervolume.csv")).unwrap(),
            ]
        })
        .collect()
}

#[test]
fn simulation1_single_seed_is_accurate() {
    let tmp = TempDir::new().unwrap();
    run(&simulation1(), tmp.path(), &["--seeds", "0"]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    let seed = &summary["seeds"][0];
    assert_eq!(seed["metrics"]["eps_accuracy"], 1.0);
    assert_eq!(seed["metrics"]["eps_coverage"], 1.0);
    assert_eq!(summary["schedule"]["reference_h_max"], 24);
}

#[test]
fn negative_delta_exits_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(simulation1()).unwrap().replace("delta = 0.05", "delta = -0.05");
    let config = write(tmp.path(), "bad.toml", &text);
    let output = epal(&["run", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = text.lines().position(|l| l.starts_with("delta")).unwrap() + 1;
    assert!(stderr.contains(&format!("bad.toml:{line}:")), "{stderr}");
    assert!(!tmp.path().join("summary.json").exists());
}

#[test]
fn outputs_are_identical_across_runs_and_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let config = simulation1();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run(&config, &a, &["--seeds", "0..4", "--workers", "1"]);
    run(&config, &b, &["--seeds", "0..4", "--workers", "1"]);
    run(&config, &c, &["--seeds", "0..4", "--workers", "4"]);
    let seeds = [0, 1, 2, 3];
    assert_eq!(seed_files(&a, &seeds), seed_files(&b, &seeds));
    assert_eq!(seed_files(&a, &seeds), seed_files(&c, &seeds));
    // the embedded config records the output directory and worker count
    let strip = |s: String, key: &str| {
        s.lines().filter(|l| !l.contains("output_dir") && !l.contains(key)).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(strip(summary_without_time(&a), "output_dir"), strip(summary_without_time(&b), "output_dir"));
    assert_eq!(strip(summary_without_time(&a), "\"workers\""), strip(summary_without_time(&c), "\"workers\""));
}

#[test]
fn summary_reruns_to_the_same_result() {
    let tmp = TempDir::new().unwrap();
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    run(&simulation1(), &first, &["--seeds", "3"]);
    run(&first.join("summary.json"), &second, &[]);
    assert_eq!(seed_files(&first, &[3]), seed_files(&second, &[3]));
    let strip = |s: String| s.lines().filter(|l| !l.contains("output_dir")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(summary_without_time(&first)), strip(summary_without_time(&second)));
}

#[test]
fn written_csv_files_parse_back() {
    let tmp = TempDir::new().unwrap();
    run(&simulation1(), tmp.path(), &["--seeds", "1", "--budget", "20"]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"][0]["truncated"], true);
    let dir = tmp.path().join("seed-1");

    let mut trace = csv::Reader::from_path(dir.join("trace.csv")).unwrap();
    let header: Vec<String> = trace.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["round", "tau", "S_size", "P_size", "omega_bar", "action", "node_h", "node_i"]);
    let rows: Vec<csv::StringRecord> = trace.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), summary["seeds"][0]["rounds"].as_u64().unwrap() as usize);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), k + 1);
        row[1].parse::<usize>().unwrap();
        row[4].parse::<f64>().unwrap();
        assert!(["refine", "evaluate", "terminate", "truncate"].contains(&&row[5]));
    }
    assert_eq!(&rows.last().unwrap()[5], "truncate");
    assert_eq!(rows.last().unwrap()[1].parse::<usize>().unwrap(), 20);

    let mut curve = csv::Reader::from_path(dir.join("hypervolume.csv")).unwrap();
    let points: Vec<(usize, f64)> = curve
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert!(!points.is_empty());
    assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
}

fn metrics(predicted: &Path, truth: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "metrics",
        "--predicted",
        predicted.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    epal(&args)
}

#[test]
fn metrics_of_truth_against_itself() {
    let tmp = TempDir::new().unwrap();
    let front = write(tmp.path(), "front.csv", "f1,f2\n0.0,1.0\n0.5,0.6\n1.0,0.0\n");
    let output = metrics(&front, &front, &["--epsilon", "0.05"]);
    assert!(output.status.success());
    let report: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["eps_accuracy"], 1.0);
    assert_eq!(report["eps_coverage"], 1.0);
    assert_eq!(report["avg_mse"], 0.0);
}

#[test]
fn metrics_hypervolume_of_two_point_front() {
    let tmp = TempDir::new().unwrap();
    let front = write(tmp.path(), "front.csv", "1,2\n2,1\n");
    let output = metrics(&front, &front, &["--epsilon", "0.1,0.1", "--reference", "0,0"]);
    assert!(output.status.success());
    let report: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["hypervolume"], 3.0);
}

#[test]
fn metrics_rejects_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let front = write(tmp.path(), "front.csv", "1,2\n2,1\n");
    let empty = write(tmp.path(), "empty.csv", "");
    let ragged = write(tmp.path(), "ragged.csv", "1,2\n2,1,0\n");
    let wide = write(tmp.path(), "wide.csv", "1,2,3\n");
    assert_eq!(metrics(&empty, &front, &["--epsilon", "0.1"]).status.code(), Some(2));
    assert_eq!(metrics(&ragged, &front, &["--epsilon", "0.1"]).status.code(), Some(2));
    assert_eq!(metrics(&wide, &front, &["--epsilon", "0.1"]).status.code(), Some(2));
    assert_eq!(metrics(&front, &front, &["--epsilon", "0.1,0.1,0.1"]).status.code(), Some(2));
}

#[test]
fn schedule_prints_reference_and_decreasing_widths() {
    let output = epal(&["schedule", "--config", simulation1().to_str().unwrap()]);
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("h_max computed=") && first.contains("reference=24"), "{first}");
    let rows: Vec<f64> = text
        .lines()
        .skip_while(|l| !l.contains("V_h"))
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(rows.len() > 10);
    assert!(rows.windows(2).all(|w| w[1] < w[0]));
}
