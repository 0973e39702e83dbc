use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lieode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lieode"))
        .args(args)
        .env("LIEODE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn decay_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("decay.json");
    fs::write(
        &path,
        format!(
            r#"{{
  "system": {{"dim": 1, "rhs": ["-y1"], "y0": [1.0]}},
  "train_interval": [0, 1],
  "n_points": 11,
  "hidden_units": 5,
  "optimizer": {{"max_iters": 200}}{extra}
}}"#
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn train_food_chain_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fc");
    let run = lieode(&["train", "--preset", "food_chain", "--restarts", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let (header, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(header, ["t", "yhat1", "yhat2", "yhat3", "yref1", "yref2", "yref3"]);
    assert_eq!(rows.len(), 100);
    assert_eq!(&rows[0][..4], &[0.0, 0.5, 1.0, 2.0]);

    let (_, ext) = csv_rows(&out.join("extrapolation.csv"));
    assert_eq!(ext.len(), 200);
    assert_eq!(ext.last().unwrap()[0], 3.5);

    let (hist_header, hist) = csv_rows(&out.join("loss_history.csv"));
    assert_eq!(hist_header, ["iter", "loss", "grad_norm"]);
    assert_eq!(hist[0][0], 0.0);

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["system"], "food_chain");
    assert_eq!(report["reported"]["loss"], 7.303e-5);
    assert!(report["final_loss"].as_f64().unwrap() <= 1e-3);
    assert_eq!(report["config"]["restarts"], 1);
    assert_eq!(report["nets"].as_array().unwrap().len(), 3);
    assert_eq!(report["nets"][0]["m"], 100);
    assert!(report["timing"]["train_seconds"].is_number());
}

#[test]
fn train_report_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = decay_config(tmp.path(), "");
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let run = lieode(&["train", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
        let mut v: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        // the output directory is part of the echoed config
        v["config"].as_object_mut().unwrap().remove("output_dir");
        reports.push(serde_json::to_string(&v).unwrap());
        let a = fs::read(out.join("trajectory.csv")).unwrap();
        assert!(!a.is_empty());
    }
    assert_eq!(reports[0], reports[1]);
    assert!(reports[0].contains("\"seed\":7"));
}

#[test]
fn malformed_config_exits_one_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, "{\n  \"system\": \"lorenz\",\n  \"n_points\": ,\n}").unwrap();
    let run = lieode(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&run), 1);
    assert!(stderr(&run).contains("line 3"), "{}", stderr(&run));

    fs::write(&path, r#"{"system": "lorenz", "hidden_units": 0}"#).unwrap();
    let run = lieode(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&run), 1);
    assert!(stderr(&run).contains("hidden_units"));
}

#[test]
fn missing_source_and_unknown_preset_exit_one() {
    assert_eq!(code(&lieode(&["train"])), 1);
    assert_eq!(code(&lieode(&["train", "--preset", "duffing"])), 1);
    assert_eq!(code(&lieode(&["frobnicate"])), 1);
    assert_eq!(code(&lieode(&["--help"])), 0);
}

#[test]
fn reference_lorenz_covers_both_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lorenz");
    let run = lieode(&["reference", "--preset", "lorenz", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (header, rows) = csv_rows(&out.join("reference.csv"));
    assert_eq!(header, ["t", "y1", "y2", "y3"]);
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    // every training node on [0, 0.5] and the test grid end point
    for i in 0..40 {
        let t = 0.5 * i as f64 / 39.0;
        assert!(times.iter().any(|&s| (s - t).abs() < 1e-15), "missing {t}");
    }
    assert_eq!(*times.last().unwrap(), 0.6);
    assert_eq!(&rows[0][1..], &[1.0, 5.0, 10.0]);
}

#[test]
fn reference_decay_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = decay_config(tmp.path(), "");
    let out = tmp.path().join("ref");
    let run = lieode(&["reference", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (_, rows) = csv_rows(&out.join("reference.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - (-1.0f64).exp()).abs() <= 1e-8);
}

#[test]
fn reference_rejects_reversed_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = decay_config(tmp.path(), r#", "test_interval": [2, 1]"#);
    let run = lieode(&["reference", "--config", &cfg]);
    assert_eq!(code(&run), 1);
    assert!(stderr(&run).contains("test_interval"));
}

#[test]
fn compare_writes_one_history_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = decay_config(tmp.path(), "");
    let out = tmp.path().join("cmp");
    let run = lieode(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    for (i, m) in ["bfgs", "gd"].iter().enumerate() {
        let (_, hist) = csv_rows(&out.join(format!("loss_history_{m}.csv")));
        let iters = summary["runs"][i]["iterations"].as_u64().unwrap() as usize;
        assert_eq!(hist.len(), iters + 1);
        for (k, row) in hist.iter().enumerate() {
            assert_eq!(row[0], k as f64);
        }
    }

    let empty = lieode(&["compare", "--config", &cfg, "--methods", ""]);
    assert_eq!(code(&empty), 1);
    let unknown = lieode(&["compare", "--config", &cfg, "--methods", "adam"]);
    assert_eq!(code(&unknown), 1);
}

#[test]
fn numerical_failure_exits_two() {
    // log(y1) leaves its domain as soon as the state goes negative
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("blowup.json");
    fs::write(
        &path,
        r#"{"system": {"dim": 1, "rhs": ["log(y1 - 2)"], "y0": [1.0]}, "n_points": 5, "hidden_units": 2}"#,
    )
    .unwrap();
    let out = tmp.path().join("blow");
    let run = lieode(&["train", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 2, "{}", stderr(&run));
    assert!(out.join("report.json").exists());
}
