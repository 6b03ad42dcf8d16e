use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use intraday_fts::manifest::Manifest;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intraday-fts"))
        .arg("-q")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulated prices: `n` days on a `tau`-point grid.
fn simulated(dir: &Path, n: usize, tau: usize) -> String {
    let out = dir.join("sim");
    ok(&[
        "simulate",
        "--seed",
        "3",
        "-n",
        &n.to_string(),
        "--tau",
        &tau.to_string(),
        "-o",
        &s(&out),
    ]);
    s(&out.join("prices.csv"))
}

#[test]
fn long_format_is_reshaped_to_wide() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("date,time,price\n");
    for day in ["2024-01-02", "2024-01-03"] {
        for (i, t) in ["10:00", "10:05", "10:10", "10:15", "10:20"].iter().enumerate() {
            text.push_str(&format!("{day},{t},{}\n", 100.0 + i as f64));
        }
    }
    let input = dir.path().join("long.csv");
    fs::write(&input, text).unwrap();
    let out = dir.path().join("out");
    ok(&["ingest", "-i", &s(&input), "-o", &s(&out)]);
    let wide = fs::read_to_string(out.join("prices.csv")).unwrap();
    let lines: Vec<&str> = wide.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
    assert!(lines[0].starts_with("date,10:00"));
    let summary = json(out.join("summary.json"));
    assert_eq!((summary["n"].as_u64(), summary["tau"].as_u64()), (Some(2), Some(5)));
    assert_eq!(summary["schema_version"], 1);
}

#[test]
fn bad_price_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "date,time,price\nd1,10:00,100\nd1,10:05,abc\nd1,10:10,101\n").unwrap();
    let out = run(&["ingest", "-i", &s(&input), "-o", &s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:") && err.contains("abc"), "{err}");
}

#[test]
fn interior_gap_is_interpolated() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("wide.csv");
    fs::write(
        &input,
        "date,10:00,10:05,10:10,10:15\nd1,100,101,102,103\nd2,100,,102,101\nd3,99,100,101,102\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["ingest", "-i", &s(&input), "-o", &s(&out)]);
    let summary = json(out.join("summary.json"));
    assert_eq!(summary["interpolated_cells"], 1);
    let wide = fs::read_to_string(out.join("prices.csv")).unwrap();
    assert!(wide.lines().nth(2).unwrap().starts_with("d2,100,101,102,101"), "{wide}");
}

#[test]
fn forecast_is_deterministic_with_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let prices = simulated(dir.path(), 80, 15);
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&["forecast", "-i", &prices, "-o", &s(&out), "-B", "60", "--seed", "4"]);
        files.push(fs::read(out.join("forecast.csv")).unwrap());
        Manifest::load(&out).unwrap().verify(&out).unwrap();
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    assert_eq!(text.lines().count() - 1, 14);
}

#[test]
fn single_replicate_gives_flagged_zero_width_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let prices = simulated(dir.path(), 60, 12);
    let out = dir.path().join("fc");
    ok(&["forecast", "-i", &prices, "-o", &s(&out), "-B", "1"]);
    let doc = json(out.join("forecast.json"));
    assert_eq!(doc["flags"]["few_replicates"], true);
    for iv in doc["pointwise"].as_array().unwrap() {
        assert_eq!(iv["lower"], iv["upper"]);
    }
}

#[test]
fn backtest_reports_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let prices = simulated(dir.path(), 90, 12);
    let common = [
        "-B",
        "50",
        "--train",
        "60",
        "--validation",
        "15",
        "--test",
        "8",
        "--periods",
        "3,6",
    ];

    let ts_only = dir.path().join("ts");
    let mut args = vec!["backtest", "-i", prices.as_str(), "-o"];
    let ts_s = s(&ts_only);
    args.push(&ts_s);
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--methods", "ts"]);
    ok(&args);
    assert!(ts_only.join("table_full_curve.csv").exists());
    assert!(!ts_only.join("table_updating.csv").exists());
    Manifest::load(&ts_only).unwrap().verify(&ts_only).unwrap();

    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let out_s = s(&out);
        let mut args = vec!["backtest", "-i", prices.as_str(), "-o", out_s.as_str()];
        args.extend_from_slice(&common);
        ok(&args);
        for f in [
            "table_full_curve.csv",
            "table_updating.csv",
            "updating_by_period.csv",
            "report.json",
        ] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        let manifest = json(out.join("manifest.json"));
        assert_eq!(manifest["seed"].as_u64(), Some(0));
        assert!(manifest["config_hash"].as_str().is_some_and(|h| h.len() == 64));
        Manifest::load(&out).unwrap().verify(&out).unwrap();
        reports.push(fs::read(out.join("table_updating.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["forecast", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("missing.csv"));
    assert_eq!(
        run(&["ingest", "-i", &missing, "-o", &s(dir.path())]).status.code(),
        Some(2)
    );
    // Too few days for the requested split is a data error, reported before any fitting.
    let prices = simulated(dir.path(), 30, 10);
    let out = run(&[
        "backtest",
        "-i",
        &prices,
        "-o",
        &s(&dir.path().join("bt")),
        "--train",
        "25",
        "--test",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need"));
}

#[test]
fn constant_prices_are_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("date,10:00,10:05,10:10,10:15,10:20\n");
    for d in 0..30 {
        text.push_str(&format!("d{d:02},100,100,100,100,100\n"));
    }
    let input = dir.path().join("flat.csv");
    fs::write(&input, text).unwrap();
    let out = run(&[
        "forecast",
        "-i",
        &s(&input),
        "-o",
        &s(&dir.path().join("fc")),
        "-B",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
