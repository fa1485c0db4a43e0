//! Backtest pipeline on a synthetic weekly price file. The golden report
//! was produced by this harness and reviewed once; regenerate with
//! `UPDATE_GOLDEN=1 cargo test --test backtest_golden`.

use std::fs;
use std::path::PathBuf;

use volint::harness::backtest::NaiveDate;
use volint::harness::report::write_backtest;
use volint::harness::{run_backtest, BacktestDataset, StudyConfig};
use volint::sde_models::{simulate_gbm_from, GbmParams, RngStream};

const IN_SAMPLE: usize = 420;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn synthetic_csv() -> String {
    let p = GbmParams::new(0.05, 0.22).unwrap();
    let path = simulate_gbm_from(&p, 100.0, 1.0 / 52.0, 620, RngStream::new(1974, 0)).unwrap();
    let start = NaiveDate::from_ymd_opt(1990, 1, 5).unwrap();
    let mut s = String::from("date,value\n");
    for (i, v) in path.values().iter().enumerate() {
        let d = start + chrono_days(7 * i as u64);
        s.push_str(&format!("{d},{v:.4}\n"));
    }
    s
}

fn chrono_days(n: u64) -> chrono::Days {
    chrono::Days::new(n)
}

fn update() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

#[test]
fn synthetic_backtest_matches_golden_report() {
    let dir = fixture_dir();
    let data_path = dir.join("synthetic_weekly.csv");
    let golden_path = dir.join("synthetic_weekly_report.csv");
    if update() {
        fs::write(&data_path, synthetic_csv()).unwrap();
    }
    let file = fs::File::open(&data_path).unwrap();
    let data = BacktestDataset::from_csv("synthetic_weekly", file, false)
        .unwrap()
        .with_in_sample_len(IN_SAMPLE)
        .unwrap();
    let cfg = StudyConfig::backtest_default();
    let out = run_backtest(&data, &cfg).unwrap();

    assert!(out.report.estimators.iter().all(|e| e.imade.is_none()));
    assert_eq!(out.excluded_steps, 0);
    assert!(out.quantiles.iter().all(|q| *q < -1.0 && *q > -3.0), "{:?}", out.quantiles);

    let tmp = tempfile::tempdir().unwrap();
    let ids: Vec<String> = cfg.estimators.iter().map(|e| e.label().to_string()).collect();
    write_backtest(tmp.path(), "synthetic_weekly", &ids, &out).unwrap();
    let got = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    if update() {
        fs::write(&golden_path, &got).unwrap();
    }
    let want = fs::read_to_string(&golden_path).unwrap();
    assert_eq!(got, want);
    let txt = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(txt.contains("MADE") && !txt.contains("IMADE"));
}

#[test]
fn difference_returns_on_rate_like_data() {
    let file = fs::File::open(fixture_dir().join("synthetic_weekly.csv")).unwrap();
    let data = BacktestDataset::from_csv("x", file, false)
        .unwrap()
        .with_in_sample_end_iso("1998-01-01")
        .unwrap();
    let mut cfg = StudyConfig::backtest_default();
    cfg.return_kind = volint::harness::ReturnKind::Difference;
    let out = run_backtest(&data, &cfg).unwrap();
    assert_eq!(out.report.estimators.len(), 5);
    assert_eq!(out.report.n_reps, 1);
}

#[test]
fn too_short_in_sample_is_an_error() {
    let file = fs::File::open(fixture_dir().join("synthetic_weekly.csv")).unwrap();
    let data = BacktestDataset::from_csv("x", file, false)
        .unwrap()
        .with_in_sample_len(200)
        .unwrap();
    assert!(run_backtest(&data, &StudyConfig::backtest_default()).is_err());
}
