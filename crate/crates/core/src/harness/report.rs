//! File outputs of studies and backtests.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::evaluation::{MeasureKind, RepMeasures};

use super::backtest::BacktestOutput;
use super::study::StudyOutput;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const PER_REP_CSV: &str = "per_rep.csv";
pub const CURVE_CSV: &str = "fig2_curve.csv";

const MEASURES: [MeasureKind; 5] = [
    MeasureKind::Imade,
    MeasureKind::Made,
    MeasureKind::Rade,
    MeasureKind::Er,
    MeasureKind::Pe,
];

/// `rep,estimator,<measures...>,excluded_steps,no_coverage_steps`.
/// Values use the shortest representation that round-trips, so report
/// statistics can be recomputed exactly.
pub fn write_per_rep<W: Write>(
    w: W,
    ids: &[String],
    reps: &[(usize, &RepMeasures, usize, usize)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let kinds: Vec<MeasureKind> = MEASURES
        .into_iter()
        .filter(|k| reps.iter().all(|r| r.1.get(*k).is_some()))
        .collect();
    let mut header = vec!["rep".to_string(), "estimator".to_string()];
    header.extend(kinds.iter().map(|k| k.label().to_ascii_lowercase()));
    header.extend(["excluded_steps".to_string(), "no_coverage_steps".to_string()]);
    wtr.write_record(&header)?;
    for (rep, m, excluded, no_cov) in reps {
        for (e, id) in ids.iter().enumerate() {
            let mut row = vec![rep.to_string(), id.clone()];
            row.extend(kinds.iter().map(|k| format!("{:e}", m.get(*k).expect("filtered")[e])));
            row.push(excluded.to_string());
            row.push(no_cov.to_string());
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `step,<estimator...>` mean absolute forecast error per out-sample step.
pub fn write_curve<W: Write>(w: W, ids: &[String], curve: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["step".to_string()];
    header.extend(ids.iter().cloned());
    wtr.write_record(&header)?;
    for (k, row) in curve.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.12e}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn study_text(out: &StudyOutput) -> String {
    let mut s = out.report.to_text_table();
    let excluded: usize = out.reps.iter().map(|r| r.excluded_steps).sum();
    let no_cov: usize = out.reps.iter().map(|r| r.no_coverage_steps).sum();
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "model {:?}, {} replications ({} failed), seed {}",
        out.config.model,
        out.config.n_reps,
        out.failures.len(),
        out.config.seed
    );
    let _ = writeln!(s, "excluded steps {excluded}, state-domain no-coverage steps {no_cov}");
    for (rep, msg) in &out.failures {
        let _ = writeln!(s, "replication {rep} failed: {msg}");
    }
    s
}

/// Writes all study outputs into `dir`, creating it if needed.
pub fn write_study(dir: &Path, out: &StudyOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let ids = out.estimator_ids();
    let paths: Vec<PathBuf> = [REPORT_CSV, REPORT_TXT, PER_REP_CSV, CURVE_CSV]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    out.report.write_csv(fs::File::create(&paths[0])?)?;
    fs::write(&paths[1], study_text(out))?;
    let reps: Vec<_> = out
        .reps
        .iter()
        .map(|r| (r.rep, &r.measures, r.excluded_steps, r.no_coverage_steps))
        .collect();
    write_per_rep(fs::File::create(&paths[2])?, &ids, &reps)?;
    write_curve(fs::File::create(&paths[3])?, &ids, &out.curve)?;
    Ok(paths)
}

/// Writes backtest outputs (report and single-row dump) into `dir`.
pub fn write_backtest(dir: &Path, name: &str, ids: &[String], out: &BacktestOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [REPORT_CSV, REPORT_TXT, PER_REP_CSV].iter().map(|f| dir.join(f)).collect();
    out.report.write_csv(fs::File::create(&paths[0])?)?;
    let mut s = out.report.to_text_table();
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{name}: {} out-sample steps, {} excluded, {} forward-filled values",
        out.forecasts.origins.len() - (out.out_start - out.forecasts.origins.start),
        out.excluded_steps,
        out.filled_rows.len()
    );
    for (id, q) in ids.iter().zip(&out.quantiles) {
        let _ = writeln!(s, "{id} residual quantile {q:.6}");
    }
    fs::write(&paths[1], s)?;
    write_per_rep(
        fs::File::create(&paths[2])?,
        ids,
        &[(0, &out.measures, out.excluded_steps, out.forecasts.no_coverage_steps)],
    )?;
    Ok(paths)
}
