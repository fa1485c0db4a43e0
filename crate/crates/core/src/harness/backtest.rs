//! Backtests of observed level series.

use std::io::Read;

pub use chrono::NaiveDate;

use crate::error::{Result, VolError};
use crate::evaluation::{
    empirical_quantile, exceedance_ratio_at, made, pe, rade, MeasureReport, RepMeasures, MIN_RESIDUAL_WINDOW,
};

use super::config::{ReturnKind, StudyConfig};
use super::forecast::{rolling_forecasts, RollingOutput, SeriesData};

/// An ingested `date,value` series.
#[derive(Clone, Debug, PartialEq)]
pub struct BacktestDataset {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub levels: Vec<f64>,
    /// Number of leading levels that are in-sample.
    pub in_sample_end: usize,
    /// Data rows (1-based, header excluded) whose value was forward-filled.
    pub filled_rows: Vec<usize>,
}

/// Fraction of levels treated as in-sample when no split is given.
pub const DEFAULT_IN_SAMPLE_FRACTION: f64 = 2.0 / 3.0;

fn is_missing(v: &str) -> bool {
    let v = v.trim();
    v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan") || v == "."
}

impl BacktestDataset {
    /// Reads a `date,value` CSV with ISO dates. Missing values are
    /// rejected unless `forward_fill` is set. Every problem found is
    /// reported, each with its row number.
    pub fn from_csv<R: Read>(name: impl Into<String>, r: R, forward_fill: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "date" || &headers[1] != "value" {
            return Err(VolError::Ingest {
                row: 0,
                message: format!("expected header `date,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut problems: Vec<(usize, String)> = Vec::new();
        let mut dates = Vec::new();
        let mut levels: Vec<f64> = Vec::new();
        let mut filled_rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let row = k + 1;
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    problems.push((row, e.to_string()));
                    continue;
                }
            };
            if rec.len() != 2 {
                problems.push((row, format!("expected 2 fields, found {}", rec.len())));
                continue;
            }
            let date = match NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d") {
                Ok(d) => d,
                Err(_) => {
                    problems.push((row, format!("`{}` is not an ISO date", &rec[0])));
                    continue;
                }
            };
            if let Some(prev) = dates.last() {
                if date <= *prev {
                    problems.push((row, format!("date {date} does not follow {prev}")));
                }
            }
            let value = if is_missing(&rec[1]) {
                match (forward_fill, levels.last()) {
                    (true, Some(prev)) => {
                        filled_rows.push(row);
                        *prev
                    }
                    (true, None) => {
                        problems.push((row, "missing first value cannot be forward-filled".into()));
                        f64::NAN
                    }
                    (false, _) => {
                        problems.push((row, "missing value".into()));
                        f64::NAN
                    }
                }
            } else {
                match rec[1].parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        problems.push((row, format!("`{}` is not a finite number", &rec[1])));
                        f64::NAN
                    }
                }
            };
            dates.push(date);
            levels.push(value);
        }
        if let Some((row, _)) = problems.first() {
            let message = problems
                .iter()
                .map(|(r, m)| format!("row {r}: {m}"))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(VolError::Ingest { row: *row, message });
        }
        if levels.len() < 3 {
            return Err(VolError::TooFewPoints {
                needed: 3,
                got: levels.len(),
            });
        }
        let in_sample_end = ((levels.len() as f64) * DEFAULT_IN_SAMPLE_FRACTION).floor() as usize;
        Ok(Self {
            name: name.into(),
            dates,
            levels,
            in_sample_end,
            filled_rows,
        })
    }

    /// Places the in-sample boundary after the first `n` levels.
    pub fn with_in_sample_len(mut self, n: usize) -> Result<Self> {
        if n < 2 || n >= self.levels.len() {
            return Err(VolError::Config(format!(
                "in-sample length {n} must lie in [2, {})",
                self.levels.len()
            )));
        }
        self.in_sample_end = n;
        Ok(self)
    }

    /// Places the in-sample boundary after the last level dated on or
    /// before `date`.
    pub fn with_in_sample_end_date(self, date: NaiveDate) -> Result<Self> {
        let n = self.dates.partition_point(|d| *d <= date);
        self.with_in_sample_len(n)
    }

    /// [`Self::with_in_sample_end_date`] with an ISO `YYYY-MM-DD` string.
    pub fn with_in_sample_end_iso(self, date: &str) -> Result<Self> {
        let d = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|_| VolError::Config(format!("`{date}` is not an ISO date")))?;
        self.with_in_sample_end_date(d)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Scaled returns and the aligned levels as state variable.
    pub fn series(&self, kind: ReturnKind, delta: f64) -> Result<SeriesData> {
        let scale = 1.0 / delta.sqrt();
        let returns: Vec<f64> = match kind {
            ReturnKind::Log => {
                if let Some(k) = self.levels.iter().position(|v| *v <= 0.0) {
                    return Err(VolError::Ingest {
                        row: k + 1,
                        message: "log returns need strictly positive values".into(),
                    });
                }
                self.levels.windows(2).map(|w| (w[1] / w[0]).ln() * scale).collect()
            }
            ReturnKind::Difference => self.levels.windows(2).map(|w| (w[1] - w[0]) * scale).collect(),
        };
        SeriesData::new(self.levels.clone(), returns, None)
    }
}

/// Result of [`run_backtest`].
#[derive(Clone, Debug)]
pub struct BacktestOutput {
    pub report: MeasureReport,
    pub measures: RepMeasures,
    /// Forecasts over the calibration window followed by the out-sample.
    pub forecasts: RollingOutput,
    /// First out-sample origin (return index).
    pub out_start: usize,
    /// Per-estimator lower-tail quantile of the standardized in-sample
    /// residuals.
    pub quantiles: Vec<f64>,
    pub excluded_steps: usize,
    pub filled_rows: Vec<usize>,
}

/// One-step-ahead backtest of every configured estimator.
///
/// ER uses, per estimator, the empirical `alpha` quantile of
/// `y_t / sigma_hat_t` over the last `residual_window` in-sample origins.
pub fn run_backtest(data: &BacktestDataset, cfg: &StudyConfig) -> Result<BacktestOutput> {
    cfg.validate()?;
    let series = data.series(cfg.return_kind, cfg.delta)?;
    if series.returns.iter().all(|y| *y == 0.0) {
        return Err(VolError::Degenerate(
            "all returns are zero; volatility estimators are undefined".into(),
        ));
    }
    let n_ret = series.returns.len();
    let out_start = data.in_sample_end - 1;
    if out_start >= n_ret {
        return Err(VolError::Config("no out-sample observations".into()));
    }
    let calib_start = out_start.checked_sub(cfg.residual_window).filter(|s| *s >= cfg.min_origin());
    let Some(calib_start) = calib_start else {
        return Err(VolError::InsufficientHistory {
            needed: cfg.min_origin() + cfg.residual_window + 1,
            available: data.in_sample_end,
        });
    };
    let forecasts = rolling_forecasts(&series, cfg, calib_start..n_ret)?;
    let offset = out_start - calib_start;
    let failed = |k: usize| forecasts.failed_steps.binary_search(&k).is_ok();

    let mut quantiles = Vec::with_capacity(forecasts.tracks.len());
    for track in &forecasts.tracks {
        let z: Vec<f64> = (0..offset)
            .filter(|k| !failed(*k) && track.sigma2[*k] > 0.0)
            .map(|k| series.returns[calib_start + k] / track.sigma2[k].sqrt())
            .collect();
        if z.len() < MIN_RESIDUAL_WINDOW {
            return Err(VolError::QuantileUnavailable(format!(
                "{}: only {} usable in-sample residuals",
                track.estimator_id,
                z.len()
            )));
        }
        quantiles.push(empirical_quantile(&z, cfg.alpha, z.len())?);
    }

    let keep: Vec<usize> = (offset..forecasts.origins.len()).filter(|k| !failed(*k)).collect();
    if keep.is_empty() {
        return Err(VolError::Degenerate("no usable out-sample steps".into()));
    }
    let y: Vec<f64> = keep.iter().map(|k| series.returns[calib_start + k]).collect();
    let mut measures = RepMeasures {
        imade: None,
        made: Vec::new(),
        rade: Vec::new(),
        er: Vec::new(),
        pe: Vec::new(),
    };
    for (track, q) in forecasts.tracks.iter().zip(&quantiles) {
        let s: Vec<f64> = keep.iter().map(|k| track.sigma2[*k]).collect();
        measures.made.push(made(&y, &s)?);
        measures.rade.push(rade(&y, &s)?);
        measures.er.push(exceedance_ratio_at(&y, &s, *q)?);
        measures.pe.push(pe(&y, &s)?);
    }
    let ids: Vec<String> = cfg.estimators.iter().map(|e| e.label().to_string()).collect();
    let report = MeasureReport::from_reps(&ids, std::slice::from_ref(&measures), cfg.reference_index(), cfg.trim_upper)?;
    let excluded_steps = (offset..forecasts.origins.len()).filter(|k| failed(*k)).count();
    Ok(BacktestOutput {
        report,
        measures,
        forecasts,
        out_start,
        quantiles,
        excluded_steps,
        filled_rows: data.filled_rows.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(rows: &[(&str, &str)]) -> String {
        let mut s = String::from("date,value\n");
        for (d, v) in rows {
            s.push_str(&format!("{d},{v}\n"));
        }
        s
    }

    #[test]
    fn ingest_reports_rows() {
        let text = csv_of(&[("2001-01-01", "1.0"), ("2001-01-08", ""), ("2001-01-05", "1.2"), ("bad", "1")]);
        let err = BacktestDataset::from_csv("x", text.as_bytes(), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("row 4"), "{msg}");
    }

    #[test]
    fn forward_fill_flags_rows() {
        let text = csv_of(&[("2001-01-01", "1.0"), ("2001-01-08", "NA"), ("2001-01-15", "1.2")]);
        let d = BacktestDataset::from_csv("x", text.as_bytes(), true).unwrap();
        assert_eq!(d.levels, vec![1.0, 1.0, 1.2]);
        assert_eq!(d.filled_rows, vec![2]);
    }

    #[test]
    fn bad_header_rejected() {
        let err = BacktestDataset::from_csv("x", "day,price\n2001-01-01,1\n".as_bytes(), false).unwrap_err();
        assert!(matches!(err, VolError::Ingest { row: 0, .. }));
    }

    #[test]
    fn constant_series_aborts() {
        let rows: Vec<(String, String)> = (0..600)
            .map(|i| {
                let d = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap() + chrono::Days::new(7 * i);
                (d.to_string(), "100".to_string())
            })
            .collect();
        let mut text = String::from("date,value\n");
        for (d, v) in &rows {
            text.push_str(&format!("{d},{v}\n"));
        }
        let d = BacktestDataset::from_csv("flat", text.as_bytes(), false).unwrap();
        let err = run_backtest(&d, &StudyConfig::backtest_default()).unwrap_err();
        assert!(matches!(err, VolError::Degenerate(_)));
    }

    #[test]
    fn split_by_date() {
        let text = csv_of(&[("2001-01-01", "1"), ("2001-01-08", "2"), ("2001-01-15", "3"), ("2001-01-22", "4")]);
        let d = BacktestDataset::from_csv("x", text.as_bytes(), false).unwrap();
        let d = d.with_in_sample_end_date(NaiveDate::from_ymd_opt(2001, 1, 10).unwrap()).unwrap();
        assert_eq!(d.in_sample_end, 2);
    }
}
