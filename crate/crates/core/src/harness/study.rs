//! Monte Carlo replication of the estimator comparison on simulated paths.

use rayon::prelude::*;

use crate::error::{Result, VolError};
use crate::evaluation::{exceedance_ratio_at, imade, made, pe, rade, MeasureReport, QuantileKind, QuantileSource, RepMeasures};
use crate::sde_models::{simulate_cir, simulate_gbm_from, simulate_sv, to_returns, RngStream};

use super::config::{ModelChoice, StudyConfig};
use super::forecast::{out_sample_origins, rolling_forecasts, RollingOutput, SeriesData};

/// Simulates replication `rep` of the configured model.
pub fn simulate_series(cfg: &StudyConfig, rep: usize) -> Result<SeriesData> {
    let rng = RngStream::new(cfg.seed, rep as u64);
    let n = cfg.series_len;
    match cfg.model {
        ModelChoice::Cir => {
            let path = simulate_cir(&cfg.cir, cfg.delta, n, rng)?;
            let returns = to_returns(&path)?.y().to_vec();
            let levels = path.values().to_vec();
            let true_var = levels[..n - 1].iter().map(|r| cfg.cir.variance_at(*r)).collect();
            SeriesData::new(levels, returns, Some(true_var))
        }
        ModelChoice::Sv => {
            let s = simulate_sv(&cfg.sv, cfg.delta, n, rng)?;
            SeriesData::new(s.levels.values().to_vec(), s.returns.y().to_vec(), Some(s.variance_path))
        }
        ModelChoice::Gbm => {
            let path = simulate_gbm_from(&cfg.gbm, cfg.gbm_r0, cfg.delta, n, rng)?;
            let returns = to_returns(&path)?.y().to_vec();
            let levels = path.values().to_vec();
            let true_var = levels[..n - 1].iter().map(|r| cfg.gbm.variance_at(*r)).collect();
            SeriesData::new(levels, returns, Some(true_var))
        }
        ModelChoice::ExternalCsv => Err(VolError::Config(
            "simulation studies need a simulated model".into(),
        )),
    }
}

/// Outcome of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RepOutcome {
    pub rep: usize,
    pub measures: RepMeasures,
    /// Per out-sample step `|sigma2_hat - sigma2|`, one row per step and
    /// one column per estimator; NaN at excluded steps.
    pub abs_err: Vec<Vec<f64>>,
    pub excluded_steps: usize,
    pub no_coverage_steps: usize,
}

/// Measures of every estimator on the usable steps of a rolling output.
/// Steps where any estimator failed are dropped for all of them.
pub fn measure_rep(
    data: &SeriesData,
    out: &RollingOutput,
    q_alpha: f64,
) -> Result<(RepMeasures, Vec<usize>)> {
    let keep: Vec<usize> = (0..out.origins.len())
        .filter(|k| !out.failed_steps.contains(k))
        .collect();
    if keep.is_empty() {
        return Err(VolError::Degenerate("no usable out-sample steps".into()));
    }
    let y: Vec<f64> = keep.iter().map(|k| data.returns[out.origins.start + k]).collect();
    let truth: Option<Vec<f64>> = data
        .true_var
        .as_ref()
        .map(|tv| keep.iter().map(|k| tv[out.origins.start + k]).collect());
    let n_est = out.tracks.len();
    let mut m = RepMeasures {
        imade: truth.as_ref().map(|_| Vec::with_capacity(n_est)),
        made: Vec::with_capacity(n_est),
        rade: Vec::with_capacity(n_est),
        er: Vec::with_capacity(n_est),
        pe: Vec::with_capacity(n_est),
    };
    for track in &out.tracks {
        let s: Vec<f64> = keep.iter().map(|k| track.sigma2[*k]).collect();
        if let (Some(v), Some(t)) = (m.imade.as_mut(), truth.as_ref()) {
            v.push(imade(Some(t.as_slice()), &s)?);
        }
        m.made.push(made(&y, &s)?);
        m.rade.push(rade(&y, &s)?);
        m.er.push(exceedance_ratio_at(&y, &s, q_alpha)?);
        m.pe.push(pe(&y, &s)?);
    }
    Ok((m, keep))
}

/// Runs replication `rep` end to end.
pub fn run_replication(cfg: &StudyConfig, rep: usize) -> Result<RepOutcome> {
    let data = simulate_series(cfg, rep)?;
    let origins = out_sample_origins(cfg, data.returns.len());
    let out = rolling_forecasts(&data, cfg, origins.clone())?;
    let q = QuantileSource::new(QuantileKind::TrueErrorQuantile, cfg.alpha, 0)?.resolve::<f64>(&[])?;
    let (measures, _) = measure_rep(&data, &out, q)?;
    let truth = data.true_var.as_ref().expect("simulated data carries the truth");
    let abs_err = (0..origins.len())
        .map(|k| {
            let excluded = out.failed_steps.contains(&k);
            out.tracks
                .iter()
                .map(|tr| {
                    if excluded {
                        f64::NAN
                    } else {
                        (tr.sigma2[k] - truth[origins.start + k]).abs()
                    }
                })
                .collect()
        })
        .collect();
    Ok(RepOutcome {
        rep,
        measures,
        abs_err,
        excluded_steps: out.failed_steps.len(),
        no_coverage_steps: out.no_coverage_steps,
    })
}

/// Everything a simulation study produces.
#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub config: StudyConfig,
    pub report: MeasureReport,
    pub reps: Vec<RepOutcome>,
    /// Replications that failed outright, with the error text.
    pub failures: Vec<(usize, String)>,
    /// Per out-sample step, per estimator mean `|sigma2_hat - sigma2|`
    /// over replications.
    pub curve: Vec<Vec<f64>>,
}

impl StudyOutput {
    pub fn estimator_ids(&self) -> Vec<String> {
        self.config.estimators.iter().map(|e| e.label().to_string()).collect()
    }
}

/// Runs `cfg.n_reps` independent replications in parallel; replication
/// `k` draws from RNG stream `k`.
pub fn run_simulation_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    if cfg.model == ModelChoice::ExternalCsv {
        return Err(VolError::Config("simulation studies need a simulated model".into()));
    }
    let results: Vec<(usize, Result<RepOutcome>)> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| (rep, run_replication(cfg, rep)))
        .collect();
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(o) => reps.push(o),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    if reps.is_empty() {
        return Err(VolError::Degenerate(format!(
            "all {} replications failed; first error: {}",
            cfg.n_reps,
            failures.first().map(|f| f.1.as_str()).unwrap_or("none")
        )));
    }
    let ids: Vec<String> = cfg.estimators.iter().map(|e| e.label().to_string()).collect();
    let measures: Vec<RepMeasures> = reps.iter().map(|r| r.measures.clone()).collect();
    let report = MeasureReport::from_reps(&ids, &measures, cfg.reference_index(), cfg.trim_upper)?;
    let curve = mean_curve(&reps, ids.len());
    Ok(StudyOutput {
        config: cfg.clone(),
        report,
        reps,
        failures,
        curve,
    })
}

fn mean_curve(reps: &[RepOutcome], n_est: usize) -> Vec<Vec<f64>> {
    let steps = reps.first().map(|r| r.abs_err.len()).unwrap_or(0);
    (0..steps)
        .map(|k| {
            (0..n_est)
                .map(|e| {
                    let (sum, cnt) = reps
                        .iter()
                        .map(|r| r.abs_err[k][e])
                        .filter(|v| v.is_finite())
                        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                    if cnt == 0 {
                        f64::NAN
                    } else {
                        sum / cnt as f64
                    }
                })
                .collect()
        })
        .collect()
}
