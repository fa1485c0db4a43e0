//! One-step-ahead rolling forecasts over an out-sample.
//!
//! At origin `t` every estimator sees `returns[..t]` and `levels[..=t]`
//! only; the step functions receive truncated slices so later data is
//! unreachable.

use crate::error::{Result, VolError};
use crate::evaluation::ForecastTrack;
use crate::integration::{combine_dynamic, nonbayes_static, CombineMode};
use crate::state_domain::StateDomainFit;
use crate::time_domain::{autocorr_sq, es_variance, exp_smooth, exp_smooth_track, moving_average, EsConfig};

use super::config::{EstimatorId, StudyConfig};

/// Aligned levels and returns: `returns[i]` is the move from `levels[i]`
/// to `levels[i+1]`, `true_var[i]` its true conditional variance.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesData {
    pub levels: Vec<f64>,
    pub returns: Vec<f64>,
    pub true_var: Option<Vec<f64>>,
}

impl SeriesData {
    pub fn new(levels: Vec<f64>, returns: Vec<f64>, true_var: Option<Vec<f64>>) -> Result<Self> {
        if levels.len() != returns.len() + 1 {
            return Err(VolError::LengthMismatch {
                left: levels.len(),
                right: returns.len() + 1,
            });
        }
        if let Some(tv) = &true_var {
            if tv.len() != returns.len() {
                return Err(VolError::LengthMismatch {
                    left: tv.len(),
                    right: returns.len(),
                });
            }
        }
        Ok(Self {
            levels,
            returns,
            true_var,
        })
    }
}

/// Result of the grid-searched smoother.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiProxyEstimate {
    pub sigma2_hat: f64,
    pub lambda: f64,
    /// The grid search could not discriminate; `lambda` fell back to 0.94.
    pub degenerate: bool,
}

/// Fallback smoothing parameter of [`semi_proxy`].
pub const SEMI_FALLBACK_LAMBDA: f64 = 0.94;

/// Exponential smoothing at origin `t` with `lambda` chosen from `grid` by
/// minimising `sum (y_s^2 - es_s)^2` over the trailing `window` origins.
///
/// Needs `t >= 2n`; the criterion window is shortened to `t - n` when
/// less history is available.
pub fn semi_proxy(y: &[f64], t: usize, n: usize, grid: &[f64], window: usize) -> Result<SemiProxyEstimate> {
    if t < 2 * n {
        return Err(VolError::InsufficientHistory {
            needed: 2 * n,
            available: t,
        });
    }
    if grid.is_empty() {
        return Err(VolError::Config("empty lambda grid".into()));
    }
    let len = window.min(t - n).max(n);
    let start = t - len;
    let mut best: Option<(f64, f64)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lam in grid {
        let cfg = EsConfig::new(lam, n)?;
        let track = exp_smooth_track(y, start, t, &cfg)?;
        let sse: f64 = track
            .iter()
            .zip(&y[start..t])
            .map(|(f, v)| {
                let e = v * v - f;
                e * e
            })
            .sum();
        scores.push(sse);
        if sse.is_finite() && best.is_none_or(|(_, b)| sse < b) {
            best = Some((lam, sse));
        }
    }
    let all_equal = scores.windows(2).all(|w| w[0] == w[1]);
    let (lambda, degenerate) = match best {
        Some((lam, _)) if !(all_equal && grid.len() > 1) => (lam, false),
        _ => (SEMI_FALLBACK_LAMBDA, true),
    };
    let sigma2_hat = exp_smooth(y, t, &EsConfig::new(lambda, n)?)?;
    Ok(SemiProxyEstimate {
        sigma2_hat,
        lambda,
        degenerate,
    })
}

/// Components behind the NonBay and Integ forecasts at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepComponents {
    pub es: f64,
    /// State-domain estimate, `None` without coverage.
    pub state: Option<f64>,
    pub w_time: f64,
    pub mode: CombineMode,
}

/// Forecast tracks for every configured estimator over one out-sample.
#[derive(Clone, Debug)]
pub struct RollingOutput {
    pub origins: std::ops::Range<usize>,
    pub tracks: Vec<ForecastTrack<f64>>,
    /// Present when NonBay or Integ is configured.
    pub components: Vec<Option<StepComponents>>,
    /// Steps at which at least one estimator failed (forecast is NaN).
    pub failed_steps: Vec<usize>,
    /// Steps at which the state domain had no coverage.
    pub no_coverage_steps: usize,
}

impl RollingOutput {
    pub fn track(&self, id: EstimatorId) -> Option<&ForecastTrack<f64>> {
        self.tracks.iter().find(|t| t.estimator_id == id.label())
    }
}

/// Rolling state-domain fit refreshed on a fixed schedule.
struct StateSchedule<'a> {
    cfg: &'a StudyConfig,
    first_origin: usize,
    fit: Option<Result<StateDomainFit<f64>>>,
}

impl<'a> StateSchedule<'a> {
    fn new(cfg: &'a StudyConfig, first_origin: usize) -> Self {
        Self {
            cfg,
            first_origin,
            fit: None,
        }
    }

    /// The fit in force at origin `t`, built from pairs `i < t - n`.
    fn at(&mut self, t: usize, levels: &[f64], returns: &[f64]) -> &Result<StateDomainFit<f64>> {
        let due = (t - self.first_origin) % self.cfg.state_refit_every == 0;
        if due || self.fit.is_none() {
            let end = t.saturating_sub(self.cfg.es.n);
            self.fit = Some(StateDomainFit::fit(&levels[..end], &returns[..end], &self.cfg.state));
        }
        self.fit.as_ref().expect("just set")
    }
}

struct StepForecast {
    values: Vec<f64>,
    components: Option<StepComponents>,
    no_coverage: bool,
}

fn forecast_step(
    cfg: &StudyConfig,
    schedule: &mut StateSchedule<'_>,
    t: usize,
    returns: &[f64],
    levels: &[f64],
) -> StepForecast {
    debug_assert_eq!(returns.len(), t);
    debug_assert_eq!(levels.len(), t + 1);
    let needs_state = cfg.estimators.iter().any(EstimatorId::needs_state_domain);
    let es = exp_smooth(returns, t, &cfg.es).ok();

    let mut components = None;
    let mut no_coverage = false;
    let mut nonbay = f64::NAN;
    let mut integ = f64::NAN;
    if needs_state {
        let x_now = levels[t];
        let state = match schedule.at(t, levels, returns) {
            Ok(fit) => match fit.estimate(x_now) {
                Ok(est) => Ok(Some(est)),
                Err(VolError::NoCoverage { .. }) => Ok(None),
                Err(e) => Err(e),
            },
            Err(VolError::NoCoverage { .. }) => Ok(None),
            Err(e) => Err(VolError::Degenerate(e.to_string())),
        };
        let step = (|| -> Result<(f64, f64, StepComponents, bool)> {
            let es = es.ok_or_else(|| VolError::Degenerate("smoother unavailable".into()))?;
            let state = state?;
            let rho = autocorr_sq(returns, t, cfg.max_lag)?;
            let tv = es_variance(es, &cfg.es, &rho)?;
            let combined = combine_dynamic(es, tv.var_hat, state.map(|s| (s.sigma2_hat, s.var_hat)))?;
            let nb = match state {
                Some(s) => nonbayes_static(es, s.sigma2_hat, cfg.es.lambda, cfg.es.n)?.0,
                None => es,
            };
            let comp = StepComponents {
                es,
                state: state.map(|s| s.sigma2_hat),
                w_time: combined.w_time,
                mode: combined.mode,
            };
            Ok((nb, combined.sigma2_hat, comp, state.is_none()))
        })();
        if let Ok((nb, ig, comp, nc)) = step {
            nonbay = nb;
            integ = ig;
            components = Some(comp);
            no_coverage = nc;
        }
    }

    let values = cfg
        .estimators
        .iter()
        .map(|id| match id {
            EstimatorId::Hist => moving_average(returns, t, cfg.hist_window).unwrap_or(f64::NAN),
            EstimatorId::RiskM => es.unwrap_or(f64::NAN),
            EstimatorId::SemiProxy => semi_proxy(returns, t, cfg.es.n, &cfg.semi_grid, cfg.semi_window)
                .map(|s| s.sigma2_hat)
                .unwrap_or(f64::NAN),
            EstimatorId::NonBay => nonbay,
            EstimatorId::Integ => integ,
        })
        .collect();
    StepForecast {
        values,
        components,
        no_coverage,
    }
}

/// Forecasts `returns[t]` for every `t` in `origins` with every configured
/// estimator.
pub fn rolling_forecasts(
    data: &SeriesData,
    cfg: &StudyConfig,
    origins: std::ops::Range<usize>,
) -> Result<RollingOutput> {
    if origins.end > data.returns.len() {
        return Err(VolError::Config("origins extend past the series".into()));
    }
    if origins.start < cfg.min_origin() {
        return Err(VolError::InsufficientHistory {
            needed: cfg.min_origin(),
            available: origins.start,
        });
    }
    let mut schedule = StateSchedule::new(cfg, origins.start);
    let m = origins.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(m); cfg.estimators.len()];
    let mut components = Vec::with_capacity(m);
    let mut failed_steps = Vec::new();
    let mut no_coverage_steps = 0;
    for (k, t) in origins.clone().enumerate() {
        let step = forecast_step(cfg, &mut schedule, t, &data.returns[..t], &data.levels[..=t]);
        if step.values.iter().any(|v| !v.is_finite()) {
            failed_steps.push(k);
        }
        if step.no_coverage {
            no_coverage_steps += 1;
        }
        for (col, v) in columns.iter_mut().zip(step.values) {
            col.push(v);
        }
        components.push(step.components);
    }
    let tracks = cfg
        .estimators
        .iter()
        .zip(columns)
        .map(|(id, sigma2)| ForecastTrack {
            estimator_id: id.label().to_string(),
            sigma2,
        })
        .collect();
    Ok(RollingOutput {
        origins,
        tracks,
        components,
        failed_steps,
        no_coverage_steps,
    })
}

/// Out-sample origins for a series with `series_len` levels and
/// `in_sample_len` of them in-sample.
pub fn out_sample_origins(cfg: &StudyConfig, n_returns: usize) -> std::ops::Range<usize> {
    let m = cfg.out_sample_len().min(n_returns);
    n_returns - m..n_returns
}

/// Single-estimator convenience wrapper over [`rolling_forecasts`].
pub fn rolling_forecast(data: &SeriesData, cfg: &StudyConfig, estimator: EstimatorId) -> Result<ForecastTrack<f64>> {
    let mut single = cfg.clone();
    single.estimators = vec![estimator];
    let origins = out_sample_origins(cfg, data.returns.len());
    let out = rolling_forecasts(data, &single, origins)?;
    Ok(out.tracks.into_iter().next().expect("one estimator"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn persistent_series(n: usize) -> Vec<f64> {
        // slowly varying scale with a deterministic pseudo-noise sign pattern
        (0..n)
            .map(|i| {
                let scale = 1.0 + 0.9 * (i as f64 / 150.0).sin();
                let u = ((i * 2654435761usize) % 1000) as f64 / 1000.0 - 0.5;
                scale * u
            })
            .collect()
    }

    #[test]
    fn singleton_grid_is_riskm() {
        let y = persistent_series(400);
        let s = semi_proxy(&y, 300, 52, &[0.94], 250).unwrap();
        let es = exp_smooth(&y, 300, &EsConfig::new(0.94, 52).unwrap()).unwrap();
        assert_eq!(s.sigma2_hat, es);
        assert!(!s.degenerate);
    }

    #[test]
    fn grid_choice_matches_exhaustive_oracle() {
        let y = persistent_series(600);
        let grid = [0.90, 0.92, 0.94, 0.96, 0.98];
        let t = 500;
        let s = semi_proxy(&y, t, 52, &grid, 250).unwrap();
        // exhaustive direct evaluation
        let mut best = (0.0, f64::INFINITY);
        for &lam in &grid {
            let cfg = EsConfig::new(lam, 52).unwrap();
            let sse: f64 = (t - 250..t)
                .map(|s| {
                    let e = y[s] * y[s] - exp_smooth(&y, s, &cfg).unwrap();
                    e * e
                })
                .sum();
            if sse < best.1 {
                best = (lam, sse);
            }
        }
        assert_eq!(s.lambda, best.0);
        assert_eq!(s.lambda, 0.98, "persistent scale should favour long memory");
    }

    #[test]
    fn degenerate_grid_falls_back() {
        let y = vec![0.0; 200];
        let s = semi_proxy(&y, 150, 20, &[0.9, 0.95], 100).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.lambda, SEMI_FALLBACK_LAMBDA);
        assert!(semi_proxy(&y, 30, 20, &[0.9], 100).is_err());
    }

    #[test]
    fn series_data_validation() {
        assert!(SeriesData::new(vec![1.0, 2.0], vec![1.0], None).is_ok());
        assert!(SeriesData::new(vec![1.0], vec![1.0], None).is_err());
        assert!(SeriesData::new(vec![1.0, 2.0], vec![1.0], Some(vec![])).is_err());
    }
}
