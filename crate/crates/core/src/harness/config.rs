use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolError};
use crate::sde_models::{CirParams, GbmParams, SvParams};
use crate::state_domain::StateDomainConfig;
use crate::time_domain::{EsConfig, DEFAULT_MAX_LAG};

/// Replications used by `--full-scale`.
pub const FULL_SCALE_REPS: usize = 600;

/// Replications used by default.
pub const DESK_SCALE_REPS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Cir,
    Sv,
    Gbm,
    #[serde(rename = "external")]
    ExternalCsv,
}

impl FromStr for ModelChoice {
    type Err = VolError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cir" => Ok(Self::Cir),
            "sv" => Ok(Self::Sv),
            "gbm" => Ok(Self::Gbm),
            "external" | "csv" => Ok(Self::ExternalCsv),
            other => Err(VolError::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// The five competing estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorId {
    /// Moving average of squared returns over the past year.
    Hist,
    /// Exponential smoothing with the configured lambda.
    RiskM,
    /// Exponential smoothing with lambda picked from a grid by trailing
    /// one-step prediction error. Stands in for a semiparametric
    /// smoother; it is not that estimator.
    SemiProxy,
    /// Static shrinkage of the smoother toward the state-domain estimate.
    NonBay,
    /// Dynamic variance-ratio integration of smoother and state domain.
    Integ,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 5] = [Self::Hist, Self::RiskM, Self::SemiProxy, Self::NonBay, Self::Integ];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Hist => "Hist",
            Self::RiskM => "RiskM",
            Self::SemiProxy => "SemiProxy",
            Self::NonBay => "NonBay",
            Self::Integ => "Integ",
        }
    }

    pub fn needs_state_domain(&self) -> bool {
        matches!(self, Self::NonBay | Self::Integ)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How observed levels become returns in a backtest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    /// `ln(p_{i+1}/p_i) / sqrt(delta)`.
    Log,
    /// `(r_{i+1} - r_i) / sqrt(delta)`.
    Difference,
}

/// Everything a simulation study or backtest needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelChoice,
    pub delta: f64,
    /// Number of levels per replication.
    pub series_len: usize,
    /// Levels in the in-sample; the last `series_len - in_sample_len`
    /// returns are forecast.
    pub in_sample_len: usize,
    pub n_reps: usize,
    pub estimators: Vec<EstimatorId>,
    /// Smoother used by RiskM, NonBay and Integ.
    pub es: EsConfig<f64>,
    /// Window of the Hist moving average.
    pub hist_window: usize,
    pub state_refit_every: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Upper trim fraction for the reported means.
    pub trim_upper: f64,
    /// Autocorrelation truncation lag.
    pub max_lag: usize,
    pub semi_grid: Vec<f64>,
    /// Trailing window of the SemiProxy prediction-error criterion.
    pub semi_window: usize,
    /// In-sample residuals used for empirical quantiles in backtests.
    pub residual_window: usize,
    pub return_kind: ReturnKind,
    /// Fill missing backtest values with the previous value instead of
    /// rejecting the file.
    pub forward_fill: bool,
    pub cir: CirParams<f64>,
    pub sv: SvParams<f64>,
    pub gbm: GbmParams<f64>,
    /// Initial GBM price.
    pub gbm_r0: f64,
    pub state: StateDomainConfig,
}

impl StudyConfig {
    /// Weekly CIR short rate: 1200 observations, 900 in-sample.
    pub fn cir_weekly() -> Self {
        Self {
            model: ModelChoice::Cir,
            delta: 1.0 / 52.0,
            series_len: 1200,
            in_sample_len: 900,
            n_reps: DESK_SCALE_REPS,
            estimators: EstimatorId::ALL.to_vec(),
            es: EsConfig::riskmetrics(52),
            hist_window: 52,
            state_refit_every: 8,
            alpha: 0.05,
            seed: 20_040_101,
            trim_upper: 0.0,
            max_lag: DEFAULT_MAX_LAG,
            semi_grid: vec![0.90, 0.92, 0.94, 0.96, 0.98],
            semi_window: 250,
            residual_window: 250,
            return_kind: ReturnKind::Difference,
            forward_fill: false,
            cir: CirParams {
                kappa: 0.21459,
                theta: 0.08571,
                sigma: 0.07830,
            },
            sv: SvParams {
                kappa: 3.0,
                theta: 0.009,
                alpha2: 4.0,
                substeps: 30,
            },
            gbm: GbmParams { mu: 0.03, sigma: 0.26 },
            gbm_r0: 1.0,
            state: StateDomainConfig::default(),
        }
    }

    /// Monthly stochastic volatility: 1000 observations, three quarters in-sample.
    pub fn sv_monthly() -> Self {
        Self {
            model: ModelChoice::Sv,
            delta: 1.0 / 12.0,
            series_len: 1000,
            in_sample_len: 750,
            es: EsConfig::riskmetrics(12),
            hist_window: 12,
            state_refit_every: 2,
            ..Self::cir_weekly()
        }
    }

    /// Weekly GBM: 1000 observations, two thirds in-sample, 95% up-trimmed means.
    pub fn gbm_weekly() -> Self {
        Self {
            model: ModelChoice::Gbm,
            series_len: 1000,
            in_sample_len: 667,
            trim_upper: 0.05,
            ..Self::cir_weekly()
        }
    }

    /// Daily-style backtest of observed levels.
    pub fn backtest_default() -> Self {
        Self {
            model: ModelChoice::ExternalCsv,
            delta: 1.0 / 52.0,
            series_len: 0,
            in_sample_len: 0,
            n_reps: 1,
            return_kind: ReturnKind::Log,
            ..Self::cir_weekly()
        }
    }

    pub fn for_model(model: ModelChoice) -> Self {
        match model {
            ModelChoice::Cir => Self::cir_weekly(),
            ModelChoice::Sv => Self::sv_monthly(),
            ModelChoice::Gbm => Self::gbm_weekly(),
            ModelChoice::ExternalCsv => Self::backtest_default(),
        }
    }

    pub fn full_scale(mut self) -> Self {
        self.n_reps = FULL_SCALE_REPS;
        self
    }

    pub fn out_sample_len(&self) -> usize {
        self.series_len.saturating_sub(self.in_sample_len)
    }

    /// Earliest origin every configured estimator can forecast from.
    pub fn min_origin(&self) -> usize {
        let mut need = self.es.n.max(self.hist_window).max(self.max_lag + 2);
        if self.estimators.contains(&EstimatorId::SemiProxy) {
            need = need.max(2 * self.es.n);
        }
        if self.estimators.iter().any(EstimatorId::needs_state_domain) {
            need = need.max(self.es.n + crate::state_domain::MIN_BANDWIDTH_POINTS);
        }
        need
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VolError::Config(m));
        if !(self.delta > 0.0) {
            return bad("delta must be positive".into());
        }
        self.es.validate()?;
        if self.n_reps == 0 {
            return bad("n_reps must be at least 1".into());
        }
        if self.state_refit_every == 0 {
            return bad("state_refit_every must be at least 1".into());
        }
        if self.hist_window == 0 {
            return bad("hist_window must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.trim_upper) {
            return bad("trim_upper must lie in [0, 1)".into());
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required".into());
        }
        if self.semi_grid.is_empty() || self.semi_grid.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return bad("semi_grid values must lie in (0, 1]".into());
        }
        if self.model != ModelChoice::ExternalCsv {
            if self.in_sample_len >= self.series_len {
                return bad("in_sample_len must be smaller than series_len".into());
            }
            if self.in_sample_len < self.min_origin() + 1 {
                return bad(format!(
                    "in_sample_len {} too short; estimators need {} prior returns",
                    self.in_sample_len,
                    self.min_origin()
                ));
            }
            match self.model {
                ModelChoice::Cir => self.cir.validate()?,
                ModelChoice::Sv => self.sv.validate()?,
                ModelChoice::Gbm => self.gbm.validate()?,
                ModelChoice::ExternalCsv => {}
            }
        }
        Ok(())
    }

    /// Index of the reference estimator for relative losses: Integ if
    /// present, else the last one.
    pub fn reference_index(&self) -> usize {
        self.estimators
            .iter()
            .position(|e| *e == EstimatorId::Integ)
            .unwrap_or(self.estimators.len() - 1)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| VolError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
