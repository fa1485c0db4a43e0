//! Moving-average and exponential-smoothing volatility estimators together
//! with their sampling-variance approximations.
//!
//! Indexing convention: an estimate "at origin `t`" uses `y[t-n..t]`,
//! i.e. the `n` returns strictly before `t`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VolError};
use crate::scalar::Scalar;

/// Default truncation lag for squared-return autocorrelations.
pub const DEFAULT_MAX_LAG: usize = 30;

/// Floor on `c_t`, relative to its independent-data value.
pub const C_T_FLOOR_FRACTION: f64 = 1e-2;

/// Smoothing parameter and window length of the exponential smoother.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsConfig<T> {
    pub lambda: T,
    pub n: usize,
}

impl<T: Scalar> EsConfig<T> {
    pub fn new(lambda: T, n: usize) -> Result<Self> {
        let cfg = Self { lambda, n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero() && self.lambda <= T::one()) {
            return Err(invalid("lambda", format!("must lie in (0, 1], got {}", self.lambda)));
        }
        if self.n == 0 {
            return Err(invalid("n", "window must hold at least one observation"));
        }
        Ok(())
    }

    /// RiskMetrics daily/weekly setting, `lambda = 0.94`.
    pub fn riskmetrics(n: usize) -> Self {
        Self {
            lambda: T::lit(0.94),
            n,
        }
    }

    /// RiskMetrics monthly setting, `lambda = 0.97`.
    pub fn riskmetrics_monthly(n: usize) -> Self {
        Self {
            lambda: T::lit(0.97),
            n,
        }
    }

    pub fn is_moving_average(&self) -> bool {
        self.lambda == T::one()
    }
}

/// Exponential-smoothing estimate paired with its estimated sampling variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeVarianceEstimate<T> {
    pub sigma2_hat: T,
    pub var_hat: T,
    pub c_t: T,
    /// `c_t` was raised to its floor because the autocorrelations drove it
    /// too low.
    pub clamped: bool,
}

fn check_history(t: usize, n: usize, len: usize) -> Result<()> {
    if t > len {
        return Err(invalid("t", format!("origin {t} beyond series of length {len}")));
    }
    if t < n {
        return Err(VolError::InsufficientHistory {
            needed: n,
            available: t,
        });
    }
    Ok(())
}

/// `n^{-1} sum_{i=t-n}^{t-1} y_i^2`.
pub fn moving_average<T: Scalar>(y: &[T], t: usize, n: usize) -> Result<T> {
    if n == 0 {
        return Err(invalid("n", "window must hold at least one observation"));
    }
    check_history(t, n, y.len())?;
    let sum: T = y[t - n..t].iter().map(|v| *v * *v).sum();
    Ok(sum / T::from_count(n))
}

/// Normalised smoothing weights for lags `1..=n`; they sum to one.
pub fn es_weights<T: Scalar>(cfg: &EsConfig<T>) -> Vec<T> {
    let n = cfg.n;
    if cfg.is_moving_average() {
        return vec![T::one() / T::from_count(n); n];
    }
    let lam = cfg.lambda;
    let norm = (T::one() - lam) / (T::one() - lam.powi(n as i32));
    let mut w = Vec::with_capacity(n);
    let mut p = T::one();
    for _ in 0..n {
        w.push(norm * p);
        p = p * lam;
    }
    w
}

/// Exponential smoothing over the last `n` returns before `t`:
/// `(1-lambda)/(1-lambda^n) sum_{i=1}^n lambda^{i-1} y_{t-i}^2`.
///
/// `lambda = 1` is evaluated as [`moving_average`].
pub fn exp_smooth<T: Scalar>(y: &[T], t: usize, cfg: &EsConfig<T>) -> Result<T> {
    cfg.validate()?;
    if cfg.is_moving_average() {
        return moving_average(y, t, cfg.n);
    }
    check_history(t, cfg.n, y.len())?;
    let lam = cfg.lambda;
    let mut acc = T::zero();
    let mut p = T::one();
    for i in 1..=cfg.n {
        let v = y[t - i];
        acc = acc + p * v * v;
        p = p * lam;
    }
    Ok(acc * (T::one() - lam) / (T::one() - p))
}

/// The one-step recursion `s <- lambda s + (1-lambda) y^2`, started from zero
/// `n` steps before `t` and renormalised by `1 - lambda^n`.
pub fn exp_smooth_recursive<T: Scalar>(y: &[T], t: usize, cfg: &EsConfig<T>) -> Result<T> {
    cfg.validate()?;
    if cfg.is_moving_average() {
        return moving_average(y, t, cfg.n);
    }
    check_history(t, cfg.n, y.len())?;
    let lam = cfg.lambda;
    let mut s = T::zero();
    for v in &y[t - cfg.n..t] {
        s = lam * s + (T::one() - lam) * *v * *v;
    }
    Ok(s / (T::one() - lam.powi(cfg.n as i32)))
}

/// Estimates at every origin in `start..end`, updated in O(1) per step.
///
/// The running sum is recomputed from scratch every `n` steps so rounding
/// error stays bounded on long tracks.
pub fn exp_smooth_track<T: Scalar>(
    y: &[T],
    start: usize,
    end: usize,
    cfg: &EsConfig<T>,
) -> Result<Vec<T>> {
    cfg.validate()?;
    if end <= start {
        return Ok(Vec::new());
    }
    check_history(start, cfg.n, y.len())?;
    check_history(end - 1, cfg.n, y.len())?;
    let n = cfg.n;
    let lam = cfg.lambda;
    let lam_n = lam.powi(n as i32);
    let norm = if cfg.is_moving_average() {
        T::one() / T::from_count(n)
    } else {
        (T::one() - lam) / (T::one() - lam_n)
    };
    let raw = |t: usize| -> T {
        let mut acc = T::zero();
        let mut p = T::one();
        for i in 1..=n {
            let v = y[t - i];
            acc = acc + p * v * v;
            p = p * lam;
        }
        acc
    };
    let mut out = Vec::with_capacity(end - start);
    let mut s = raw(start);
    out.push(s * norm);
    for t in start + 1..end {
        if (t - start) % n == 0 {
            s = raw(t);
        } else {
            let newest = y[t - 1];
            let oldest = y[t - 1 - n];
            s = lam * s + newest * newest - lam_n * oldest * oldest;
        }
        out.push(s * norm);
    }
    Ok(out)
}

/// Sample autocorrelations of `y[..upto_t]^2` at lags `1..=max_lag`.
///
/// Biased (divide-by-N) autocovariances normalised by the lag-0 value.
pub fn autocorr_sq<T: Scalar>(y: &[T], upto_t: usize, max_lag: usize) -> Result<Vec<T>> {
    if upto_t > y.len() {
        return Err(invalid("upto_t", "beyond end of series"));
    }
    if upto_t < max_lag + 2 {
        return Err(VolError::InsufficientHistory {
            needed: max_lag + 2,
            available: upto_t,
        });
    }
    let z: Vec<T> = y[..upto_t].iter().map(|v| *v * *v).collect();
    let n = T::from_count(z.len());
    let mean = z.iter().copied().sum::<T>() / n;
    let c: Vec<T> = z.iter().map(|v| *v - mean).collect();
    let g0 = c.iter().map(|v| *v * *v).sum::<T>();
    if !(g0 > T::zero()) {
        return Err(VolError::Degenerate(
            "squared returns have zero sample variance".into(),
        ));
    }
    let mut rho = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let gk: T = c[k..].iter().zip(&c[..c.len() - k]).map(|(a, b)| *a * *b).sum();
        rho.push((gk / g0).max(-T::one()).min(T::one()));
    }
    Ok(rho)
}

/// `c_t` for independent data: `(1-lambda)(1+lambda^n) / ((1+lambda)(1-lambda^n))`,
/// or `1/n` for the moving average.
pub fn c_iid<T: Scalar>(cfg: &EsConfig<T>) -> T {
    let n = T::from_count(cfg.n);
    if cfg.is_moving_average() {
        return T::one() / n;
    }
    let lam = cfg.lambda;
    let lam_n = lam.powi(cfg.n as i32);
    (T::one() - lam) * (T::one() + lam_n) / ((T::one() + lam) * (T::one() - lam_n))
}

/// Raw `c_t` with autocorrelations `rho[k-1] = rho(k)`; lags past
/// `rho.len()` or `n - 1` contribute nothing.
///
/// The diagonal of the double sum contributes `sum lambda^{2(i-1)}`, so
/// with `rho = 0` this equals [`c_iid`].
pub fn c_factor<T: Scalar>(cfg: &EsConfig<T>, rho: &[T]) -> T {
    let n = cfg.n;
    let lags = rho.len().min(n.saturating_sub(1));
    if cfg.is_moving_average() {
        let nf = T::from_count(n);
        let cross: T = (1..=lags)
            .map(|k| T::from_count(n - k) * rho[k - 1])
            .sum();
        return (nf + T::lit(2.0) * cross) / (nf * nf);
    }
    let lam = cfg.lambda;
    let one = T::one();
    let lam2 = lam * lam;
    let lam_n = lam.powi(n as i32);
    let diag = (one - lam2.powi(n as i32)) / (one - lam2);
    let mut cross = T::zero();
    let mut lam_k = one;
    for k in 1..=lags {
        lam_k = lam_k * lam;
        cross = cross + rho[k - 1] * lam_k * (one - lam2.powi((n - k) as i32)) / (one - lam2);
    }
    let pre = (one - lam) / (one - lam_n);
    pre * pre * (diag + T::lit(2.0) * cross)
}

/// Sampling variance of an exponential-smoothing estimate under a locally
/// homogeneous Gaussian model: `var = 2 sigma^4 c_t`.
pub fn es_variance<T: Scalar>(
    sigma2_hat: T,
    cfg: &EsConfig<T>,
    rho: &[T],
) -> Result<TimeVarianceEstimate<T>> {
    cfg.validate()?;
    if !(sigma2_hat >= T::zero()) {
        return Err(invalid("sigma2_hat", "must be non-negative"));
    }
    let floor = c_iid(cfg) * T::lit(C_T_FLOOR_FRACTION);
    let raw = c_factor(cfg, rho);
    let (c_t, clamped) = if raw.is_finite() && raw >= floor {
        (raw, false)
    } else {
        (floor, true)
    };
    Ok(TimeVarianceEstimate {
        sigma2_hat,
        var_hat: T::lit(2.0) * sigma2_hat * sigma2_hat * c_t,
        c_t,
        clamped,
    })
}

/// Asymptotic variance constant `c sigma^4 (e^c + 1)/(e^c - 1)`, with the
/// `c -> 0` limit `2 sigma^4`.
pub fn s1_squared<T: Scalar>(sigma2: T, c: T) -> T {
    let s4 = sigma2 * sigma2;
    if c == T::zero() {
        return T::lit(2.0) * s4;
    }
    // c coth(c/2)
    let half = c * T::lit(0.5);
    c / half.tanh() * s4
}
