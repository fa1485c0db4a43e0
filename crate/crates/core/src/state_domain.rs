//! Local-linear kernel estimation of the drift and the conditional variance
//! as functions of the state level.
//!
//! The variance estimate at `x0` is a linear smoother `sum_i xi_i(x0) R_i`
//! of squared residuals, and its sampling variance is approximated by
//! `2 sigma^4(x0) sum_i xi_i^2(x0)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VolError};
use crate::scalar::Scalar;

/// Minimum number of pairs for bandwidth selection.
pub const MIN_BANDWIDTH_POINTS: usize = 20;

/// Relative tolerance on `V0 V2 - V1^2` against `V0 * h^2 V0`.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Floor on the variance estimate relative to the sample variance of the
/// responses.
pub const VARIANCE_FLOOR_FRACTION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    #[default]
    Epanechnikov,
}

/// Smoothing kernel with support `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
}

impl KernelSpec {
    pub const EPANECHNIKOV: Self = Self {
        kind: KernelKind::Epanechnikov,
    };

    #[inline]
    pub fn eval<T: Scalar>(&self, u: T) -> T {
        match self.kind {
            KernelKind::Epanechnikov => {
                if u.abs() < T::one() {
                    T::lit(0.75) * (T::one() - u * u)
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `nu_0 = int W(u)^2 du`.
    pub fn nu0<T: Scalar>(&self) -> T {
        match self.kind {
            KernelKind::Epanechnikov => T::lit(0.6),
        }
    }
}

/// Historical `(state, response)` pairs, kept alongside a copy sorted by
/// state for window lookups.
#[derive(Clone, Debug)]
pub struct StatePairs<T> {
    x: Vec<T>,
    response: Vec<T>,
    sorted_x: Vec<T>,
    sorted_response: Vec<T>,
    sorted_index: Vec<usize>,
}

impl<T: Scalar> StatePairs<T> {
    pub fn new(x: Vec<T>, response: Vec<T>) -> Result<Self> {
        if x.len() != response.len() {
            return Err(VolError::LengthMismatch {
                left: x.len(),
                right: response.len(),
            });
        }
        if x.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(invalid("pairs", "non-finite state or response"));
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite"));
        let sorted_x = order.iter().map(|&i| x[i]).collect();
        let sorted_response = order.iter().map(|&i| response[i]).collect();
        Ok(Self {
            x,
            response,
            sorted_x,
            sorted_response,
            sorted_index: order,
        })
    }

    /// Pairs `(levels[i], returns[i])` for `i < origin - exclude`, i.e. the
    /// history available when forecasting `returns[origin]` with the
    /// `exclude` most recent returns held out.
    pub fn from_history(levels: &[T], returns: &[T], origin: usize, exclude: usize) -> Result<Self> {
        if origin > returns.len() || origin > levels.len() {
            return Err(invalid("origin", "beyond end of series"));
        }
        let end = origin.saturating_sub(exclude);
        Self::new(levels[..end].to_vec(), returns[..end].to_vec())
    }

    /// Same states, new responses.
    pub fn with_response(&self, response: Vec<T>) -> Result<Self> {
        Self::new(self.x.clone(), response)
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn response(&self) -> &[T] {
        &self.response
    }

    pub fn count(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(min, max)` of the states.
    pub fn range(&self) -> Option<(T, T)> {
        Some((*self.sorted_x.first()?, *self.sorted_x.last()?))
    }

    fn window(&self, x0: T, h: T) -> Range<usize> {
        let lo = self.sorted_x.partition_point(|v| *v <= x0 - h);
        let hi = self.sorted_x.partition_point(|v| *v < x0 + h);
        lo..hi.max(lo)
    }
}

/// Kernel moments at one query point.
#[derive(Clone, Copy, Debug)]
struct Moments<T> {
    v0: T,
    v1: T,
    v2: T,
}

impl<T: Scalar> Moments<T> {
    fn det(&self) -> T {
        self.v0 * self.v2 - self.v1 * self.v1
    }

    fn singular(&self, h: T) -> bool {
        let det = self.det();
        !(det >= T::lit(SINGULAR_TOL) * self.v0 * (h * h * self.v0)) || !(det > T::zero())
    }
}

/// Local fit at `x0`; `fallback` marks a locally constant estimate used
/// because the linear design was singular.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFit<T> {
    pub intercept: T,
    pub slope: T,
    pub fallback: bool,
}

fn check_bandwidth<T: Scalar>(h: T) -> Result<()> {
    if h > T::zero() && h.is_finite() {
        Ok(())
    } else {
        Err(invalid("h", format!("bandwidth must be positive, got {h}")))
    }
}

fn no_coverage<T: Scalar>(pairs: &StatePairs<T>, x0: T) -> VolError {
    let (lo, hi) = pairs
        .range()
        .map(|(a, b)| (a.to_f64_lossy(), b.to_f64_lossy()))
        .unwrap_or((f64::NAN, f64::NAN));
    VolError::NoCoverage {
        x0: x0.to_f64_lossy(),
        lo,
        hi,
    }
}

fn moments<T: Scalar>(pairs: &StatePairs<T>, w: Range<usize>, x0: T, h: T, kernel: &KernelSpec) -> Moments<T> {
    let mut m = Moments {
        v0: T::zero(),
        v1: T::zero(),
        v2: T::zero(),
    };
    for &xi in &pairs.sorted_x[w] {
        let d = xi - x0;
        let k = kernel.eval(d / h);
        m.v0 = m.v0 + k;
        m.v1 = m.v1 + k * d;
        m.v2 = m.v2 + k * d * d;
    }
    m
}

/// Local fit allowing the locally constant fallback.
fn local_fit<T: Scalar>(pairs: &StatePairs<T>, x0: T, h: T, kernel: &KernelSpec) -> Result<LocalFit<T>> {
    check_bandwidth(h)?;
    let w = pairs.window(x0, h);
    let m = moments(pairs, w.clone(), x0, h, kernel);
    if !(m.v0 > T::zero()) {
        return Err(no_coverage(pairs, x0));
    }
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    for (xi, ri) in pairs.sorted_x[w.clone()].iter().zip(&pairs.sorted_response[w]) {
        let d = *xi - x0;
        let k = kernel.eval(d / h);
        s0 = s0 + k * *ri;
        s1 = s1 + k * d * *ri;
    }
    if m.singular(h) {
        return Ok(LocalFit {
            intercept: s0 / m.v0,
            slope: T::zero(),
            fallback: true,
        });
    }
    let det = m.det();
    Ok(LocalFit {
        intercept: (m.v2 * s0 - m.v1 * s1) / det,
        slope: (m.v0 * s1 - m.v1 * s0) / det,
        fallback: false,
    })
}

/// Kernel-weighted least-squares line through the responses around `x0`.
/// Returns `(intercept, slope)`; the intercept estimates the regression
/// function at `x0`.
pub fn local_linear_fit<T: Scalar>(pairs: &StatePairs<T>, x0: T, h: T, kernel: &KernelSpec) -> Result<(T, T)> {
    let fit = local_fit(pairs, x0, h, kernel)?;
    if fit.fallback {
        return Err(VolError::SingularDesign { x0: x0.to_f64_lossy() });
    }
    Ok((fit.intercept, fit.slope))
}

/// Drift estimate `f(x0)` from pairs whose responses are the raw returns.
/// Falls back to the local mean where the linear design is singular.
pub fn estimate_drift<T: Scalar>(pairs_raw: &StatePairs<T>, x0: T, h1: T, kernel: &KernelSpec) -> Result<T> {
    Ok(local_fit(pairs_raw, x0, h1, kernel)?.intercept)
}

/// `R_i = (y_i - f(x_i))^2`.
pub fn residual_squares<T: Scalar>(y: &[T], drift_at_x: &[T]) -> Result<Vec<T>> {
    if y.len() != drift_at_x.len() {
        return Err(VolError::LengthMismatch {
            left: y.len(),
            right: drift_at_x.len(),
        });
    }
    Ok(y.iter()
        .zip(drift_at_x)
        .map(|(a, f)| {
            let e = *a - *f;
            e * e
        })
        .collect())
}

/// Equivalent-kernel weights of the local-linear smoother at `x0`, one per
/// pair in the original order.
pub fn xi_weights<T: Scalar>(pairs: &StatePairs<T>, x0: T, h: T, kernel: &KernelSpec) -> Result<Vec<T>> {
    let (xi, fallback) = xi_weights_inner(pairs, x0, h, kernel)?;
    if fallback {
        return Err(VolError::SingularDesign { x0: x0.to_f64_lossy() });
    }
    Ok(xi)
}

fn xi_weights_inner<T: Scalar>(
    pairs: &StatePairs<T>,
    x0: T,
    h: T,
    kernel: &KernelSpec,
) -> Result<(Vec<T>, bool)> {
    check_bandwidth(h)?;
    let w = pairs.window(x0, h);
    let m = moments(pairs, w.clone(), x0, h, kernel);
    if !(m.v0 > T::zero()) {
        return Err(no_coverage(pairs, x0));
    }
    let fallback = m.singular(h);
    let det = m.det();
    let mut out = vec![T::zero(); pairs.count()];
    for s in w {
        let d = pairs.sorted_x[s] - x0;
        let k = kernel.eval(d / h);
        out[pairs.sorted_index[s]] = if fallback {
            k / m.v0
        } else {
            k * (m.v2 - d * m.v1) / det
        };
    }
    Ok((out, fallback))
}

/// Variance-domain estimate at one query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVarianceEstimate<T> {
    /// Reported estimate, floored at the variance floor.
    pub sigma2_hat: T,
    /// Estimate before flooring.
    pub raw_sigma2: T,
    pub xi_sq_sum: T,
    pub var_hat: T,
    pub bandwidth_used: T,
    /// `1 / sum xi^2`.
    pub effective_n: T,
    pub floored: bool,
    pub fallback: bool,
}

/// `var = 2 sigma^4 sum xi^2` for an estimate built from weights `xi`.
pub fn state_variance<T: Scalar>(sigma2_hat: T, xi: &[T], h: T) -> Result<StateVarianceEstimate<T>> {
    if !(sigma2_hat >= T::zero()) {
        return Err(invalid("sigma2_hat", "must be non-negative"));
    }
    let xi_sq_sum: T = xi.iter().map(|v| *v * *v).sum();
    Ok(StateVarianceEstimate {
        sigma2_hat,
        raw_sigma2: sigma2_hat,
        xi_sq_sum,
        var_hat: T::lit(2.0) * sigma2_hat * sigma2_hat * xi_sq_sum,
        bandwidth_used: h,
        effective_n: if xi_sq_sum > T::zero() {
            T::one() / xi_sq_sum
        } else {
            T::zero()
        },
        floored: false,
        fallback: false,
    })
}

/// Asymptotic variance constant `2 nu_0 sigma^4 / p(x)`.
pub fn s2_squared<T: Scalar>(sigma2: T, density_at_x: T, kernel: &KernelSpec) -> Result<T> {
    if !(density_at_x > T::zero()) {
        return Err(invalid("density_at_x", "must be positive"));
    }
    Ok(T::lit(2.0) * kernel.nu0::<T>() * sigma2 * sigma2 / density_at_x)
}

/// Kernel density estimate `(N h)^{-1} sum W((x_i - x0)/h)`.
pub fn kernel_density<T: Scalar>(x: &[T], x0: T, h: T, kernel: &KernelSpec) -> Result<T> {
    check_bandwidth(h)?;
    if x.is_empty() {
        return Err(VolError::TooFewPoints { needed: 1, got: 0 });
    }
    let s: T = x.iter().map(|xi| kernel.eval((*xi - x0) / h)).sum();
    Ok(s / (T::from_count(x.len()) * h))
}

fn sample_std<T: Scalar>(x: &[T]) -> T {
    let n = T::from_count(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let ss: T = x.iter().map(|v| (*v - mean) * (*v - mean)).sum();
    (ss / (n - T::one())).sqrt()
}

fn sample_variance<T: Scalar>(x: &[T]) -> T {
    if x.len() < 2 {
        return T::zero();
    }
    let s = sample_std(x);
    s * s
}

/// `1.06 sd(x) N^{-1/5}`.
pub fn rule_of_thumb_bandwidth<T: Scalar>(x: &[T]) -> Result<T> {
    if x.len() < 2 {
        return Err(VolError::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let sd = sample_std(x);
    if !(sd > T::zero()) {
        return Err(VolError::Degenerate("states have zero spread".into()));
    }
    Ok(T::lit(1.06) * sd * T::from_count(x.len()).powf(T::lit(-0.2)))
}

/// Bandwidth rule: rule of thumb, optionally refined by leave-one-out
/// cross-validation over multiples of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    /// Multipliers of the rule-of-thumb bandwidth tried by cross-validation.
    /// Empty disables cross-validation.
    pub cv_multipliers: Vec<f64>,
    /// Cross-validation evaluates at most this many (evenly strided) points.
    pub cv_max_points: usize,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        Self {
            cv_multipliers: vec![0.5, 0.75, 1.0, 1.5, 2.0],
            cv_max_points: 200,
        }
    }
}

impl BandwidthConfig {
    pub fn rule_of_thumb_only() -> Self {
        Self {
            cv_multipliers: Vec::new(),
            cv_max_points: 0,
        }
    }
}

/// Leave-one-out squared prediction error of the local-linear smoother.
fn loo_cv_score<T: Scalar>(pairs: &StatePairs<T>, h: T, kernel: &KernelSpec, stride: usize) -> Option<T> {
    let mut total = T::zero();
    let mut used = 0usize;
    let k0 = kernel.eval(T::zero());
    for s in (0..pairs.count()).step_by(stride.max(1)) {
        let x0 = pairs.sorted_x[s];
        let fit = match local_fit(pairs, x0, h, kernel) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let w = pairs.window(x0, h);
        let m = moments(pairs, w, x0, h, kernel);
        let own = if fit.fallback { k0 / m.v0 } else { k0 * m.v2 / m.det() };
        let denom = T::one() - own;
        if !(denom > T::lit(1e-8)) {
            continue;
        }
        let r = pairs.sorted_response[s];
        let loo = (fit.intercept - own * r) / denom;
        total = total + (r - loo) * (r - loo);
        used += 1;
    }
    (used > 0).then(|| total / T::from_count(used))
}

/// Bandwidth for smoothing the responses of `pairs`.
pub fn select_bandwidth<T: Scalar>(pairs: &StatePairs<T>, cfg: &BandwidthConfig, kernel: &KernelSpec) -> Result<T> {
    if pairs.count() < MIN_BANDWIDTH_POINTS {
        return Err(VolError::TooFewPoints {
            needed: MIN_BANDWIDTH_POINTS,
            got: pairs.count(),
        });
    }
    let base = rule_of_thumb_bandwidth(pairs.x())?;
    if cfg.cv_multipliers.is_empty() {
        return Ok(base);
    }
    let stride = if cfg.cv_max_points == 0 {
        1
    } else {
        pairs.count().div_ceil(cfg.cv_max_points)
    };
    let mut best: Option<(T, T)> = None;
    for &mult in &cfg.cv_multipliers {
        let h = base * T::lit(mult);
        if let Some(score) = loo_cv_score(pairs, h, kernel, stride) {
            // strict improvement keeps the earliest candidate on ties
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((h, score));
            }
        }
    }
    Ok(best.map(|(h, _)| h).unwrap_or(base))
}

/// Drift bandwidth `h1` from `(x, y)` pairs, then variance bandwidth `h`
/// from the squared residuals of the drift fit.
pub fn select_bandwidths<T: Scalar>(
    pairs_raw: &StatePairs<T>,
    cfg: &BandwidthConfig,
    kernel: &KernelSpec,
) -> Result<(T, T)> {
    let h1 = select_bandwidth(pairs_raw, cfg, kernel)?;
    let drift = drift_at_states(pairs_raw, h1, kernel)?;
    let r2 = residual_squares(pairs_raw.response(), &drift)?;
    let h = select_bandwidth(&pairs_raw.with_response(r2)?, cfg, kernel)?;
    Ok((h1, h))
}

fn drift_at_states<T: Scalar>(pairs_raw: &StatePairs<T>, h1: T, kernel: &KernelSpec) -> Result<Vec<T>> {
    pairs_raw
        .x()
        .iter()
        .map(|x| estimate_drift(pairs_raw, *x, h1, kernel))
        .collect()
}

/// How the state-domain estimator is fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDomainConfig {
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthConfig,
    /// Subtract a local-linear drift before squaring; otherwise smooth `y^2`.
    pub use_drift: bool,
    /// Fixed `(h1, h)` overriding bandwidth selection.
    pub fixed_bandwidths: Option<(f64, f64)>,
}

impl Default for StateDomainConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::EPANECHNIKOV,
            bandwidth: BandwidthConfig::default(),
            use_drift: true,
            fixed_bandwidths: None,
        }
    }
}

/// A frozen state-domain variance function, queried at the current state.
#[derive(Clone, Debug)]
pub struct StateDomainFit<T> {
    pairs: StatePairs<T>,
    h1: T,
    h: T,
    kernel: KernelSpec,
    floor: T,
}

impl<T: Scalar> StateDomainFit<T> {
    /// Fits from historical states `x` and returns `y`.
    pub fn fit(x: &[T], y: &[T], cfg: &StateDomainConfig) -> Result<Self> {
        let raw = StatePairs::new(x.to_vec(), y.to_vec())?;
        let kernel = cfg.kernel;
        let (h1, r2, h) = match cfg.fixed_bandwidths {
            Some((h1, h)) => {
                let h1 = T::lit(h1);
                let r2 = Self::responses(&raw, h1, cfg)?;
                (h1, r2, T::lit(h))
            }
            None => {
                let h1 = if cfg.use_drift {
                    select_bandwidth(&raw, &cfg.bandwidth, &kernel)?
                } else {
                    rule_of_thumb_bandwidth(raw.x())?
                };
                let r2 = Self::responses(&raw, h1, cfg)?;
                let h = select_bandwidth(&raw.with_response(r2.clone())?, &cfg.bandwidth, &kernel)?;
                (h1, r2, h)
            }
        };
        let floor = T::lit(VARIANCE_FLOOR_FRACTION) * sample_variance(&r2);
        Ok(Self {
            pairs: raw.with_response(r2)?,
            h1,
            h,
            kernel,
            floor,
        })
    }

    fn responses(raw: &StatePairs<T>, h1: T, cfg: &StateDomainConfig) -> Result<Vec<T>> {
        if cfg.use_drift {
            let drift = drift_at_states(raw, h1, &cfg.kernel)?;
            residual_squares(raw.response(), &drift)
        } else {
            Ok(raw.response().iter().map(|v| *v * *v).collect())
        }
    }

    pub fn bandwidths(&self) -> (T, T) {
        (self.h1, self.h)
    }

    /// Pairs of states and squared residuals.
    pub fn pairs(&self) -> &StatePairs<T> {
        &self.pairs
    }

    /// Variance estimate and its sampling variance at `x0`.
    ///
    /// Queries outside the historical state range are rejected with
    /// [`VolError::NoCoverage`].
    pub fn estimate(&self, x0: T) -> Result<StateVarianceEstimate<T>> {
        match self.pairs.range() {
            Some((lo, hi)) if x0 >= lo && x0 <= hi => {}
            _ => return Err(no_coverage(&self.pairs, x0)),
        }
        let (xi, fallback) = xi_weights_inner(&self.pairs, x0, self.h, &self.kernel)?;
        let raw: T = xi.iter().zip(self.pairs.response()).map(|(w, r)| *w * *r).sum();
        let floored = !(raw >= self.floor);
        let sigma2 = if floored { self.floor } else { raw };
        let mut est = state_variance(sigma2, &xi, self.h)?;
        est.raw_sigma2 = raw;
        est.floored = floored;
        est.fallback = fallback;
        Ok(est)
    }
}
