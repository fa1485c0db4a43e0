//! Synthetic diffusion paths (CIR, stochastic volatility, GBM) and the
//! conversion of level paths into scaled return series.
//!
//! All simulators draw from an explicit [`RngStream`]; identical
//! `(seed, stream_id)` pairs replay identical paths.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, VolError};
use crate::scalar::Scalar;

/// Floor applied to CIR levels after each step.
pub const CIR_FLOOR: f64 = 1e-12;

/// Which generator produced a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelTag {
    Cir,
    Sv,
    Gbm,
    External,
}

/// A series of levels (rates or prices) sampled every `delta` years.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<T> {
    values: Vec<T>,
    delta: T,
    model_tag: ModelTag,
}

impl<T: Scalar> Path<T> {
    pub fn new(values: Vec<T>, delta: T, model_tag: ModelTag) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "path must be non-empty"));
        }
        check_delta(delta)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "path contains non-finite values"));
        }
        Ok(Self {
            values,
            delta,
            model_tag,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn model_tag(&self) -> ModelTag {
        self.model_tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `t,value` rows, `t` being the step index.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_indexed_csv(w, "value", &self.values)
    }

    pub fn read_csv<R: Read>(r: R, delta: T, model_tag: ModelTag) -> Result<Self> {
        let values = read_indexed_csv(r, "value")?;
        Self::new(values, delta, model_tag)
    }
}

/// Scaled first differences `y[i] = (r[i+1] - r[i]) / sqrt(delta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSeries<T> {
    y: Vec<T>,
    delta: T,
    source_len: usize,
}

impl<T: Scalar> ReturnSeries<T> {
    /// Wraps returns that did not come from [`to_returns`]; `source_len`
    /// is set to `y.len() + 1`.
    pub fn from_returns(y: Vec<T>, delta: T) -> Result<Self> {
        check_delta(delta)?;
        let source_len = y.len() + 1;
        Ok(Self {
            y,
            delta,
            source_len,
        })
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Writes `t,y` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_indexed_csv(w, "y", &self.y)
    }

    pub fn read_csv<R: Read>(r: R, delta: T) -> Result<Self> {
        let y = read_indexed_csv(r, "y")?;
        Self::from_returns(y, delta)
    }
}

/// Cox-Ingersoll-Ross parameters: `dr = kappa (theta - r) dt + sigma sqrt(r) dW`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirParams<T> {
    pub kappa: T,
    pub theta: T,
    pub sigma: T,
}

impl<T: Scalar> CirParams<T> {
    pub fn new(kappa: T, theta: T, sigma: T) -> Result<Self> {
        let p = Self {
            kappa,
            theta,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("kappa", self.kappa)?;
        positive("theta", self.theta)?;
        positive("sigma", self.sigma)?;
        if T::lit(2.0) * self.kappa * self.theta < self.sigma * self.sigma {
            return Err(invalid("sigma", "2 kappa theta >= sigma^2 is violated"));
        }
        Ok(())
    }

    /// Instantaneous variance `sigma^2 r` of the scaled returns at level `r`.
    pub fn variance_at(&self, r: T) -> T {
        self.sigma * self.sigma * r.max(T::zero())
    }
}

/// Stochastic-volatility parameters for
/// `dV = kappa (theta - V) dt + alpha V dW`, returns `dr = sqrt(V) dB`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvParams<T> {
    pub kappa: T,
    pub theta: T,
    pub alpha2: T,
    pub substeps: usize,
}

impl<T: Scalar> SvParams<T> {
    pub fn new(kappa: T, theta: T, alpha2: T, substeps: usize) -> Result<Self> {
        let p = Self {
            kappa,
            theta,
            alpha2,
            substeps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("kappa", self.kappa)?;
        positive("theta", self.theta)?;
        positive("alpha2", self.alpha2)?;
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be at least 1"));
        }
        if self.ig_shape() <= T::lit(2.0) {
            return Err(invalid(
                "alpha2",
                "stationary inverse-gamma shape 1 + 2 kappa / alpha2 must exceed 2",
            ));
        }
        Ok(())
    }

    /// Shape `a = 1 + 2 kappa / alpha^2` of the stationary inverse-gamma law.
    pub fn ig_shape(&self) -> T {
        T::one() + T::lit(2.0) * self.kappa / self.alpha2
    }

    /// Scale `b = 2 theta kappa / alpha^2` of the stationary inverse-gamma law.
    pub fn ig_scale(&self) -> T {
        T::lit(2.0) * self.theta * self.kappa / self.alpha2
    }
}

/// Geometric Brownian motion `dr = mu r dt + sigma r dW`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmParams<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> GbmParams<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        positive("sigma", self.sigma)
    }

    /// Euler-scale variance `sigma^2 r^2` of the scaled returns at level `r`.
    pub fn variance_at(&self, r: T) -> T {
        self.sigma * self.sigma * r * r
    }
}

/// An independent, replayable random substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// ChaCha8 keyed by `seed`, positioned on stream `stream_id`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Output of [`simulate_sv`].
#[derive(Clone, Debug)]
pub struct SvSample<T> {
    /// Levels with `r_0 = 0`.
    pub levels: Path<T>,
    pub returns: ReturnSeries<T>,
    /// Per-step integrated variance, aligned with `returns`.
    pub variance_path: Vec<T>,
}

fn positive<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_delta<T: Scalar>(delta: T) -> Result<()> {
    positive("delta", delta)
}

fn check_n_obs(n_obs: usize) -> Result<()> {
    if n_obs < 2 {
        return Err(invalid("n_obs", "need at least 2 observations"));
    }
    Ok(())
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One CIR Milstein step with full truncation and a positivity floor.
pub fn cir_step<T: Scalar>(params: &CirParams<T>, r: T, delta: T, eps: T) -> T {
    let floor = T::lit(CIR_FLOOR);
    let rp = r.max(T::zero());
    let next = r
        + params.kappa * (params.theta - r) * delta
        + params.sigma * rp.sqrt() * delta.sqrt() * eps
        + T::lit(0.25) * params.sigma * params.sigma * delta * (eps * eps - T::one());
    next.max(floor)
}

/// CIR path started at the long-run level `theta`.
pub fn simulate_cir<T: Scalar>(
    params: &CirParams<T>,
    delta: T,
    n_obs: usize,
    rng: RngStream,
) -> Result<Path<T>> {
    simulate_cir_from(params, params.theta, delta, n_obs, rng)
}

/// CIR path started at `r0`.
pub fn simulate_cir_from<T: Scalar>(
    params: &CirParams<T>,
    r0: T,
    delta: T,
    n_obs: usize,
    rng: RngStream,
) -> Result<Path<T>> {
    params.validate()?;
    check_delta(delta)?;
    check_n_obs(n_obs)?;
    positive("r0", r0)?;
    let mut g = rng.rng();
    let mut values = Vec::with_capacity(n_obs);
    let mut r = r0;
    values.push(r);
    for _ in 1..n_obs {
        let eps = T::lit(std_normal(&mut g));
        r = cir_step(params, r, delta, eps);
        values.push(r);
    }
    Path::new(values, delta, ModelTag::Cir)
}

/// Runs the inner variance scheme over explicit Brownian increments `dw`
/// (each with variance `dt`) and returns `V` at every grid point,
/// `dw.len() + 1` values starting at `v0`.
pub fn sv_variance_path<T: Scalar>(params: &SvParams<T>, v0: T, dt: T, dw: &[T]) -> Vec<T> {
    let alpha = params.alpha2.sqrt();
    let half = T::lit(0.5);
    let floor = T::lit(CIR_FLOOR);
    let mut out = Vec::with_capacity(dw.len() + 1);
    let mut v = v0;
    out.push(v);
    for &w in dw {
        // Milstein in increment form: eps sqrt(dt) = w, dt (eps^2 - 1) = w^2 - dt.
        v = v + params.kappa * (params.theta - v) * dt
            + alpha * v * w
            + half * params.alpha2 * v * (w * w - dt);
        v = v.max(floor);
        out.push(v);
    }
    out
}

/// Stochastic-volatility sample: `n_obs` levels, `n_obs - 1` returns and
/// per-step integrated variances.
///
/// `V_0` is drawn from the stationary IG(a, b) law as the reciprocal of a
/// Gamma(a, rate b) draw. Each observation step is split into
/// `substeps` inner steps of length `delta / substeps`; the integrated
/// variance is the left-point average over those inner steps.
pub fn simulate_sv<T: Scalar>(
    params: &SvParams<T>,
    delta: T,
    n_obs: usize,
    rng: RngStream,
) -> Result<SvSample<T>> {
    params.validate()?;
    check_delta(delta)?;
    check_n_obs(n_obs)?;
    let mut g = rng.rng();
    let a = params.ig_shape().to_f64_lossy();
    let b = params.ig_scale().to_f64_lossy();
    let gamma = Gamma::new(a, 1.0 / b).map_err(|e| invalid("alpha2", e.to_string()))?;
    let v0 = T::lit(1.0 / gamma.sample(&mut g));

    let m = params.substeps;
    let dt = delta / T::from_count(m);
    let sqrt_dt = dt.sqrt();
    let inv_m = T::one() / T::from_count(m);
    let sqrt_delta = delta.sqrt();

    let mut v = v0;
    let mut dw = vec![T::zero(); m];
    let mut variance_path = Vec::with_capacity(n_obs - 1);
    let mut y = Vec::with_capacity(n_obs - 1);
    let mut levels = Vec::with_capacity(n_obs);
    let mut r = T::zero();
    levels.push(r);
    for _ in 1..n_obs {
        for w in dw.iter_mut() {
            *w = T::lit(std_normal(&mut g)) * sqrt_dt;
        }
        let inner = sv_variance_path(params, v, dt, &dw);
        let vbar = inner[..m].iter().copied().sum::<T>() * inv_m;
        v = inner[m];
        let z = T::lit(std_normal(&mut g));
        let yi = vbar.sqrt() * z;
        r = r + sqrt_delta * yi;
        variance_path.push(vbar);
        y.push(yi);
        levels.push(r);
    }
    let returns = ReturnSeries {
        y,
        delta,
        source_len: n_obs,
    };
    Ok(SvSample {
        levels: Path::new(levels, delta, ModelTag::Sv)?,
        returns,
        variance_path,
    })
}

/// GBM path from `r0 = 1` with exact log-normal increments.
pub fn simulate_gbm<T: Scalar>(
    params: &GbmParams<T>,
    delta: T,
    n_obs: usize,
    rng: RngStream,
) -> Result<Path<T>> {
    simulate_gbm_from(params, T::one(), delta, n_obs, rng)
}

pub fn simulate_gbm_from<T: Scalar>(
    params: &GbmParams<T>,
    r0: T,
    delta: T,
    n_obs: usize,
    rng: RngStream,
) -> Result<Path<T>> {
    params.validate()?;
    check_delta(delta)?;
    check_n_obs(n_obs)?;
    positive("r0", r0)?;
    let mut g = rng.rng();
    let drift = (params.mu - T::lit(0.5) * params.sigma * params.sigma) * delta;
    let vol = params.sigma * delta.sqrt();
    let mut values = Vec::with_capacity(n_obs);
    let mut log_r = r0.ln();
    values.push(r0);
    for _ in 1..n_obs {
        log_r = log_r + drift + vol * T::lit(std_normal(&mut g));
        values.push(log_r.exp());
    }
    Path::new(values, delta, ModelTag::Gbm)
}

/// `y[i] = (values[i+1] - values[i]) / sqrt(delta)`.
pub fn to_returns<T: Scalar>(path: &Path<T>) -> Result<ReturnSeries<T>> {
    if path.len() < 2 {
        return Err(VolError::TooFewPoints {
            needed: 2,
            got: path.len(),
        });
    }
    let scale = T::one() / path.delta.sqrt();
    let y = path
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]) * scale)
        .collect();
    Ok(ReturnSeries {
        y,
        delta: path.delta,
        source_len: path.len(),
    })
}

/// `y[i] = ln(values[i+1] / values[i]) / sqrt(delta)`; levels must be positive.
pub fn to_log_returns<T: Scalar>(path: &Path<T>) -> Result<ReturnSeries<T>> {
    if path.len() < 2 {
        return Err(VolError::TooFewPoints {
            needed: 2,
            got: path.len(),
        });
    }
    if path.values.iter().any(|v| *v <= T::zero()) {
        return Err(invalid("values", "log returns need strictly positive levels"));
    }
    let scale = T::one() / path.delta.sqrt();
    let y = path
        .values
        .windows(2)
        .map(|w| (w[1] / w[0]).ln() * scale)
        .collect();
    Ok(ReturnSeries {
        y,
        delta: path.delta,
        source_len: path.len(),
    })
}

fn write_indexed_csv<W: Write, T: Scalar>(w: W, column: &str, xs: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", column])?;
    for (t, x) in xs.iter().enumerate() {
        wtr.write_record([t.to_string(), format!("{x:e}")])?;
    }
    wtr.flush()?;
    Ok(())
}

fn read_indexed_csv<R: Read, T: Scalar>(r: R, column: &str) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != column {
        return Err(VolError::Ingest {
            row: 0,
            message: format!("expected header `t,{column}`"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let t: usize = rec[0].trim().parse().map_err(|_| VolError::Ingest {
            row,
            message: format!("bad step index `{}`", &rec[0]),
        })?;
        if t != i {
            return Err(VolError::Ingest {
                row,
                message: format!("step index {t} out of order, expected {i}"),
            });
        }
        let v: f64 = rec[1].trim().parse().map_err(|_| VolError::Ingest {
            row,
            message: format!("bad value `{}`", &rec[1]),
        })?;
        out.push(T::lit(v));
    }
    Ok(out)
}
