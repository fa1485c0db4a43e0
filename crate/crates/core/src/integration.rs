//! Combining time-domain and state-domain volatility estimates: the
//! variance-ratio dynamic weight, the inverse-gamma Bayesian shrinkage
//! family, and asymptotic efficiency diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Prior shape fixed by moment matching `Var = 2 mean^2`.
pub const MATCHED_SHAPE: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CombineMode {
    Dynamic,
    Bayesian,
    TimeOnly,
    StateOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratedEstimate<T> {
    pub sigma2_hat: T,
    pub w_time: T,
    pub var_time: T,
    pub var_state: T,
    pub mode: CombineMode,
    /// Set when the weight came from a degenerate input (both variances zero).
    pub degenerate: bool,
}

/// Weight on the time-domain estimate: `var_state / (var_time + var_state)`.
///
/// Returns `(weight, degenerate)`; when both variances are zero the
/// weight is 0.5 and `degenerate` is set.
pub fn dynamic_weight<T: Scalar>(var_time: T, var_state: T) -> Result<(T, bool)> {
    if !(var_time >= T::zero()) || !(var_state >= T::zero()) {
        return Err(invalid("variance", "estimator variances must be non-negative"));
    }
    let total = var_time + var_state;
    if total == T::zero() {
        return Ok((T::lit(0.5), true));
    }
    if !total.is_finite() {
        // one side infinite: all weight on the finite one
        let w = if var_time.is_infinite() && var_state.is_infinite() {
            T::lit(0.5)
        } else if var_time.is_infinite() {
            T::zero()
        } else {
            T::one()
        };
        return Ok((w, !var_state.is_finite() && !var_time.is_finite()));
    }
    Ok(((var_state / total).max(T::zero()).min(T::one()), false))
}

/// Convex combination `w time + (1 - w) state`.
pub fn integrate<T: Scalar>(time_est: T, state_est: T, w: T) -> Result<T> {
    if !(w >= T::zero() && w <= T::one()) {
        return Err(invalid("w", format!("weight must lie in [0, 1], got {w}")));
    }
    if !(time_est >= T::zero()) || !(state_est >= T::zero()) {
        return Err(invalid("estimate", "estimates must be non-negative"));
    }
    if w == T::one() {
        return Ok(time_est);
    }
    if w == T::zero() {
        return Ok(state_est);
    }
    let v = w * time_est + (T::one() - w) * state_est;
    Ok(v.max(time_est.min(state_est)).min(time_est.max(state_est)))
}

/// Dynamically weighted combination from the two estimates and their
/// sampling variances. `state` is `None` when the state domain has no
/// coverage; the result is then the time-domain estimate.
pub fn combine_dynamic<T: Scalar>(
    time_est: T,
    var_time: T,
    state: Option<(T, T)>,
) -> Result<IntegratedEstimate<T>> {
    match state {
        None => Ok(IntegratedEstimate {
            sigma2_hat: time_est,
            w_time: T::one(),
            var_time,
            var_state: T::infinity(),
            mode: CombineMode::TimeOnly,
            degenerate: false,
        }),
        Some((state_est, var_state)) => {
            let (w, degenerate) = dynamic_weight(var_time, var_state)?;
            Ok(IntegratedEstimate {
                sigma2_hat: integrate(time_est, state_est, w)?,
                w_time: w,
                var_time,
                var_state,
                mode: CombineMode::Dynamic,
                degenerate,
            })
        }
    }
}

/// Inverse-gamma law `IG(a, b)` on a variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgPrior<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> IgPrior<T> {
    /// Requires `a > 2` (finite variance) and `b >= 0`.
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a > T::lit(2.0)) {
            return Err(invalid("a", "shape must exceed 2"));
        }
        if !(b >= T::zero()) {
            return Err(invalid("b", "scale must be non-negative"));
        }
        Ok(Self { a, b })
    }

    pub fn mean(&self) -> T {
        self.b / (self.a - T::one())
    }

    pub fn variance(&self) -> T {
        let am1 = self.a - T::one();
        self.b * self.b / (am1 * am1 * (self.a - T::lit(2.0)))
    }

    pub fn mode(&self) -> T {
        self.b / (self.a + T::one())
    }

    /// A scale of zero puts all mass at zero.
    pub fn is_degenerate(&self) -> bool {
        self.b == T::zero()
    }
}

/// Conjugate update with a Gaussian window: `a* = a + n/2`, `b* = b + sum y^2 / 2`.
pub fn ig_posterior<T: Scalar>(prior: &IgPrior<T>, window: &[T]) -> Result<IgPrior<T>> {
    if window.is_empty() {
        return Err(invalid("window", "must hold at least one return"));
    }
    let ss: T = window.iter().map(|v| *v * *v).sum();
    Ok(IgPrior {
        a: prior.a + T::from_count(window.len()) * T::lit(0.5),
        b: prior.b + ss * T::lit(0.5),
    })
}

/// Posterior mean with a moving-average likelihood:
/// `n/(n+2(a-1)) ma + 2(a-1)/(n+2(a-1)) prior_mean`.
pub fn bayes_ma<T: Scalar>(ma_est: T, prior_mean: T, n: usize, a: T) -> Result<T> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(a > T::one()) {
        return Err(invalid("a", "shape must exceed 1"));
    }
    Ok(shrink(ma_est, prior_mean, T::from_count(n), a))
}

fn shrink<T: Scalar>(data_est: T, prior_mean: T, n_eff: T, a: T) -> T {
    let k = T::lit(2.0) * (a - T::one());
    let denom = n_eff + k;
    n_eff / denom * data_est + k / denom * prior_mean
}

/// Equal-weight sample size of an exponential smoother, `(1-lambda^n)/(1-lambda)`.
pub fn effective_n<T: Scalar>(lambda: T, n: usize) -> Result<T> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(invalid("lambda", "must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if lambda == T::one() {
        return Ok(T::from_count(n));
    }
    Ok((T::one() - lambda.powi(n as i32)) / (T::one() - lambda))
}

/// [`bayes_ma`] with the exponential smoother standing in for the moving
/// average and `n*` from [`effective_n`] as its sample size.
pub fn bayes_es<T: Scalar>(es_est: T, prior_mean: T, lambda: T, n: usize, a: T) -> Result<T> {
    if lambda == T::one() {
        return bayes_ma(es_est, prior_mean, n, a);
    }
    let n_eff = effective_n(lambda, n)?;
    if !(a > T::one()) {
        return Err(invalid("a", "shape must exceed 1"));
    }
    Ok(shrink(es_est, prior_mean, n_eff, a))
}

/// Moment-matched prior centred on the state-domain estimate:
/// `a = 2.5`, `b = 1.5 state_est`, so mean = `state_est` and
/// variance = `2 state_est^2`.
pub fn match_hyperparams<T: Scalar>(state_est: T) -> Result<IgPrior<T>> {
    if !(state_est >= T::zero()) {
        return Err(invalid("state_est", "must be non-negative"));
    }
    let a = T::lit(MATCHED_SHAPE);
    Ok(IgPrior {
        a,
        b: (a - T::one()) * state_est,
    })
}

/// Static combination obtained by plugging the matched prior into
/// [`bayes_es`]. Returns `(estimate, degenerate)`; `lambda = 1` puts all
/// weight on the smoother and sets `degenerate`.
pub fn nonbayes_static<T: Scalar>(es_est: T, state_est: T, lambda: T, n: usize) -> Result<(T, bool)> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(invalid("lambda", "must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if lambda == T::one() {
        return Ok((es_est, true));
    }
    let w = nonbayes_state_weight(lambda, n);
    Ok(((T::one() - w) * es_est + w * state_est, false))
}

/// Weight on the state-domain estimate in [`nonbayes_static`]:
/// `3(1-lambda) / (1 - lambda^n + 3(1-lambda))`.
pub fn nonbayes_state_weight<T: Scalar>(lambda: T, n: usize) -> T {
    let k = T::lit(3.0) * (T::one() - lambda);
    k / (T::one() - lambda.powi(n as i32) + k)
}

/// Asymptotic relative efficiencies of the integrated estimator against
/// the state-domain and time-domain estimators, `d = lim n / ((N-n) h)`.
pub fn efficiency_ratios<T: Scalar>(d: T, s1_sq: T, s2_sq: T) -> Result<(T, T)> {
    for (name, v) in [("d", d), ("s1_sq", s1_sq), ("s2_sq", s2_sq)] {
        if !(v > T::zero()) {
            return Err(invalid(name, "must be positive"));
        }
    }
    let ratio = d * s2_sq / s1_sq;
    Ok((T::one() + ratio, T::one() + T::one() / ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dynamic_weight_cases() {
        assert_eq!(dynamic_weight(1.5, 1.5).unwrap(), (0.5, false));
        assert_eq!(dynamic_weight(1.0, 0.0).unwrap(), (0.0, false));
        assert_eq!(dynamic_weight(2.0, 6.0).unwrap(), (0.75, false));
        assert_eq!(dynamic_weight(0.0, 0.0).unwrap(), (0.5, true));
        assert!(dynamic_weight(-1.0, 1.0).is_err());
    }

    #[test]
    fn integrate_cases() {
        assert_eq!(integrate(0.02, 0.04, 1.0).unwrap(), 0.02);
        assert_eq!(integrate(0.02, 0.04, 0.0).unwrap(), 0.04);
        assert!(f64::abs(integrate(0.02, 0.04, 0.25).unwrap() - 0.035) < 1e-16);
        assert!(integrate(0.02, 0.04, 1.5).is_err());
    }

    #[test]
    fn combine_without_state_is_time_only() {
        let e = combine_dynamic(0.3, 0.01, None).unwrap();
        assert_eq!(e.mode, CombineMode::TimeOnly);
        assert_eq!(e.sigma2_hat, 0.3);
        assert_eq!(e.w_time, 1.0);
        let e = combine_dynamic(0.02, 2.0, Some((0.04, 6.0))).unwrap();
        assert!(f64::abs(e.sigma2_hat - 0.025) < 1e-16);
    }

    #[test]
    fn posterior_cases() {
        let p = IgPrior::new(2.5, 0.015).unwrap();
        let q = ig_posterior(&p, &[0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!(f64::abs(q.a - 4.5) < 1e-15 && f64::abs(q.b - 0.035) < 1e-15);
        let q = ig_posterior(&p, &[0.0]).unwrap();
        assert_eq!((q.a, q.b), (3.0, 0.015));
        assert!(ig_posterior(&p, &[]).is_err());

        // posterior mean equals the shrinkage form
        let y = [0.3, -0.1, 0.25, 0.05, -0.4];
        let q = ig_posterior(&p, &y).unwrap();
        let ma = y.iter().map(|v| v * v).sum::<f64>() / 5.0;
        let b = bayes_ma(ma, p.mean(), 5, p.a).unwrap();
        assert!((q.mean() - b).abs() < 1e-15);
    }

    #[test]
    fn bayes_ma_cases() {
        assert_eq!(bayes_ma(0.2, 0.4, 3, 2.5).unwrap(), 0.5 * 0.2 + 0.5 * 0.4);
        let big = bayes_ma(0.2, 0.4, 10_000_000, 2.5).unwrap();
        assert!(f64::abs(big - 0.2) < 1e-6);
        assert!(bayes_ma(0.2, 0.4, 0, 2.5).is_err());
        assert!(bayes_ma(0.2, 0.4, 3, 1.0).is_err());
    }

    #[test]
    fn effective_n_cases() {
        assert_eq!(effective_n(1.0, 7).unwrap(), 7.0);
        assert!(f64::abs(effective_n(0.5, 3).unwrap() - 1.75) < 1e-15);
        let v = effective_n(0.94, 52).unwrap();
        assert!((v - (1.0 - 0.94f64.powi(52)) / 0.06).abs() < 1e-12);
    }

    #[test]
    fn bayes_es_cases() {
        assert_eq!(
            bayes_es(0.2f64, 0.4, 1.0, 12, 2.5).unwrap().to_bits(),
            bayes_ma(0.2f64, 0.4, 12, 2.5).unwrap().to_bits()
        );
        let near_one = bayes_es(0.2, 0.4, 0.94, 52, 1.0 + 1e-12).unwrap();
        assert!(f64::abs(near_one - 0.2) < 1e-11);
        let ns = effective_n(0.94, 52).unwrap();
        let w = ns / (ns + 3.0);
        let v = bayes_es(0.2, 0.4, 0.94, 52, 2.5).unwrap();
        assert!(f64::abs(v - (w * 0.2 + (1.0 - w) * 0.4)) < 1e-15);
    }

    #[test]
    fn matched_hyperparams() {
        let p = match_hyperparams(0.01).unwrap();
        assert_eq!(p.a, 2.5);
        assert!(f64::abs(p.b - 0.015) < 1e-17);
        assert!(f64::abs(p.mean() - 0.01) < 1e-17);
        assert!(f64::abs(p.variance() - 2.0 * 0.01 * 0.01) < 1e-18);
        assert!(match_hyperparams(0.0).unwrap().is_degenerate());
    }

    #[test]
    fn nonbayes_cases() {
        let w = nonbayes_state_weight(0.94, 52);
        let expect = 0.18 / (1.0 - 0.94f64.powi(52) + 0.18);
        assert!((w - expect).abs() < 1e-14);
        let (v, deg) = nonbayes_static(0.2, 0.4, 0.94, 52).unwrap();
        assert!(!deg && (v - ((1.0 - expect) * 0.2 + expect * 0.4)).abs() < 1e-15);
        // fixed n: the weight tends to 3/(n+3), the moving-average value
        assert!(f64::abs(nonbayes_state_weight(1.0 - 1e-9, 52) - 3.0 / 55.0) < 1e-6);
        assert_eq!(nonbayes_static(0.2, 0.4, 1.0, 52).unwrap(), (0.2, true));

        // equals bayes_es with the matched prior
        let prior = match_hyperparams(0.4).unwrap();
        let b = bayes_es(0.2, prior.mean(), 0.94, 52, prior.a).unwrap();
        assert!((b - v).abs() < 1e-15);
    }

    #[test]
    fn efficiency_cases() {
        assert_eq!(efficiency_ratios(1.0, 2.0, 2.0).unwrap(), (2.0, 2.0));
        let (a, b) = efficiency_ratios(0.5, 1.0, 4.0).unwrap();
        assert!(f64::abs(a - 3.0) < 1e-15 && f64::abs(b - 1.5) < 1e-15);
        assert!(efficiency_ratios(0.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn weight_minimises_combined_variance(vt in 1e-6f64..10.0, vs in 1e-6f64..10.0) {
            let (w, _) = dynamic_weight(vt, vs).unwrap();
            let f = |w: f64| w * w * vt + (1.0 - w) * (1.0 - w) * vs;
            let best = f(w);
            for k in 0..=1000 {
                let g = k as f64 / 1000.0;
                prop_assert!(best <= f(g) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn integrated_between_inputs(a in 0.0f64..1.0, b in 0.0f64..1.0, w in 0.0f64..=1.0) {
            let v = integrate(a, b, w).unwrap();
            prop_assert!(v >= a.min(b) && v <= a.max(b));
        }

        #[test]
        fn efficiency_identity(d in 1e-1f64..1e1, s1 in 1e-1f64..1e1, s2 in 1e-1f64..1e1) {
            let (e1, e2) = efficiency_ratios(d, s1, s2).unwrap();
            prop_assert!(e1 > 1.0 && e2 > 1.0);
            prop_assert!(((e1 - 1.0) * (e2 - 1.0) - 1.0).abs() < 1e-10);
        }
    }
}
