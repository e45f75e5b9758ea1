//! Estimation-error transformation of binary margin losses and the
//! biased-coin rate experiments built on it.
//!
//! For a margin loss `phi` and `t` in `[0, 1]` the transformation is
//!
//! ```text
//! T(t) = phi(0) - inf_u [ (1 - t)/2 * phi(-u) + (1 + t)/2 * phi(u) ]
//! ```
//!
//! computed here with [`minimize_convex`]. In the biased-coin problem with
//! `eta = 1/2 + delta` the target excess of a sign-wrong prediction is
//! `2 delta` and the smallest surrogate excess it can carry is `T(2 delta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimize::{golden_section, minimize_convex, Minimum};
use crate::scalar::{BaseLoss, LinearCoreSpec, Side};

/// A binary margin loss: a linear-core surrogate or a plain baseline
/// `phi(u) = base(-u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MarginLoss {
    LinearCore(LinearCoreSpec),
    Plain(BaseLoss),
}

impl MarginLoss {
    pub fn value(&self, u: f64) -> Result<f64> {
        match self {
            MarginLoss::LinearCore(spec) => spec.value(u),
            MarginLoss::Plain(base) => base.value(-u),
        }
    }

    pub fn derivative(&self, u: f64) -> Result<f64> {
        match self {
            MarginLoss::LinearCore(spec) => spec.derivative(u),
            MarginLoss::Plain(base) => Ok(-base.derivative(-u)?),
        }
    }

    pub fn name(&self) -> String {
        match self {
            MarginLoss::LinearCore(spec) => spec.name(),
            MarginLoss::Plain(base) => base.name().to_string(),
        }
    }

    fn search_half_width(&self) -> f64 {
        let tau = match self {
            MarginLoss::LinearCore(spec) => spec.tau(),
            MarginLoss::Plain(_) => 1.0,
        };
        2.0 * tau + 8.0
    }
}

impl From<LinearCoreSpec> for MarginLoss {
    fn from(spec: LinearCoreSpec) -> Self {
        MarginLoss::LinearCore(spec)
    }
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("t must lie in [0, 1], got {t}")))
    }
}

/// `a * phi(u) + b * phi(-u)`, skipping zero-weight terms.
fn weighted_pair(loss: &MarginLoss, a: f64, b: f64, u: f64) -> Result<f64> {
    let mut v = 0.0;
    if a != 0.0 {
        v += a * loss.value(u)?;
    }
    if b != 0.0 {
        v += b * loss.value(-u)?;
    }
    Ok(v)
}

fn weighted_pair_derivative(loss: &MarginLoss, a: f64, b: f64, u: f64) -> Result<f64> {
    let mut v = 0.0;
    if a != 0.0 {
        v += a * loss.derivative(u)?;
    }
    if b != 0.0 {
        v -= b * loss.derivative(-u)?;
    }
    Ok(v)
}

/// `inf_u [a * phi(u) + b * phi(-u)]` over the real line for `a, b >= 0`.
pub fn pair_infimum(loss: &MarginLoss, a: f64, b: f64) -> Result<Minimum> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "pair weights must be finite and non-negative, got ({a}, {b})"
        )));
    }
    if a == 0.0 && b == 0.0 {
        return Ok(Minimum {
            argmin: 0.0,
            value: 0.0,
            attained: true,
        });
    }
    minimize_convex(
        |u| weighted_pair(loss, a, b, u),
        |u| weighted_pair_derivative(loss, a, b, u),
        loss.search_half_width(),
    )
}

/// `((1 - t)/2) phi(-u) + ((1 + t)/2) phi(u)`.
pub fn conditional_objective(loss: &MarginLoss, t: f64, u: f64) -> Result<f64> {
    check_t(t)?;
    weighted_pair(loss, 0.5 * (1.0 + t), 0.5 * (1.0 - t), u)
}

/// `T(t) = phi(0) - inf_u conditional_objective(t, u)`.
pub fn transformation_t(loss: &MarginLoss, t: f64) -> Result<f64> {
    check_t(t)?;
    let inf = pair_infimum(loss, 0.5 * (1.0 + t), 0.5 * (1.0 - t))?;
    Ok(loss.value(0.0)? - inf.value)
}

/// Closed-form minimum of `a * phi(-u) + b * phi(u)` over `u` in `[-1, 1]`
/// for the unit-core surrogates of `base` (both sides coincide there).
///
/// Returns the value `(a + b) base(0)/base'(0) + 2 min(a, b)` and the
/// minimizing endpoint: `-1` when `a > b`, `+1` otherwise.
pub fn restricted_pair_infimum(base: BaseLoss, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Domain(format!(
            "weights must be non-negative, got ({a}, {b})"
        )));
    }
    if !(a + b > 0.0 && (a + b).is_finite()) {
        return Err(Error::Domain(format!(
            "weights must have a positive finite sum, got ({a}, {b})"
        )));
    }
    let value = (a + b) * base.core_offset() + 2.0 * a.min(b);
    let argmin = if a > b { -1.0 } else { 1.0 };
    Ok((value, argmin))
}

/// Numeric counterpart of [`restricted_pair_infimum`] for a given surrogate.
pub fn restricted_pair_infimum_numeric(spec: &LinearCoreSpec, a: f64, b: f64) -> Result<Minimum> {
    golden_section(
        |u| Ok(a * spec.value(-u)? + b * spec.value(u)?),
        -1.0,
        1.0,
        1e-13,
    )
}

/// One point of a rate curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub loss_name: String,
    pub delta: f64,
    pub excess_surrogate: f64,
    pub excess_target: f64,
}

/// Biased-coin excesses for each margin `delta` in `(0, 1/2)`.
pub fn biased_coin_curve(loss: &MarginLoss, deltas: &[f64]) -> Result<Vec<RatePoint>> {
    let name = loss.name();
    deltas
        .iter()
        .map(|&delta| {
            if !(delta > 0.0 && delta < 0.5) {
                return Err(Error::Domain(format!(
                    "delta must lie in (0, 1/2), got {delta}"
                )));
            }
            let target = 2.0 * delta;
            Ok(RatePoint {
                loss_name: name.clone(),
                delta,
                excess_surrogate: transformation_t(loss, target)?,
                excess_target: target,
            })
        })
        .collect()
}

/// Least-squares slope of `ln(excess_target)` against `ln(excess_surrogate)`.
pub fn fit_loglog_slope(points: &[RatePoint]) -> Result<f64> {
    if points.len() < 5 {
        return Err(Error::Domain(format!(
            "need at least 5 points for a slope, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for p in points {
        if !(p.excess_surrogate > 0.0 && p.excess_target > 0.0) {
            return Err(Error::Domain(format!(
                "excesses must be positive, got ({}, {}) at delta {}",
                p.excess_surrogate, p.excess_target, p.delta
            )));
        }
        xs.push(p.excess_surrogate.ln());
        ys.push(p.excess_target.ln());
    }
    least_squares_slope(&xs, &ys)
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numeric("degenerate abscissae in slope fit".into()));
    }
    Ok(sxy / sxx)
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Slope and lower-bound diagnostics of the generalized surrogate at one `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSlope {
    pub tau: f64,
    pub slope: f64,
    /// `min_t [T(t) - t / tau]` over the bound grid.
    pub gap_over_tau: f64,
    /// `min_t [T(t) - tau t]` over the bound grid.
    pub gap_times_tau: f64,
}

/// Points on `[0, 1]` used for the lower-bound checks.
pub const BOUND_GRID_POINTS: usize = 200;

/// Rate slope of the symmetric surrogate of `base` for each core half-width,
/// plus the worst gap to the linear lower bounds on a grid of `t`.
pub fn tau_sweep(base: BaseLoss, taus: &[f64], deltas: &[f64]) -> Result<Vec<TauSlope>> {
    let grid = linspace(0.0, 1.0, BOUND_GRID_POINTS);
    taus.iter()
        .map(|&tau| {
            let loss = MarginLoss::LinearCore(LinearCoreSpec::new(base, Side::Symmetric, tau)?);
            let slope = fit_loglog_slope(&biased_coin_curve(&loss, deltas)?)?;
            let mut gap_over_tau = f64::INFINITY;
            let mut gap_times_tau = f64::INFINITY;
            for &t in &grid {
                let v = transformation_t(&loss, t)?;
                gap_over_tau = gap_over_tau.min(v - t / tau);
                gap_times_tau = gap_times_tau.min(v - tau * t);
            }
            Ok(TauSlope {
                tau,
                slope,
                gap_over_tau,
                gap_times_tau,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Side;

    const LN2: f64 = std::f64::consts::LN_2;

    fn lc(base: BaseLoss) -> MarginLoss {
        MarginLoss::LinearCore(LinearCoreSpec::symmetric(base))
    }

    /// `T` of the symmetric exponential surrogate, from the stationary point
    /// `u* = 1 + ln((1 + t)/(1 - t)) / 2` on the right tail.
    fn exp_lc_oracle(t: f64) -> f64 {
        1.0 + t - (1.0 - t * t).sqrt()
    }

    /// `T` of plain logistic: the binary entropy gap.
    fn logistic_oracle(t: f64) -> f64 {
        let a = 0.5 * (1.0 + t);
        let b = 0.5 * (1.0 - t);
        let xlx = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * (q).ln() };
        xlx(a, 1.0 + t) + xlx(b, 1.0 - t)
    }

    #[test]
    fn conditional_objective_examples() {
        let e = lc(BaseLoss::Exponential);
        assert_eq!(conditional_objective(&e, 0.0, 0.0).unwrap(), 2.0);
        assert_eq!(conditional_objective(&e, 1.0, 0.0).unwrap(), 2.0);
        let l = lc(BaseLoss::Logistic);
        let v = conditional_objective(&l, 0.5, 1.0).unwrap();
        let expected = 0.25 * (2.0 + 2.0 * LN2) + 0.75 * (2.0 * LN2);
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 1.886294).abs() < 1e-6);
        assert!(conditional_objective(&l, 1.1, 0.0).is_err());
        assert!(conditional_objective(&l, -0.1, 0.0).is_err());
    }

    #[test]
    fn transformation_matches_closed_forms() {
        let e = lc(BaseLoss::Exponential);
        assert!(transformation_t(&e, 0.0).unwrap().abs() < 1e-12);
        assert!((transformation_t(&e, 0.6).unwrap() - 0.8).abs() < 1e-10);
        let plain = MarginLoss::Plain(BaseLoss::Logistic);
        let v = transformation_t(&plain, 0.6).unwrap();
        assert!((v - logistic_oracle(0.6)).abs() < 1e-10);
        assert!((v - 0.192745).abs() < 1e-6);
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!((transformation_t(&e, t).unwrap() - exp_lc_oracle(t)).abs() < 1e-9, "t={t}");
            assert!(
                (transformation_t(&plain, t).unwrap() - logistic_oracle(t)).abs() < 1e-9,
                "t={t}"
            );
        }
    }

    #[test]
    fn t_equal_one_uses_the_asymptotic_infimum() {
        let e = lc(BaseLoss::Exponential);
        assert!((transformation_t(&e, 1.0).unwrap() - 2.0).abs() < 1e-10);
        let plain = MarginLoss::Plain(BaseLoss::Exponential);
        assert!((transformation_t(&plain, 1.0).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transformation_is_monotone() {
        for loss in [
            lc(BaseLoss::Logistic),
            MarginLoss::LinearCore(LinearCoreSpec::one_sided(BaseLoss::QUARTIC)),
            MarginLoss::Plain(BaseLoss::Exponential),
        ] {
            let mut prev = -1.0;
            for t in linspace(0.0, 1.0, 101) {
                let v = transformation_t(&loss, t).unwrap();
                assert!(v >= prev - 1e-12, "{} at t={t}", loss.name());
                prev = v;
            }
        }
    }

    #[test]
    fn restricted_pair_examples() {
        let (v, u) = restricted_pair_infimum(BaseLoss::Exponential, 0.7, 0.3).unwrap();
        assert!((v - 1.6).abs() < 1e-15);
        assert_eq!(u, -1.0);
        let (v, u) = restricted_pair_infimum(BaseLoss::Logistic, 0.5, 0.5).unwrap();
        assert!((v - (2.0 * LN2 + 1.0)).abs() < 1e-15);
        assert_eq!(u, 1.0);
        let (v, u) = restricted_pair_infimum(BaseLoss::Logistic, 1.0, 0.0).unwrap();
        assert!((v - 2.0 * LN2).abs() < 1e-15);
        assert_eq!(u, -1.0);
        assert!(restricted_pair_infimum(BaseLoss::Logistic, -0.1, 0.5).is_err());
        assert!(restricted_pair_infimum(BaseLoss::Logistic, 0.0, 0.0).is_err());
    }

    #[test]
    fn restricted_pair_matches_numeric() {
        for (a, b) in [(0.7, 0.3), (0.2, 0.9), (0.5, 0.5), (1.0, 0.0), (0.0, 2.0)] {
            for side in [Side::Symmetric, Side::OneSided] {
                let spec = LinearCoreSpec::new(BaseLoss::Logistic, side, 1.0).unwrap();
                let numeric = restricted_pair_infimum_numeric(&spec, a, b).unwrap();
                let (closed, _) = restricted_pair_infimum(BaseLoss::Logistic, a, b).unwrap();
                assert!((numeric.value - closed).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn biased_coin_examples() {
        let e = lc(BaseLoss::Exponential);
        let p = &biased_coin_curve(&e, &[0.01]).unwrap()[0];
        assert_eq!(p.excess_target, 0.02);
        assert!((p.excess_surrogate - (1.02 - (1.0f64 - 0.0004).sqrt())).abs() < 1e-10);
        assert!((p.excess_surrogate - 0.020200).abs() < 1e-6);
        let plain = MarginLoss::Plain(BaseLoss::Logistic);
        let p = &biased_coin_curve(&plain, &[0.01]).unwrap()[0];
        assert!((p.excess_surrogate - 0.0002).abs() < 1e-7);
        assert!((p.excess_surrogate - logistic_oracle(0.02)).abs() < 1e-12);
        let tiny = &biased_coin_curve(&e, &[1e-9]).unwrap()[0];
        assert!(tiny.excess_surrogate < 1e-8 && tiny.excess_target < 1e-8);
        assert!(biased_coin_curve(&e, &[0.5]).is_err());
        assert!(biased_coin_curve(&e, &[0.0]).is_err());
    }

    fn line(points: &[(f64, f64)]) -> Vec<RatePoint> {
        points
            .iter()
            .map(|&(l, r)| RatePoint {
                loss_name: "x".into(),
                delta: r / 2.0,
                excess_surrogate: l,
                excess_target: r,
            })
            .collect()
    }

    #[test]
    fn slope_of_exact_lines() {
        let xs = logspace(1e-6, 1e-1, 9);
        let lin: Vec<_> = xs.iter().map(|&x| (x, x)).collect();
        assert!((fit_loglog_slope(&line(&lin)).unwrap() - 1.0).abs() < 1e-12);
        let sqrt: Vec<_> = xs.iter().map(|&x| (x, x.sqrt())).collect();
        assert!((fit_loglog_slope(&line(&sqrt)).unwrap() - 0.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&line(&lin[..4])).is_err());
        let mut bad = lin.clone();
        bad[2].0 = 0.0;
        assert!(fit_loglog_slope(&line(&bad)).is_err());
    }

    #[test]
    fn logistic_surrogate_rate_is_linear() {
        let deltas = logspace(1e-4, 1e-1, 25);
        let slope = fit_loglog_slope(&biased_coin_curve(&lc(BaseLoss::Logistic), &deltas).unwrap())
            .unwrap();
        assert!((0.95..=1.05).contains(&slope), "slope {slope}");
    }

    #[test]
    fn tau_sweep_behaviour() {
        let deltas = logspace(1e-3, 1e-1, 15);
        let rows = tau_sweep(BaseLoss::Logistic, &[1.0, 2.0, 1e-5], &deltas).unwrap();
        assert!((0.95..=1.05).contains(&rows[0].slope));
        assert!((0.95..=1.05).contains(&rows[1].slope));
        assert!((0.45..=0.6).contains(&rows[2].slope), "{}", rows[2].slope);
        for row in &rows {
            assert!(row.gap_times_tau >= -1e-8, "tau {}", row.tau);
            let loss = MarginLoss::LinearCore(
                LinearCoreSpec::new(BaseLoss::Logistic, Side::Symmetric, row.tau).unwrap(),
            );
            assert!(transformation_t(&loss, 0.0).unwrap().abs() < 1e-9);
        }
    }
}
