//! Multi-class sum losses, their gradients, brute-force conditional regrets,
//! and the cross-entropy baselines.
//!
//! The linear-core sum loss of score vector `s` at label `y` is
//! `sum_{y' != y} phi(s[y] - s[y'])`. Since `phi` is decreasing it plays the
//! role that `base(-m)` plays for a plain sum loss.

use serde::{Deserialize, Serialize};

use crate::consistency::{pair_infimum, MarginLoss};
use crate::error::{Error, Result};
use crate::scalar::LinearCoreSpec;

/// Largest label count accepted by the brute-force regret oracles.
pub const MAX_REGRET_LABELS: usize = 8;

/// Finite scores over `n >= 2` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable(Vec<f64>);

impl ScoreTable {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least two labels, got {}",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("non-finite score {bad}")));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest-scoring label; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y < self.0.len() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "label {y} out of range for {} classes",
                self.0.len()
            )))
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A probability vector over labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution(Vec<f64>);

impl CategoricalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Domain("weights must be non-negative with positive sum".into()));
        }
        Ok(Self(weights.iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `sum_{y' != y} phi(s[y] - s[y'])`.
pub fn mc_sum_loss(spec: &LinearCoreSpec, scores: &ScoreTable, y: usize) -> Result<f64> {
    scores.check_label(y)?;
    let s = scores.as_slice();
    let mut total = 0.0;
    for (k, &sk) in s.iter().enumerate() {
        if k != y {
            total += spec.value(s[y] - sk)?;
        }
    }
    Ok(total)
}

/// Gradient of [`mc_sum_loss`] with respect to the scores.
pub fn mc_sum_loss_gradient(
    spec: &LinearCoreSpec,
    scores: &ScoreTable,
    y: usize,
) -> Result<Vec<f64>> {
    scores.check_label(y)?;
    let s = scores.as_slice();
    let mut grad = vec![0.0; s.len()];
    for (k, &sk) in s.iter().enumerate() {
        if k != y {
            let d = spec.derivative(s[y] - sk)?;
            grad[y] += d;
            grad[k] -= d;
        }
    }
    Ok(grad)
}

/// Conditional regrets of one score vector under a label distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regrets {
    pub target: f64,
    pub surrogate: f64,
}

/// Zero-one and sum-loss conditional regrets.
///
/// The zero-one regret is `max_y p(y) - p(argmax s)`. The surrogate regret is
/// the conditional sum loss minus the sum over unordered label pairs of the
/// pairwise infimum `inf_u [p_y phi(u) + p_y' phi(-u)]`.
pub fn mc_conditional_regrets(
    spec: &LinearCoreSpec,
    p: &CategoricalDistribution,
    scores: &ScoreTable,
) -> Result<Regrets> {
    let n = scores.len();
    if p.len() != n {
        return Err(Error::Domain(format!(
            "distribution has {} labels, scores have {n}",
            p.len()
        )));
    }
    if n > MAX_REGRET_LABELS {
        return Err(Error::Unsupported(format!(
            "brute-force regrets support at most {MAX_REGRET_LABELS} labels, got {n}"
        )));
    }
    let probs = p.as_slice();
    let best = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let target = best - probs[scores.argmax()];
    let surrogate = pairwise_surrogate_regret(spec, probs, scores.as_slice())?;
    Ok(Regrets { target, surrogate })
}

/// `sum_a w_a sum_{b != a} phi(s_a - s_b)` minus the sum of pairwise infima.
pub(crate) fn pairwise_surrogate_regret(
    spec: &LinearCoreSpec,
    weights: &[f64],
    scores: &[f64],
) -> Result<f64> {
    let loss = MarginLoss::LinearCore(*spec);
    let n = scores.len();
    let mut current = 0.0;
    let mut floor = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let m = scores[a] - scores[b];
            if weights[a] != 0.0 {
                current += weights[a] * spec.value(m)?;
            }
            if weights[b] != 0.0 {
                current += weights[b] * spec.value(-m)?;
            }
            floor += pair_infimum(&loss, weights[a], weights[b])?.value;
        }
    }
    Ok(current - floor)
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log(sum_k exp(s_k))`.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy `log_sum_exp(s) - s[y]`.
pub fn ce_loss(scores: &ScoreTable, y: usize) -> Result<f64> {
    scores.check_label(y)?;
    Ok(log_sum_exp(scores.as_slice()) - scores.as_slice()[y])
}

pub fn ce_gradient(scores: &ScoreTable, y: usize) -> Result<Vec<f64>> {
    scores.check_label(y)?;
    let mut g = softmax(scores.as_slice());
    g[y] -= 1.0;
    Ok(g)
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("GCE exponent must lie in (0, 1], got {q}")))
    }
}

/// Generalized cross-entropy `(1 - p_y^q) / q`.
pub fn gce_loss(scores: &ScoreTable, y: usize, q: f64) -> Result<f64> {
    scores.check_label(y)?;
    check_q(q)?;
    let log_py = scores.as_slice()[y] - log_sum_exp(scores.as_slice());
    Ok((1.0 - (q * log_py).exp()) / q)
}

/// Gradient of [`gce_loss`]: `p_y^q (p - e_y)`.
pub fn gce_gradient(scores: &ScoreTable, y: usize, q: f64) -> Result<Vec<f64>> {
    scores.check_label(y)?;
    check_q(q)?;
    let mut p = softmax(scores.as_slice());
    let weight = p[y].powf(q);
    p[y] -= 1.0;
    Ok(p.into_iter().map(|v| weight * v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{BaseLoss, Side};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(v: &[f64]) -> ScoreTable {
        ScoreTable::new(v.to_vec()).unwrap()
    }

    fn fd_gradient(f: impl Fn(&[f64]) -> f64, s: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..s.len())
            .map(|i| {
                let mut a = s.to_vec();
                let mut b = s.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn score_table_validation_and_ties() {
        assert!(ScoreTable::new(vec![1.0]).is_err());
        assert!(ScoreTable::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(table(&[1.0, 3.0, 3.0]).argmax(), 1);
        assert_eq!(table(&[0.0, 0.0]).argmax(), 0);
        assert!(CategoricalDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CategoricalDistribution::new(vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn sum_loss_examples() {
        let e = LinearCoreSpec::symmetric(BaseLoss::Exponential);
        assert_eq!(mc_sum_loss(&e, &table(&[0.3, 0.3, 0.3]), 1).unwrap(), 4.0);
        let v = mc_sum_loss(&e, &table(&[2.0, 0.0, 0.0]), 0).unwrap();
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.735759).abs() < 1e-6);
        let l = LinearCoreSpec::one_sided(BaseLoss::Logistic);
        let s = table(&[0.4, -1.3]);
        assert_eq!(mc_sum_loss(&l, &s, 1).unwrap(), l.value(-1.7).unwrap());
        assert!(mc_sum_loss(&l, &s, 2).is_err());
    }

    #[test]
    fn gradient_examples() {
        for spec in [
            LinearCoreSpec::symmetric(BaseLoss::Logistic),
            LinearCoreSpec::one_sided(BaseLoss::QUARTIC),
        ] {
            assert_eq!(
                mc_sum_loss_gradient(&spec, &table(&[0.0, 0.0]), 0).unwrap(),
                vec![-1.0, 1.0]
            );
        }
        let spec = LinearCoreSpec::symmetric(BaseLoss::Logistic);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = rng.random_range(0..4);
            let g = mc_sum_loss_gradient(&spec, &table(&s), y).unwrap();
            assert!(g.iter().sum::<f64>().abs() < 1e-12);
            let fd = fd_gradient(|v| mc_sum_loss(&spec, &table(v), y).unwrap(), &s);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn regret_examples() {
        let spec = LinearCoreSpec::symmetric(BaseLoss::Logistic);
        let p = CategoricalDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let r = mc_conditional_regrets(&spec, &p, &table(&[0.0, 1.0, -1.0])).unwrap();
        assert!((r.target - 0.2).abs() < 1e-15);
        assert!(r.target <= r.surrogate + 1e-8);
        let big = CategoricalDistribution::from_weights(&[1.0; 9]).unwrap();
        assert!(matches!(
            mc_conditional_regrets(&spec, &big, &table(&[0.0; 9])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn best_in_class_scores_have_zero_regret() {
        // two labels: the pairwise minimizer is realizable exactly
        let loss = MarginLoss::LinearCore(LinearCoreSpec::symmetric(BaseLoss::Logistic));
        let m = pair_infimum(&loss, 0.7, 0.3).unwrap();
        let spec = LinearCoreSpec::symmetric(BaseLoss::Logistic);
        let p = CategoricalDistribution::new(vec![0.7, 0.3]).unwrap();
        let r = mc_conditional_regrets(&spec, &p, &table(&[m.argmin, 0.0])).unwrap();
        assert!(r.surrogate.abs() <= 1e-6 && r.target == 0.0);
        // a point mass: rank-proportional scores with a large spread
        for side in [Side::Symmetric, Side::OneSided] {
            let spec = LinearCoreSpec::new(BaseLoss::Exponential, side, 1.0).unwrap();
            let p = CategoricalDistribution::new(vec![0.0, 1.0, 0.0]).unwrap();
            let r = mc_conditional_regrets(&spec, &p, &table(&[0.0, 60.0, 0.0])).unwrap();
            assert!(r.surrogate.abs() <= 1e-6, "{}", r.surrogate);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let s = table(&[0.0, 0.0]);
        assert!((ce_loss(&s, 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let g = ce_gradient(&table(&[0.3, -2.0, 1.1]), 2).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        let v = gce_loss(&s, 0, 0.5).unwrap();
        assert!((v - (1.0 - 0.5f64.sqrt()) / 0.5).abs() < 1e-15);
        assert!((v - 0.585786).abs() < 1e-6);
        let s = table(&[0.3, -2.0, 1.1]);
        let p = softmax(s.as_slice());
        assert!((gce_loss(&s, 1, 1.0).unwrap() - (1.0 - p[1])).abs() < 1e-15);
        assert!(gce_loss(&s, 1, 0.0).is_err());
        assert!(gce_loss(&s, 1, 1.5).is_err());
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let s: Vec<f64> = (0..5).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y = rng.random_range(0..5);
            let q = rng.random_range(0.05..1.0);
            let g = ce_gradient(&table(&s), y).unwrap();
            let fd = fd_gradient(|v| ce_loss(&table(v), y).unwrap(), &s);
            let gg = gce_gradient(&table(&s), y, q).unwrap();
            let fdg = fd_gradient(|v| gce_loss(&table(v), y, q).unwrap(), &s);
            for i in 0..5 {
                assert!((g[i] - fd[i]).abs() < 1e-5);
                assert!((gg[i] - fdg[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn one_sided_gradient_saturates_below_the_core() {
        let spec = LinearCoreSpec::one_sided(BaseLoss::Logistic);
        for m in [-50.0, -3.0, -1.0, 0.0, 0.5, 1.0] {
            let g = mc_sum_loss_gradient(&spec, &table(&[m, 0.0]), 0).unwrap();
            assert_eq!(g[0].abs(), 1.0);
        }
        let g = mc_sum_loss_gradient(&spec, &table(&[1.5, 0.0]), 0).unwrap();
        assert!(g[0].abs() < 1.0);
    }
}
