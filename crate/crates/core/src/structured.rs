//! Linear-chain sequence scoring, the joint feature map, and exact
//! enumeration-based structured sum losses and regrets.
//!
//! Flat weight layout: the unary block comes first, label-major
//! (`label * d + k`), followed by the `|Y| x |Y|` transition block in
//! row-major `(from, to)` order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiclass::{pairwise_surrogate_regret, CategoricalDistribution, Regrets, ScoreTable};
use crate::scalar::LinearCoreSpec;

/// Largest number of label sequences an exact routine will enumerate.
pub const MAX_ENUMERATION: usize = 4096;

/// Largest label set accepted by [`structured_conditional_regrets`].
pub const MAX_REGRET_OUTCOMES: usize = 8;

/// Target loss over a finite label set, with zero diagonal and entries in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    n: usize,
    ell: Vec<f64>,
}

impl LossMatrix {
    /// Row-major `n x n` matrix; `ell[a * n + b]` is the loss of predicting
    /// `a` when the truth is `b`.
    pub fn new(n: usize, ell: Vec<f64>) -> Result<Self> {
        if n == 0 || ell.len() != n * n {
            return Err(Error::Domain(format!(
                "loss matrix needs {} entries for {n} labels, got {}",
                n * n,
                ell.len()
            )));
        }
        for a in 0..n {
            if ell[a * n + a] != 0.0 {
                return Err(Error::Domain(format!("nonzero diagonal at {a}")));
            }
        }
        if let Some(bad) = ell.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("loss entry {bad} outside [0, 1]")));
        }
        Ok(Self { n, ell })
    }

    pub fn zero_one(n: usize) -> Self {
        let ell = (0..n * n)
            .map(|i| if i / n == i % n { 0.0 } else { 1.0 })
            .collect();
        Self { n, ell }
    }

    /// Hamming loss between all sequences of length `len` over `labels`
    /// labels, indexed in [`enumerate_sequences`] order.
    pub fn hamming(labels: usize, len: usize) -> Result<Self> {
        let seqs = enumerate_sequences(labels, len)?;
        let n = seqs.len();
        let mut ell = Vec::with_capacity(n * n);
        for a in &seqs {
            for b in &seqs {
                ell.push(hamming_loss(a, b)?);
            }
        }
        Ok(Self { n, ell })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn loss(&self, predicted: usize, truth: usize) -> f64 {
        self.ell[predicted * self.n + truth]
    }

    /// `1 - loss`.
    pub fn similarity(&self, predicted: usize, truth: usize) -> f64 {
        1.0 - self.loss(predicted, truth)
    }
}

/// Linear-chain scorer over `labels` labels and `dim` input features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    labels: usize,
    dim: usize,
    weights: Vec<f64>,
}

impl ChainModel {
    /// The all-zero model.
    pub fn zeros(labels: usize, dim: usize) -> Result<Self> {
        if labels < 2 || dim == 0 {
            return Err(Error::Domain(format!(
                "need at least 2 labels and 1 feature, got {labels} and {dim}"
            )));
        }
        Ok(Self {
            labels,
            dim,
            weights: vec![0.0; feature_len(labels, dim)],
        })
    }

    pub fn from_weights(labels: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(labels, dim)?;
        if weights.len() != model.weights.len() {
            return Err(Error::Domain(format!(
                "expected {} weights, got {}",
                model.weights.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("weights must be finite".into()));
        }
        model.weights = weights;
        Ok(model)
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn unary(&self, label: usize) -> &[f64] {
        &self.weights[label * self.dim..(label + 1) * self.dim]
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.weights[self.transition_offset() + from * self.labels + to]
    }

    pub fn transition_offset(&self) -> usize {
        self.labels * self.dim
    }

    /// Unary score of `label` at one position.
    pub fn unary_score(&self, label: usize, xj: &[f64]) -> f64 {
        dot(self.unary(label), xj)
    }

    /// Row-major `L x |Y|` table of unary scores.
    pub fn unary_table(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len() * self.labels);
        for xj in x {
            for label in 0..self.labels {
                out.push(self.unary_score(label, xj));
            }
        }
        out
    }

    /// Checks shapes and label ranges of an input and (optionally) labels.
    pub fn check_input(&self, x: &[Vec<f64>], y: Option<&[usize]>) -> Result<()> {
        if x.is_empty() {
            return Err(Error::Domain("empty sequence".into()));
        }
        if let Some(xj) = x.iter().find(|xj| xj.len() != self.dim) {
            return Err(Error::Domain(format!(
                "feature vector of length {} for a model with d = {}",
                xj.len(),
                self.dim
            )));
        }
        if let Some(y) = y {
            self.check_labels(y, x.len())?;
        }
        Ok(())
    }

    fn check_labels(&self, y: &[usize], len: usize) -> Result<()> {
        if y.len() != len {
            return Err(Error::Domain(format!(
                "label sequence of length {} for input of length {len}",
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&l| l >= self.labels) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {} labels",
                self.labels
            )));
        }
        Ok(())
    }
}

/// Dimension of the joint feature vector.
pub fn feature_len(labels: usize, dim: usize) -> usize {
    labels * dim + labels * labels
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `w . F(x, y)`.
pub fn sequence_score(model: &ChainModel, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
    model.check_input(x, Some(y))?;
    Ok(score_unchecked(model, x, y))
}

pub(crate) fn score_unchecked(model: &ChainModel, x: &[Vec<f64>], y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (j, (xj, &label)) in x.iter().zip(y).enumerate() {
        total += model.unary_score(label, xj);
        if j > 0 {
            total += model.transition(y[j - 1], label);
        }
    }
    total
}

/// Dense joint feature vector `F(x, y)`.
pub fn joint_feature(model: &ChainModel, x: &[Vec<f64>], y: &[usize]) -> Result<Vec<f64>> {
    model.check_input(x, Some(y))?;
    let mut out = vec![0.0; model.weights.len()];
    add_joint_feature(model, x, y, 1.0, &mut out);
    Ok(out)
}

/// `out += scale * F(x, y)`, touching only `O(L d)` entries. Shapes are not
/// checked.
pub fn add_joint_feature(model: &ChainModel, x: &[Vec<f64>], y: &[usize], scale: f64, out: &mut [f64]) {
    let (dim, labels, offset) = (model.dim, model.labels, model.transition_offset());
    for (j, (xj, &label)) in x.iter().zip(y).enumerate() {
        let row = &mut out[label * dim..(label + 1) * dim];
        for (o, v) in row.iter_mut().zip(xj) {
            *o += scale * v;
        }
        if j > 0 {
            out[offset + y[j - 1] * labels + label] += scale;
        }
    }
}

/// Fraction of positions where two sequences differ.
pub fn hamming_loss(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "sequences of lengths {} and {} cannot be compared",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("empty sequences".into()));
    }
    let diff = a.iter().zip(b).filter(|(u, v)| u != v).count();
    Ok(diff as f64 / a.len() as f64)
}

/// Number of sequences, or `None` past [`MAX_ENUMERATION`].
fn sequence_count(labels: usize, len: usize) -> Option<usize> {
    let mut n: usize = 1;
    for _ in 0..len {
        n = n.checked_mul(labels)?;
        if n > MAX_ENUMERATION {
            return None;
        }
    }
    Some(n)
}

/// All label sequences in lexicographic order (position 0 most significant).
pub fn enumerate_sequences(labels: usize, len: usize) -> Result<Vec<Vec<usize>>> {
    let n = sequence_count(labels, len).ok_or_else(|| {
        Error::Unsupported(format!(
            "{labels}^{len} sequences exceed the enumeration limit {MAX_ENUMERATION}"
        ))
    })?;
    let mut out = Vec::with_capacity(n);
    let mut current = vec![0usize; len];
    for _ in 0..n {
        out.push(current.clone());
        for j in (0..len).rev() {
            current[j] += 1;
            if current[j] < labels {
                break;
            }
            current[j] = 0;
        }
    }
    Ok(out)
}

/// Index of a sequence in [`enumerate_sequences`] order.
pub fn sequence_index(labels: usize, y: &[usize]) -> usize {
    y.iter().fold(0, |acc, &l| acc * labels + l)
}

/// Inner-sum support of the structured sum loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSupport {
    /// Every `y'' != y'`.
    Full,
    /// Only sequences at Hamming distance one from `y'`.
    Neighbors,
}

/// Target loss defining the similarity weights `1 - loss(y', y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLoss {
    Hamming,
    ZeroOne,
}

impl TargetLoss {
    pub fn similarity(&self, predicted: &[usize], truth: &[usize]) -> Result<f64> {
        match self {
            TargetLoss::Hamming => Ok(1.0 - hamming_loss(predicted, truth)?),
            TargetLoss::ZeroOne => Ok(if predicted == truth { 1.0 } else { 0.0 }),
        }
    }
}

/// Options of the exact structured sum loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSumLoss {
    pub spec: LinearCoreSpec,
    pub target: TargetLoss,
    pub inner: InnerSupport,
    /// Multiplies every similarity weight.
    pub weight_scale: f64,
}

impl ExactSumLoss {
    pub fn new(spec: LinearCoreSpec) -> Self {
        Self {
            spec,
            target: TargetLoss::Hamming,
            inner: InnerSupport::Full,
            weight_scale: 1.0,
        }
    }

    pub fn with_target(mut self, target: TargetLoss) -> Self {
        self.target = target;
        self
    }

    pub fn with_inner(mut self, inner: InnerSupport) -> Self {
        self.inner = inner;
        self
    }

    pub fn with_weight_scale(mut self, scale: f64) -> Self {
        self.weight_scale = scale;
        self
    }
}

struct Enumerated {
    seqs: Vec<Vec<usize>>,
    scores: Vec<f64>,
    sims: Vec<f64>,
}

fn enumerate_instance(
    opts: &ExactSumLoss,
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<Enumerated> {
    model.check_input(x, Some(y))?;
    let seqs = enumerate_sequences(model.labels, x.len())?;
    let scores = seqs.iter().map(|s| score_unchecked(model, x, s)).collect();
    let sims = seqs
        .iter()
        .map(|s| Ok(opts.weight_scale * opts.target.similarity(s, y)?))
        .collect::<Result<_>>()?;
    Ok(Enumerated { seqs, scores, sims })
}

/// Calls `visit(outer, inner)` for every pair in the inner support.
fn for_each_pair(
    inner: InnerSupport,
    labels: usize,
    seqs: &[Vec<usize>],
    mut visit: impl FnMut(usize, usize) -> Result<()>,
) -> Result<()> {
    let n = seqs.len();
    match inner {
        InnerSupport::Full => {
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        visit(a, b)?;
                    }
                }
            }
        }
        InnerSupport::Neighbors => {
            let len = seqs.first().map_or(0, Vec::len);
            for (a, seq) in seqs.iter().enumerate() {
                let mut place = 1;
                for j in (0..len).rev() {
                    for label in 0..labels {
                        if label != seq[j] {
                            let b = a + label * place - seq[j] * place;
                            visit(a, b)?;
                        }
                    }
                    place *= labels;
                }
            }
        }
    }
    Ok(())
}

/// `sum_{y'} sim(y', y) sum_{y'' != y'} phi(s(y') - s(y''))` by enumeration.
pub fn structured_sum_loss_exact(
    opts: &ExactSumLoss,
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<f64> {
    let e = enumerate_instance(opts, model, x, y)?;
    let mut total = 0.0;
    for_each_pair(opts.inner, model.labels, &e.seqs, |a, b| {
        if e.sims[a] != 0.0 {
            total += e.sims[a] * opts.spec.value(e.scores[a] - e.scores[b])?;
        }
        Ok(())
    })?;
    Ok(total)
}

/// Gradient of [`structured_sum_loss_exact`] in flat weight space.
pub fn structured_sum_loss_gradient_exact(
    opts: &ExactSumLoss,
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<Vec<f64>> {
    let e = enumerate_instance(opts, model, x, y)?;
    let mut coef = vec![0.0; e.seqs.len()];
    for_each_pair(opts.inner, model.labels, &e.seqs, |a, b| {
        if e.sims[a] != 0.0 {
            let c = e.sims[a] * opts.spec.derivative(e.scores[a] - e.scores[b])?;
            coef[a] += c;
            coef[b] -= c;
        }
        Ok(())
    })?;
    let mut grad = vec![0.0; model.weights.len()];
    for (seq, c) in e.seqs.iter().zip(&coef) {
        if *c != 0.0 {
            add_joint_feature(model, x, seq, *c, &mut grad);
        }
    }
    Ok(grad)
}

/// Structured target and surrogate conditional regrets.
///
/// With `W(y') = sum_y p_y (1 - loss(y', y))` the surrogate regret is
/// `sum_{y'} W(y') sum_{y'' != y'} phi(s_y' - s_y'')` minus the sum over
/// unordered pairs of `inf_u [W_a phi(u) + W_b phi(-u)]`.
pub fn structured_conditional_regrets(
    spec: &LinearCoreSpec,
    p: &CategoricalDistribution,
    scores: &ScoreTable,
    loss: &LossMatrix,
) -> Result<Regrets> {
    let n = scores.len();
    if p.len() != n || loss.len() != n {
        return Err(Error::Domain(format!(
            "size mismatch: {} probabilities, {n} scores, {} loss rows",
            p.len(),
            loss.len()
        )));
    }
    if n > MAX_REGRET_OUTCOMES {
        return Err(Error::Unsupported(format!(
            "brute-force regrets support at most {MAX_REGRET_OUTCOMES} outcomes, got {n}"
        )));
    }
    let probs = p.as_slice();
    let risk: Vec<f64> = (0..n)
        .map(|a| (0..n).map(|b| probs[b] * loss.loss(a, b)).sum())
        .collect();
    let best = risk.iter().cloned().fold(f64::INFINITY, f64::min);
    let target = risk[scores.argmax()] - best;
    let w: Vec<f64> = (0..n)
        .map(|a| (0..n).map(|b| probs[b] * loss.similarity(a, b)).sum())
        .collect();
    let surrogate = pairwise_surrogate_regret(spec, &w, scores.as_slice())?;
    Ok(Regrets { target, surrogate })
}

/// `sqrt((sum_j |x_j|)^2 + (L - 1)^2)`, an upper bound on `|F(x, y)|` for
/// every labeling `y` of `x`.
pub fn feature_radius_of(x: &[Vec<f64>]) -> f64 {
    let unary: f64 = x.iter().map(|xj| dot(xj, xj).sqrt()).sum();
    let transitions = x.len().saturating_sub(1) as f64;
    (unary * unary + transitions * transitions).sqrt()
}

/// Largest [`feature_radius_of`] over a dataset.
pub fn feature_radius<'a>(inputs: impl IntoIterator<Item = &'a Vec<Vec<f64>>>) -> f64 {
    inputs
        .into_iter()
        .map(|x| feature_radius_of(x))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiclass::mc_conditional_regrets;
    use crate::scalar::BaseLoss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, labels: usize, dim: usize) -> ChainModel {
        let w = (0..feature_len(labels, dim))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        ChainModel::from_weights(labels, dim, w).unwrap()
    }

    fn random_input(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_loss(&[1, 2], &[1, 3]).unwrap(), 0.5);
        assert_eq!(hamming_loss(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(hamming_loss(&[0, 0], &[1, 1]).unwrap(), 1.0);
        assert!(hamming_loss(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn loss_matrix_validation() {
        assert!(LossMatrix::new(2, vec![0.0, 1.5, 0.2, 0.0]).is_err());
        assert!(LossMatrix::new(2, vec![0.1, 1.0, 0.2, 0.0]).is_err());
        let h = LossMatrix::hamming(2, 2).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(h.loss(0, 3), 1.0);
        assert_eq!(h.similarity(1, 3), 0.5);
        assert_eq!(LossMatrix::zero_one(3).loss(2, 1), 1.0);
    }

    #[test]
    fn enumeration_order_and_guard() {
        let seqs = enumerate_sequences(3, 2).unwrap();
        assert_eq!(seqs.len(), 9);
        assert_eq!(seqs[5], vec![1, 2]);
        for (i, s) in seqs.iter().enumerate() {
            assert_eq!(sequence_index(3, s), i);
        }
        assert!(enumerate_sequences(4, 6).is_ok());
        assert!(matches!(
            enumerate_sequences(4, 7),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn score_examples() {
        let zero = ChainModel::zeros(3, 2).unwrap();
        assert_eq!(sequence_score(&zero, &vec![vec![1.0, 2.0]; 3], &[0, 2, 1]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 3, 2);
        let x = vec![vec![0.5, -2.0]];
        let expected = m.unary(2)[0] * 0.5 - 2.0 * m.unary(2)[1];
        assert_eq!(sequence_score(&m, &x, &[2]).unwrap(), expected);
        assert!(sequence_score(&m, &x, &[3]).is_err());
        assert!(sequence_score(&m, &[vec![1.0]], &[0]).is_err());
    }

    #[test]
    fn score_is_a_dot_product_with_the_joint_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let labels = rng.random_range(2..5);
            let dim = rng.random_range(1..4);
            let len = rng.random_range(1..5);
            let m = random_model(&mut rng, labels, dim);
            let x = random_input(&mut rng, len, dim);
            let y: Vec<usize> = (0..len).map(|_| rng.random_range(0..labels)).collect();
            let f = joint_feature(&m, &x, &y).unwrap();
            let s = sequence_score(&m, &x, &y).unwrap();
            assert!((s - dot(m.weights(), &f)).abs() < 1e-12);
            assert!(dot(&f, &f).sqrt() <= feature_radius_of(&x) + 1e-12);
        }
    }

    #[test]
    fn transition_layout() {
        let m = ChainModel::zeros(3, 2).unwrap();
        let f = joint_feature(&m, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[2, 1]).unwrap();
        assert_eq!(f[2 * 2], 1.0);
        assert_eq!(f[1 * 2 + 1], 1.0);
        assert_eq!(f[6 + 2 * 3 + 1], 1.0);
        assert_eq!(f.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn exact_loss_examples() {
        let spec = LinearCoreSpec::symmetric(BaseLoss::Logistic);
        let zero = ChainModel::zeros(2, 1).unwrap();
        let opts = ExactSumLoss::new(spec).with_target(TargetLoss::ZeroOne);
        let v = structured_sum_loss_exact(&opts, &zero, &[vec![0.4]], &[1]).unwrap();
        assert_eq!(v, spec.value(0.0).unwrap());
        let scaled = ExactSumLoss::new(spec).with_weight_scale(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 3, 2);
        let x = random_input(&mut rng, 3, 2);
        assert_eq!(structured_sum_loss_exact(&scaled, &m, &x, &[0, 1, 2]).unwrap(), 0.0);
        let g = structured_sum_loss_gradient_exact(&scaled, &m, &x, &[0, 1, 2]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let long = random_input(&mut rng, 7, 2);
        let big = ChainModel::zeros(4, 2).unwrap();
        assert!(matches!(
            structured_sum_loss_exact(&opts, &big, &long, &[0; 7]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn exact_loss_matches_a_direct_double_loop() {
        let spec = LinearCoreSpec::one_sided(BaseLoss::Exponential);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = random_model(&mut rng, 2, 2);
            let x = random_input(&mut rng, 2, 2);
            let y = [rng.random_range(0..2), rng.random_range(0..2)];
            let mut direct = 0.0;
            let mut neighbors = 0.0;
            for a in 0..4usize {
                let ya = [a / 2, a % 2];
                let sim = 1.0 - hamming_loss(&ya, &y).unwrap();
                for b in 0..4usize {
                    let yb = [b / 2, b % 2];
                    if a == b {
                        continue;
                    }
                    let m_ab = sequence_score(&m, &x, &ya).unwrap()
                        - sequence_score(&m, &x, &yb).unwrap();
                    let term = sim * spec.value(m_ab).unwrap();
                    direct += term;
                    if hamming_loss(&ya, &yb).unwrap() == 0.5 {
                        neighbors += term;
                    }
                }
            }
            let opts = ExactSumLoss::new(spec);
            let full = structured_sum_loss_exact(&opts, &m, &x, &y).unwrap();
            let near = structured_sum_loss_exact(
                &opts.with_inner(InnerSupport::Neighbors),
                &m,
                &x,
                &y,
            )
            .unwrap();
            assert!((full - direct).abs() < 1e-10);
            assert!((near - neighbors).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let spec = LinearCoreSpec::symmetric(BaseLoss::Logistic);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for inner in [InnerSupport::Full, InnerSupport::Neighbors] {
            let opts = ExactSumLoss::new(spec).with_inner(inner);
            let m = random_model(&mut rng, 3, 2);
            let x = random_input(&mut rng, 3, 2);
            let y = [2, 0, 1];
            let g = structured_sum_loss_gradient_exact(&opts, &m, &x, &y).unwrap();
            let h = 1e-6;
            for i in 0..g.len() {
                let mut plus = m.weights().to_vec();
                let mut minus = plus.clone();
                plus[i] += h;
                minus[i] -= h;
                let fp = structured_sum_loss_exact(
                    &opts,
                    &ChainModel::from_weights(3, 2, plus).unwrap(),
                    &x,
                    &y,
                )
                .unwrap();
                let fm = structured_sum_loss_exact(
                    &opts,
                    &ChainModel::from_weights(3, 2, minus).unwrap(),
                    &x,
                    &y,
                )
                .unwrap();
                assert!((g[i] - (fp - fm) / (2.0 * h)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_one_regrets_reduce_to_multiclass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = LinearCoreSpec::symmetric(BaseLoss::Exponential);
        for _ in 0..50 {
            let n = rng.random_range(2..6);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let p = CategoricalDistribution::from_weights(&w).unwrap();
            let s = ScoreTable::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap();
            let a = structured_conditional_regrets(&spec, &p, &s, &LossMatrix::zero_one(n))
                .unwrap();
            let b = mc_conditional_regrets(&spec, &p, &s).unwrap();
            assert!((a.target - b.target).abs() < 1e-10);
            assert!((a.surrogate - b.surrogate).abs() < 1e-10);
        }
    }

    #[test]
    fn optimal_argmax_has_zero_target_regret() {
        let spec = LinearCoreSpec::one_sided(BaseLoss::Logistic);
        let p = CategoricalDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        let loss = LossMatrix::new(3, vec![0.0, 1.0, 0.2, 1.0, 0.0, 1.0, 0.2, 1.0, 0.0]).unwrap();
        // risks: 0.56, 0.5, 0.54
        let s = ScoreTable::new(vec![0.0, 1.0, 0.5]).unwrap();
        let r = structured_conditional_regrets(&spec, &p, &s, &loss).unwrap();
        assert_eq!(r.target, 0.0);
        let s = ScoreTable::new(vec![0.0, 0.1, 0.5]).unwrap();
        let r = structured_conditional_regrets(&spec, &p, &s, &loss).unwrap();
        assert!((r.target - 0.04).abs() < 1e-12);
        assert!(r.target <= r.surrogate);
    }
}
