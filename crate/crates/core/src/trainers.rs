//! Stochastic gradient estimators for the structured linear-core loss and
//! the SGD driver shared by the SSVM, CRF and linear-core objectives.
//!
//! The pair estimator draws an outer sequence `y'` from a per-position
//! corruption of the truth and an inner sequence `y''` from `y'`, and returns
//! `w1 w2 phi'(m) (F(y') - F(y''))` with `m = s(y') - s(y'')`,
//! `w1 = sim(y', y) / D1(y')` and `w2 = 1 / D2(y'' | y')`. Its expectation is
//! the gradient of the sum loss whose inner sum runs over the support of `D2`.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SequenceDataset, SequenceExample};
use crate::error::{Error, Result};
use crate::inference::{crf_nll_and_gradient, loss_augmented_viterbi, viterbi};
use crate::rng::stream_rng;
use crate::scalar::{BaseLoss, LinearCoreSpec, Side};
use crate::structured::{
    add_joint_feature, enumerate_sequences, hamming_loss, score_unchecked,
    structured_sum_loss_exact, structured_sum_loss_gradient_exact, ChainModel, ExactSumLoss,
    InnerSupport, MAX_ENUMERATION,
};

/// Objective values above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Draws used for Monte Carlo objective estimates on non-enumerable instances.
const EVAL_DRAWS: u64 = 16;

/// Iteration id reserved for objective evaluation streams.
const EVAL_ITERATION: u64 = u64::MAX >> 17;

/// Inner proposal `D2(y'' | y')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerProposal {
    /// One uniformly chosen position moved to a uniformly chosen other label.
    Neighbor,
    /// Uniform over all sequences other than `y'`.
    UniformFull,
}

impl InnerProposal {
    pub fn support(&self) -> InnerSupport {
        match self {
            InnerProposal::Neighbor => InnerSupport::Neighbors,
            InnerProposal::UniformFull => InnerSupport::Full,
        }
    }

    /// Log of the number of sequences in the support.
    pub fn log_support_size(&self, len: usize, labels: usize) -> f64 {
        match self {
            InnerProposal::Neighbor => ((len * (labels - 1)) as f64).ln(),
            InnerProposal::UniformFull => {
                let log_total = len as f64 * (labels as f64).ln();
                log_total + (-(-log_total).exp()).ln_1p()
            }
        }
    }
}

/// Outer corruption proposal plus inner proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairProposal {
    corruption_rate: f64,
    inner: InnerProposal,
}

fn other_label<R: Rng>(rng: &mut R, current: usize, labels: usize) -> usize {
    let r = rng.random_range(0..labels - 1);
    if r >= current {
        r + 1
    } else {
        r
    }
}

impl PairProposal {
    pub fn new(corruption_rate: f64, inner: InnerProposal) -> Result<Self> {
        if !(corruption_rate > 0.0 && corruption_rate < 1.0) {
            return Err(Error::Domain(format!(
                "corruption rate must lie in (0, 1), got {corruption_rate}"
            )));
        }
        Ok(Self {
            corruption_rate,
            inner,
        })
    }

    pub fn corruption_rate(&self) -> f64 {
        self.corruption_rate
    }

    pub fn inner(&self) -> InnerProposal {
        self.inner
    }

    /// Keeps each position with probability `1 - rho`, otherwise moves it to
    /// a uniformly chosen other label.
    pub fn sample_outer<R: Rng>(&self, y: &[usize], labels: usize, rng: &mut R) -> Vec<usize> {
        y.iter()
            .map(|&l| {
                if rng.random::<f64>() < self.corruption_rate {
                    other_label(rng, l, labels)
                } else {
                    l
                }
            })
            .collect()
    }

    pub fn outer_log_prob(&self, candidate: &[usize], y: &[usize], labels: usize) -> f64 {
        let keep = (1.0 - self.corruption_rate).ln();
        let moved = (self.corruption_rate / (labels - 1) as f64).ln();
        candidate
            .iter()
            .zip(y)
            .map(|(a, b)| if a == b { keep } else { moved })
            .sum()
    }

    pub fn sample_inner<R: Rng>(&self, outer: &[usize], labels: usize, rng: &mut R) -> Vec<usize> {
        match self.inner {
            InnerProposal::Neighbor => {
                let mut out = outer.to_vec();
                let j = rng.random_range(0..outer.len());
                out[j] = other_label(rng, outer[j], labels);
                out
            }
            InnerProposal::UniformFull => loop {
                let candidate: Vec<usize> =
                    (0..outer.len()).map(|_| rng.random_range(0..labels)).collect();
                if candidate != outer {
                    break candidate;
                }
            },
        }
    }

    /// `log D2(inner | outer)`; `-inf` outside the support.
    pub fn inner_log_prob(&self, inner: &[usize], outer: &[usize], labels: usize) -> f64 {
        let diff = inner.iter().zip(outer).filter(|(a, b)| a != b).count();
        let in_support = match self.inner {
            InnerProposal::Neighbor => diff == 1,
            InnerProposal::UniformFull => diff > 0,
        };
        if in_support {
            -self.inner.log_support_size(outer.len(), labels)
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// One draw of the pair estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub gradient: Vec<f64>,
    pub w1: f64,
    pub w2: f64,
    pub outer: Vec<usize>,
    pub inner: Vec<usize>,
    pub margin: f64,
}

struct PairTerms {
    log_w1: f64,
    log_w2: f64,
    margin: f64,
    slope: f64,
}

fn pair_terms(
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
    spec: &LinearCoreSpec,
    proposal: &PairProposal,
    outer: &[usize],
    inner: &[usize],
) -> Result<PairTerms> {
    let labels = model.labels();
    let similarity = 1.0 - hamming_loss(outer, y)?;
    let log_w1 = similarity.ln() - proposal.outer_log_prob(outer, y, labels);
    let log_w2 = -proposal.inner_log_prob(inner, outer, labels);
    let margin = score_unchecked(model, x, outer) - score_unchecked(model, x, inner);
    let slope = spec.derivative(margin)?;
    Ok(PairTerms {
        log_w1,
        log_w2,
        margin,
        slope,
    })
}

/// The estimator's value for a given pair `(outer, inner)`.
pub fn lc_pair_gradient_for(
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
    spec: &LinearCoreSpec,
    proposal: &PairProposal,
    outer: &[usize],
    inner: &[usize],
) -> Result<GradEstimate> {
    model.check_input(x, Some(y))?;
    let t = pair_terms(model, x, y, spec, proposal, outer, inner)?;
    let (w1, w2) = (t.log_w1.exp(), t.log_w2.exp());
    if !(w1.is_finite() && w2.is_finite()) {
        return Err(Error::Numeric(format!(
            "importance weights overflow: log w1 = {}, log w2 = {}",
            t.log_w1, t.log_w2
        )));
    }
    let mut gradient = vec![0.0; model.weights().len()];
    let c = w1 * w2 * t.slope;
    if c != 0.0 {
        add_joint_feature(model, x, outer, c, &mut gradient);
        add_joint_feature(model, x, inner, -c, &mut gradient);
    }
    Ok(GradEstimate {
        gradient,
        w1,
        w2,
        outer: outer.to_vec(),
        inner: inner.to_vec(),
        margin: t.margin,
    })
}

/// Samples a pair and returns the estimator's value.
pub fn lc_pair_gradient_estimate<R: Rng>(
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
    spec: &LinearCoreSpec,
    proposal: &PairProposal,
    rng: &mut R,
) -> Result<GradEstimate> {
    model.check_input(x, Some(y))?;
    let outer = proposal.sample_outer(y, model.labels(), rng);
    let inner = proposal.sample_inner(&outer, model.labels(), rng);
    lc_pair_gradient_for(model, x, y, spec, proposal, &outer, &inner)
}

/// Exact expectation of the pair estimator, by enumerating every
/// `(outer, inner)` pair with its proposal probability.
pub fn lc_pair_expectation(
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
    spec: &LinearCoreSpec,
    proposal: &PairProposal,
) -> Result<Vec<f64>> {
    model.check_input(x, Some(y))?;
    let labels = model.labels();
    let seqs = enumerate_sequences(labels, x.len())?;
    let mut mean = vec![0.0; model.weights().len()];
    for outer in &seqs {
        let p1 = proposal.outer_log_prob(outer, y, labels).exp();
        for inner in &seqs {
            let log_p2 = proposal.inner_log_prob(inner, outer, labels);
            if log_p2 == f64::NEG_INFINITY {
                continue;
            }
            let g = lc_pair_gradient_for(model, x, y, spec, proposal, outer, inner)?;
            let p = p1 * log_p2.exp();
            for (m, v) in mean.iter_mut().zip(&g.gradient) {
                *m += p * v;
            }
        }
    }
    Ok(mean)
}

fn uniform_sequence<R: Rng>(rng: &mut R, len: usize, labels: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..labels)).collect()
}

/// `(1/K) sum_k phi'(s(y*) - s(y_k)) (F(y*) - F(y_k))` with `y_k` uniform.
pub fn lc_ksample_gradient_estimate<R: Rng>(
    model: &ChainModel,
    x: &[Vec<f64>],
    y_true: &[usize],
    spec: &LinearCoreSpec,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.check_input(x, Some(y_true))?;
    if k == 0 {
        return Err(Error::Domain("need at least one negative sample".into()));
    }
    let s_true = score_unchecked(model, x, y_true);
    let mut gradient = vec![0.0; model.weights().len()];
    for _ in 0..k {
        let yk = uniform_sequence(rng, x.len(), model.labels());
        let c = spec.derivative(s_true - score_unchecked(model, x, &yk))? / k as f64;
        add_joint_feature(model, x, y_true, c, &mut gradient);
        add_joint_feature(model, x, &yk, -c, &mut gradient);
    }
    Ok(gradient)
}

/// Exact mean of one K-sample term, by enumeration.
pub fn lc_ksample_expectation(
    model: &ChainModel,
    x: &[Vec<f64>],
    y_true: &[usize],
    spec: &LinearCoreSpec,
) -> Result<Vec<f64>> {
    model.check_input(x, Some(y_true))?;
    let seqs = enumerate_sequences(model.labels(), x.len())?;
    let s_true = score_unchecked(model, x, y_true);
    let weight = 1.0 / seqs.len() as f64;
    let mut mean = vec![0.0; model.weights().len()];
    for yk in &seqs {
        let c = weight * spec.derivative(s_true - score_unchecked(model, x, yk))?;
        add_joint_feature(model, x, y_true, c, &mut mean);
        add_joint_feature(model, x, yk, -c, &mut mean);
    }
    Ok(mean)
}

/// A stochastic gradient oracle for one training example.
pub trait GradientEstimator {
    fn sample(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>>;

    /// Exact mean of [`GradientEstimator::sample`], when it can be computed.
    fn expectation(&self, model: &ChainModel, x: &[Vec<f64>], y: &[usize])
        -> Result<Option<Vec<f64>>>;
}

fn enumerable(labels: usize, len: usize) -> bool {
    (labels as f64).powi(len as i32) <= MAX_ENUMERATION as f64
}

/// The K-negative uniform estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSampleEstimator {
    pub spec: LinearCoreSpec,
    pub k: usize,
}

impl GradientEstimator for KSampleEstimator {
    fn sample(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        lc_ksample_gradient_estimate(model, x, y, &self.spec, self.k, rng)
    }

    fn expectation(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
    ) -> Result<Option<Vec<f64>>> {
        if !enumerable(model.labels(), x.len()) {
            return Ok(None);
        }
        lc_ksample_expectation(model, x, y, &self.spec).map(Some)
    }
}

/// The importance-weighted pair estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEstimator {
    pub spec: LinearCoreSpec,
    pub proposal: PairProposal,
}

impl GradientEstimator for PairEstimator {
    fn sample(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        lc_pair_gradient_estimate(model, x, y, &self.spec, &self.proposal, rng).map(|g| g.gradient)
    }

    fn expectation(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
    ) -> Result<Option<Vec<f64>>> {
        if !enumerable(model.labels(), x.len()) {
            return Ok(None);
        }
        let opts = ExactSumLoss::new(self.spec).with_inner(self.proposal.inner.support());
        structured_sum_loss_gradient_exact(&opts, model, x, y).map(Some)
    }
}

/// The exact gradient of a structured sum loss, as a zero-variance estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEstimator {
    pub loss: ExactSumLoss,
}

impl GradientEstimator for ExactEstimator {
    fn sample(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        structured_sum_loss_gradient_exact(&self.loss, model, x, y)
    }

    fn expectation(
        &self,
        model: &ChainModel,
        x: &[Vec<f64>],
        y: &[usize],
    ) -> Result<Option<Vec<f64>>> {
        structured_sum_loss_gradient_exact(&self.loss, model, x, y).map(Some)
    }
}

/// Minimum number of trials accepted by [`empirical_gradient_variance`].
pub const MIN_VARIANCE_TRIALS: usize = 1000;

/// Mean squared distance of estimates from the exact mean, or from the
/// empirical mean when the exact one is unavailable.
pub fn empirical_gradient_variance<E: GradientEstimator + ?Sized>(
    estimator: &E,
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if trials < MIN_VARIANCE_TRIALS {
        return Err(Error::Domain(format!(
            "need at least {MIN_VARIANCE_TRIALS} trials, got {trials}"
        )));
    }
    let samples: Vec<Vec<f64>> = (0..trials)
        .map(|_| estimator.sample(model, x, y, rng))
        .collect::<Result<_>>()?;
    let center = match estimator.expectation(model, x, y)? {
        Some(mean) => mean,
        None => {
            let mut mean = vec![0.0; model.weights().len()];
            for s in &samples {
                for (m, v) in mean.iter_mut().zip(s) {
                    *m += v / trials as f64;
                }
            }
            mean
        }
    };
    let total: f64 = samples
        .iter()
        .map(|s| s.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok(total / trials as f64)
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Ssvm,
    Crf,
    Lincore,
    LincoreKsample,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Ssvm => "ssvm",
            Objective::Crf => "crf",
            Objective::Lincore => "lincore",
            Objective::LincoreKsample => "lincore_ksample",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssvm" => Ok(Objective::Ssvm),
            "crf" => Ok(Objective::Crf),
            "lincore" => Ok(Objective::Lincore),
            "lincore_ksample" => Ok(Objective::LincoreKsample),
            other => Err(Error::Domain(format!("unknown objective {other:?}"))),
        }
    }
}

/// SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub iterations: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: Objective,
    pub base: BaseLoss,
    pub side: Side,
    pub tau: f64,
    pub corruption_rate: f64,
    pub k_samples: usize,
    pub inner: InnerProposal,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            iterations: 20_000,
            batch_size: 1,
            seed: 0,
            objective: Objective::Lincore,
            base: BaseLoss::Logistic,
            side: Side::OneSided,
            tau: 1.0,
            corruption_rate: 0.3,
            k_samples: 4,
            inner: InnerProposal::Neighbor,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn spec(&self) -> Result<LinearCoreSpec> {
        LinearCoreSpec::new(self.base, self.side, self.tau)
    }

    pub fn proposal(&self) -> Result<PairProposal> {
        PairProposal::new(self.corruption_rate, self.inner)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!("step size must be >= 0, got {}", self.eta)));
        }
        if self.batch_size == 0 || self.log_every == 0 || self.k_samples == 0 {
            return Err(Error::Domain(
                "batch_size, log_every and k_samples must be positive".into(),
            ));
        }
        self.spec()?;
        self.proposal()?;
        Ok(())
    }
}

/// One logged point of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub objective: f64,
    pub test_error: f64,
    /// Cumulative time spent in update steps.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ChainModel,
    pub history: Vec<HistoryEntry>,
}

/// Precomputed pieces of an SGD step.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    config_seed: u64,
    eta: f64,
    batch: usize,
    objective: Objective,
    spec: LinearCoreSpec,
    proposal: PairProposal,
    k: usize,
}

impl Stepper {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config_seed: config.seed,
            eta: config.eta,
            batch: config.batch_size,
            objective: config.objective,
            spec: config.spec()?,
            proposal: config.proposal()?,
            k: config.k_samples,
        })
    }

    /// Applies update `iteration` to `model`. Randomness comes from the
    /// streams `(iteration, slot)` with one slot per batch element.
    pub fn step(&self, model: &mut ChainModel, train: &[SequenceExample], iteration: u64) -> Result<()> {
        if train.is_empty() {
            return Err(Error::Domain("empty training set".into()));
        }
        let mut sparse: Vec<(usize, Vec<usize>, f64)> = Vec::new();
        let mut dense: Option<Vec<f64>> = None;
        for b in 0..self.batch {
            let mut rng = stream_rng(self.config_seed, iteration, b as u64);
            let i = rng.random_range(0..train.len());
            let ex = &train[i];
            match self.objective {
                Objective::Ssvm => {
                    let (y_hat, augmented) = loss_augmented_viterbi(model, &ex.x, &ex.y)?;
                    if augmented - score_unchecked(model, &ex.x, &ex.y) > 0.0 {
                        sparse.push((i, y_hat, 1.0));
                        sparse.push((i, ex.y.clone(), -1.0));
                    }
                }
                Objective::Crf => {
                    let (_, g) = crf_nll_and_gradient(model, &ex.x, &ex.y)?;
                    match dense.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v),
                        None => dense = Some(g),
                    }
                }
                Objective::Lincore => {
                    let labels = model.labels();
                    let outer = self.proposal.sample_outer(&ex.y, labels, &mut rng);
                    let inner = self.proposal.sample_inner(&outer, labels, &mut rng);
                    let t = pair_terms(model, &ex.x, &ex.y, &self.spec, &self.proposal, &outer, &inner)?;
                    let log_norm = pair_log_normalizer(ex.y.len(), labels, self.proposal.inner);
                    let c = (t.log_w1 + t.log_w2 - log_norm).exp() * t.slope;
                    if c != 0.0 {
                        sparse.push((i, outer, c));
                        sparse.push((i, inner, -c));
                    }
                }
                Objective::LincoreKsample => {
                    let s_true = score_unchecked(model, &ex.x, &ex.y);
                    for _ in 0..self.k {
                        let yk = uniform_sequence(&mut rng, ex.y.len(), model.labels());
                        let c = self.spec.derivative(s_true - score_unchecked(model, &ex.x, &yk))?
                            / self.k as f64;
                        if c != 0.0 {
                            sparse.push((i, ex.y.clone(), c));
                            sparse.push((i, yk, -c));
                        }
                    }
                }
            }
        }
        let scale = -self.eta / self.batch as f64;
        if scale == 0.0 {
            return Ok(());
        }
        if let Some(g) = dense {
            model
                .weights_mut()
                .iter_mut()
                .zip(&g)
                .for_each(|(w, v)| *w += scale * v);
        }
        for (i, seq, c) in sparse {
            add_sparse(model, &train[i].x, &seq, scale * c);
        }
        Ok(())
    }
}

fn add_sparse(model: &mut ChainModel, x: &[Vec<f64>], y: &[usize], scale: f64) {
    let (dim, labels, offset) = (model.dim(), model.labels(), model.transition_offset());
    let w = model.weights_mut();
    for (j, (xj, &label)) in x.iter().zip(y).enumerate() {
        for (o, v) in w[label * dim..(label + 1) * dim].iter_mut().zip(xj) {
            *o += scale * v;
        }
        if j > 0 {
            w[offset + y[j - 1] * labels + label] += scale;
        }
    }
}

/// `log(Z1 * N2)`: the total similarity mass `|Y|^(L-1)` of the Hamming
/// target times the inner support size. Dividing the pair estimator by it
/// turns the sum loss into a weighted average.
pub fn pair_log_normalizer(len: usize, labels: usize, inner: InnerProposal) -> f64 {
    (len as f64 - 1.0) * (labels as f64).ln() + inner.log_support_size(len, labels)
}

/// The linear-core objective that training with `config` descends, per
/// example: the normalized pair objective or the K-sample expectation.
fn lincore_example_objective(
    model: &ChainModel,
    ex: &SequenceExample,
    config: &TrainConfig,
    spec: &LinearCoreSpec,
    proposal: &PairProposal,
    index: usize,
) -> Result<f64> {
    let (labels, len) = (model.labels(), ex.y.len());
    let exact = enumerable(labels, len);
    match config.objective {
        Objective::LincoreKsample => {
            let s_true = score_unchecked(model, &ex.x, &ex.y);
            if exact {
                let seqs = enumerate_sequences(labels, len)?;
                let mut total = 0.0;
                for s in &seqs {
                    total += spec.value(s_true - score_unchecked(model, &ex.x, s))?;
                }
                Ok(total / seqs.len() as f64)
            } else {
                let mut rng = stream_rng(config.seed, EVAL_ITERATION, index as u64 % 65536);
                let mut total = 0.0;
                for _ in 0..EVAL_DRAWS {
                    let s = uniform_sequence(&mut rng, len, labels);
                    total += spec.value(s_true - score_unchecked(model, &ex.x, &s))?;
                }
                Ok(total / EVAL_DRAWS as f64)
            }
        }
        _ => {
            let log_norm = pair_log_normalizer(len, labels, proposal.inner);
            if exact {
                let opts = ExactSumLoss::new(*spec).with_inner(proposal.inner.support());
                Ok(structured_sum_loss_exact(&opts, model, &ex.x, &ex.y)? * (-log_norm).exp())
            } else {
                let mut rng = stream_rng(config.seed, EVAL_ITERATION, index as u64 % 65536);
                let mut total = 0.0;
                for _ in 0..EVAL_DRAWS {
                    let outer = proposal.sample_outer(&ex.y, labels, &mut rng);
                    let inner = proposal.sample_inner(&outer, labels, &mut rng);
                    let t = pair_terms(model, &ex.x, &ex.y, spec, proposal, &outer, &inner)?;
                    total += (t.log_w1 + t.log_w2 - log_norm).exp() * spec.value(t.margin)?;
                }
                Ok(total / EVAL_DRAWS as f64)
            }
        }
    }
}

/// Mean training objective of `model` under `config`.
pub fn training_objective(
    model: &ChainModel,
    train: &[SequenceExample],
    config: &TrainConfig,
) -> Result<f64> {
    let spec = config.spec()?;
    let proposal = config.proposal()?;
    let mut total = 0.0;
    for (i, ex) in train.iter().enumerate() {
        total += match config.objective {
            Objective::Ssvm => {
                let (_, aug) = loss_augmented_viterbi(model, &ex.x, &ex.y)?;
                (aug - score_unchecked(model, &ex.x, &ex.y)).max(0.0)
            }
            Objective::Crf => {
                let table = crate::inference::forward_backward(model, &ex.x)?;
                table.log_partition - score_unchecked(model, &ex.x, &ex.y)
            }
            Objective::Lincore | Objective::LincoreKsample => {
                lincore_example_objective(model, ex, config, &spec, &proposal, i)?
            }
        };
    }
    Ok(total / train.len() as f64)
}

/// Mean Hamming error of Viterbi decoding.
pub fn hamming_error(model: &ChainModel, data: &[SequenceExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    let mut total = 0.0;
    for ex in data {
        let (path, _) = viterbi(model, &ex.x)?;
        total += hamming_loss(&path, &ex.y)?;
    }
    Ok(total / data.len() as f64)
}

/// Runs `config.iterations` SGD steps from the zero model, logging every
/// `config.log_every` iterations and after the last one.
pub fn sgd_train(data: &SequenceDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let stepper = Stepper::new(config)?;
    let mut model = ChainModel::zeros(data.labels, data.dim)?;
    let mut history = Vec::new();
    let mut seconds = 0.0;
    let log = |model: &ChainModel, iteration: u64, seconds: f64, history: &mut Vec<HistoryEntry>| {
        let objective = training_objective(model, &data.train, config)?;
        if !objective.is_finite() || objective > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                iteration: iteration as usize,
                objective,
            });
        }
        history.push(HistoryEntry {
            iteration,
            objective,
            test_error: hamming_error(model, &data.test)?,
            seconds,
        });
        Ok(())
    };
    log(&model, 0, seconds, &mut history)?;
    for t in 0..config.iterations {
        let start = Instant::now();
        stepper.step(&mut model, &data.train, t)?;
        seconds += start.elapsed().as_secs_f64();
        let done = t + 1;
        if done % config.log_every == 0 || done == config.iterations {
            log(&model, done, seconds, &mut history)?;
        }
    }
    Ok(TrainOutcome { model, history })
}
