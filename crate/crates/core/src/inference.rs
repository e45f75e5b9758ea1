//! Exact dynamic programs over linear chains: Viterbi, loss-augmented Viterbi,
//! and log-space forward-backward. Ties go to the lower label index.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::multiclass::log_sum_exp;
use crate::structured::{add_joint_feature, score_unchecked, ChainModel};

/// Relative slack under which two path scores count as tied.
const TIE_SLACK: f64 = 1e-12;

/// Lowest index whose value is within rounding of the maximum.
fn lowest_near_max(values: impl Iterator<Item = f64> + Clone) -> (usize, f64) {
    let best = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - TIE_SLACK * (1.0 + best.abs());
    let arg = values.into_iter().position(|v| v >= floor).unwrap_or(0);
    (arg, best)
}

/// Max-sum decoding of a unary table (`L x |Y|`, row-major). Suffix maxima
/// are computed right to left and the path is read left to right, so among
/// tied paths the lexicographically smallest one wins.
fn viterbi_table(model: &ChainModel, unary: &[f64], len: usize) -> (Vec<usize>, f64) {
    let k = model.labels();
    let mut suffix = unary[..len * k].to_vec();
    for j in (0..len - 1).rev() {
        for from in 0..k {
            let best = (0..k)
                .map(|to| model.transition(from, to) + suffix[(j + 1) * k + to])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[j * k + from] += best;
        }
    }
    let (first, score) = lowest_near_max(suffix[..k].iter().copied());
    let mut path = vec![first; len];
    for j in 1..len {
        let prev = path[j - 1];
        let row = &suffix[j * k..(j + 1) * k];
        path[j] = lowest_near_max((0..k).map(|to| model.transition(prev, to) + row[to])).0;
    }
    (path, score)
}

/// Highest-scoring label sequence and its score.
pub fn viterbi(model: &ChainModel, x: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    model.check_input(x, None)?;
    let unary = model.unary_table(x);
    Ok(viterbi_table(model, &unary, x.len()))
}

/// `argmax_{y'} [score(y') + hamming(y', y_true)]` and its augmented score.
pub fn loss_augmented_viterbi(
    model: &ChainModel,
    x: &[Vec<f64>],
    y_true: &[usize],
) -> Result<(Vec<usize>, f64)> {
    model.check_input(x, Some(y_true))?;
    let k = model.labels();
    let bonus = 1.0 / x.len() as f64;
    let mut unary = model.unary_table(x);
    for (j, &t) in y_true.iter().enumerate() {
        for label in 0..k {
            if label != t {
                unary[j * k + label] += bonus;
            }
        }
    }
    Ok(viterbi_table(model, &unary, x.len()))
}

/// Node and edge marginals of the chain distribution `p(y) ~ exp(score(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub labels: usize,
    /// `L x |Y|`, row-major.
    pub unary: Vec<f64>,
    /// `(L - 1) x |Y| x |Y|`, indexed `[j][from][to]` for the edge `(j, j + 1)`.
    pub transition: Vec<f64>,
    pub log_partition: f64,
}

impl Marginals {
    pub fn len(&self) -> usize {
        self.unary.len() / self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    pub fn unary_row(&self, j: usize) -> &[f64] {
        &self.unary[j * self.labels..(j + 1) * self.labels]
    }

    pub fn edge(&self, j: usize, from: usize, to: usize) -> f64 {
        let k = self.labels;
        self.transition[j * k * k + from * k + to]
    }
}

/// Log-space forward-backward.
pub fn forward_backward(model: &ChainModel, x: &[Vec<f64>]) -> Result<Marginals> {
    model.check_input(x, None)?;
    let (k, len) = (model.labels(), x.len());
    let unary = model.unary_table(x);
    let trans: Vec<f64> = (0..k * k).map(|i| model.transition(i / k, i % k)).collect();

    let mut alpha = vec![0.0; len * k];
    alpha[..k].copy_from_slice(&unary[..k]);
    let mut buf = vec![0.0; k];
    for j in 1..len {
        for to in 0..k {
            for from in 0..k {
                buf[from] = alpha[(j - 1) * k + from] + trans[from * k + to];
            }
            alpha[j * k + to] = log_sum_exp(&buf) + unary[j * k + to];
        }
    }
    let mut beta = vec![0.0; len * k];
    for j in (0..len - 1).rev() {
        for from in 0..k {
            for to in 0..k {
                buf[to] = trans[from * k + to] + unary[(j + 1) * k + to] + beta[(j + 1) * k + to];
            }
            beta[j * k + from] = log_sum_exp(&buf);
        }
    }
    let log_partition = log_sum_exp(&alpha[(len - 1) * k..]);

    let node = (0..len * k)
        .map(|i| (alpha[i] + beta[i] - log_partition).exp())
        .collect();
    let mut edges = vec![0.0; len.saturating_sub(1) * k * k];
    for j in 0..len.saturating_sub(1) {
        for from in 0..k {
            for to in 0..k {
                let v = alpha[j * k + from]
                    + trans[from * k + to]
                    + unary[(j + 1) * k + to]
                    + beta[(j + 1) * k + to]
                    - log_partition;
                edges[j * k * k + from * k + to] = v.exp();
            }
        }
    }
    Ok(Marginals {
        labels: k,
        unary: node,
        transition: edges,
        log_partition,
    })
}

/// `E_p[F(x, Y)]` from marginals.
pub fn expected_feature(model: &ChainModel, x: &[Vec<f64>], marginals: &Marginals) -> Vec<f64> {
    let (k, dim) = (model.labels(), model.dim());
    let offset = model.transition_offset();
    let mut out = vec![0.0; model.weights().len()];
    for (j, xj) in x.iter().enumerate() {
        for (label, &p) in marginals.unary_row(j).iter().enumerate() {
            let row = &mut out[label * dim..(label + 1) * dim];
            for (o, v) in row.iter_mut().zip(xj) {
                *o += p * v;
            }
        }
    }
    for j in 0..x.len().saturating_sub(1) {
        for i in 0..k * k {
            out[offset + i] += marginals.transition[j * k * k + i];
        }
    }
    out
}

/// CRF negative log-likelihood and its gradient `E[F] - F(x, y)`.
pub fn crf_nll_and_gradient(
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<(f64, Vec<f64>)> {
    model.check_input(x, Some(y))?;
    let marginals = forward_backward(model, x)?;
    let nll = marginals.log_partition - score_unchecked(model, x, y);
    let mut grad = expected_feature(model, x, &marginals);
    add_joint_feature(model, x, y, -1.0, &mut grad);
    Ok((nll, grad))
}

/// Structured hinge `max(0, max_{y'} [score(y') + hamming(y', y)] - score(y))`
/// and a subgradient. The subgradient is zero at equality.
pub fn ssvm_loss_and_subgradient(
    model: &ChainModel,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let (y_hat, augmented) = loss_augmented_viterbi(model, x, y)?;
    let loss = augmented - score_unchecked(model, x, y);
    let mut grad = vec![0.0; model.weights().len()];
    if loss > 0.0 {
        add_joint_feature(model, x, &y_hat, 1.0, &mut grad);
        add_joint_feature(model, x, y, -1.0, &mut grad);
        Ok((loss, grad))
    } else {
        Ok((0.0, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structured::{enumerate_sequences, feature_len, hamming_loss, sequence_score};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        labels: usize,
        dim: usize,
        len: usize,
        scale: f64,
    ) -> (ChainModel, Vec<Vec<f64>>, Vec<usize>) {
        let w = (0..feature_len(labels, dim))
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let m = ChainModel::from_weights(labels, dim, w).unwrap();
        let x = (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = (0..len).map(|_| rng.random_range(0..labels)).collect();
        (m, x, y)
    }

    fn brute_argmax(
        m: &ChainModel,
        x: &[Vec<f64>],
        bonus: impl Fn(&[usize]) -> f64,
    ) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for s in enumerate_sequences(m.labels(), x.len()).unwrap() {
            let v = sequence_score(m, x, &s).unwrap() + bonus(&s);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((s, v));
            }
        }
        best.unwrap()
    }

    #[test]
    fn viterbi_examples() {
        let zero = ChainModel::zeros(3, 2).unwrap();
        let x = vec![vec![1.0, 1.0]; 4];
        assert_eq!(viterbi(&zero, &x).unwrap(), (vec![0; 4], 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, _, _) = random_instance(&mut rng, 4, 2, 1, 1.0);
        let x1 = vec![vec![0.3, -0.8]];
        let scores: Vec<f64> = (0..4).map(|l| m.unary_score(l, &x1[0])).collect();
        let (path, s) = viterbi(&m, &x1).unwrap();
        assert_eq!(path[0], crate::multiclass::argmax(&scores));
        assert_eq!(s, scores[path[0]]);
        assert!(viterbi(&m, &[]).is_err());
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (m, x, _) = random_instance(&mut rng, 3, 2, 3, 2.0);
            let (path, s) = viterbi(&m, &x).unwrap();
            let (bp, bs) = brute_argmax(&m, &x, |_| 0.0);
            assert_eq!(path, bp);
            assert!((s - bs).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_augmented_examples() {
        let zero = ChainModel::zeros(2, 1).unwrap();
        let x = vec![vec![1.0]; 3];
        let (path, s) = loss_augmented_viterbi(&zero, &x, &[0, 1, 0]).unwrap();
        assert_eq!(path, vec![1, 0, 1]);
        assert!((s - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (m, x, y) = random_instance(&mut rng, 2, 2, 2, 1.0);
            let (path, s) = loss_augmented_viterbi(&m, &x, &y).unwrap();
            let (bp, bs) = brute_argmax(&m, &x, |s| hamming_loss(s, &y).unwrap());
            assert_eq!(path, bp);
            assert!((s - bs).abs() < 1e-10);
            assert!(s >= viterbi(&m, &x).unwrap().1);
        }
    }

    #[test]
    fn small_margin_still_prefers_a_violator() {
        // truth wins by 0.2 < 1/L = 0.5
        let m = ChainModel::from_weights(2, 1, vec![0.1, -0.1, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let x = vec![vec![1.0]; 2];
        let (path, _) = loss_augmented_viterbi(&m, &x, &[0, 0]).unwrap();
        assert_ne!(path, vec![0, 0]);
    }

    #[test]
    fn forward_backward_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, _, _) = random_instance(&mut rng, 3, 2, 1, 1.0);
        let x = vec![vec![0.7, 0.1]];
        let mg = forward_backward(&m, &x).unwrap();
        let scores: Vec<f64> = (0..3).map(|l| m.unary_score(l, &x[0])).collect();
        let soft = crate::multiclass::softmax(&scores);
        assert!((mg.log_partition - log_sum_exp(&scores)).abs() < 1e-12);
        for (a, b) in mg.unary_row(0).iter().zip(&soft) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = ChainModel::zeros(4, 1).unwrap();
        let mg = forward_backward(&zero, &vec![vec![1.0]; 3]).unwrap();
        assert!(mg.unary.iter().all(|p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn forward_backward_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (m, x, _) = random_instance(&mut rng, 2, 3, 3, 3.0);
            let mg = forward_backward(&m, &x).unwrap();
            let seqs = enumerate_sequences(2, 3).unwrap();
            let scores: Vec<f64> = seqs.iter().map(|s| sequence_score(&m, &x, s).unwrap()).collect();
            let z = log_sum_exp(&scores);
            assert!((mg.log_partition - z).abs() < 1e-8);
            assert!(mg.log_partition >= scores.iter().cloned().fold(f64::MIN, f64::max));
            for j in 0..3 {
                assert!((mg.unary_row(j).iter().sum::<f64>() - 1.0).abs() < 1e-8);
                for l in 0..2 {
                    let p: f64 = seqs
                        .iter()
                        .zip(&scores)
                        .filter(|(s, _)| s[j] == l)
                        .map(|(_, v)| (v - z).exp())
                        .sum();
                    assert!((mg.unary_row(j)[l] - p).abs() < 1e-10);
                }
            }
            for j in 0..2 {
                let slab: f64 = (0..4).map(|i| mg.edge(j, i / 2, i % 2)).sum();
                assert!((slab - 1.0).abs() < 1e-8);
                for to in 0..2 {
                    let col: f64 = (0..2).map(|from| mg.edge(j, from, to)).sum();
                    assert!((col - mg.unary_row(j + 1)[to]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn large_potentials_do_not_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (m, x, _) = random_instance(&mut rng, 50, 3, 10, 400.0);
        let mg = forward_backward(&m, &x).unwrap();
        assert!(mg.log_partition.is_finite());
        assert!(mg.unary.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn crf_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (m, x, y) = random_instance(&mut rng, 3, 2, 3, 1.0);
        let (nll, g) = crf_nll_and_gradient(&m, &x, &y).unwrap();
        assert!(nll > 0.0);
        let h = 1e-6;
        for i in 0..g.len() {
            let mut p = m.weights().to_vec();
            let mut q = p.clone();
            p[i] += h;
            q[i] -= h;
            let fp = crf_nll_and_gradient(&ChainModel::from_weights(3, 2, p).unwrap(), &x, &y)
                .unwrap()
                .0;
            let fq = crf_nll_and_gradient(&ChainModel::from_weights(3, 2, q).unwrap(), &x, &y)
                .unwrap()
                .0;
            assert!((g[i] - (fp - fq) / (2.0 * h)).abs() < 1e-5);
        }
        // an overwhelming score on y
        let mut strong = ChainModel::zeros(2, 1).unwrap();
        strong.weights_mut()[0] = 100.0;
        strong.weights_mut()[1] = -100.0;
        let (nll, _) = crf_nll_and_gradient(&strong, &vec![vec![1.0]; 2], &[0, 0]).unwrap();
        assert!(nll < 1e-80);
    }

    #[test]
    fn ssvm_examples() {
        let zero = ChainModel::zeros(3, 2).unwrap();
        let x = vec![vec![0.5, 0.5]; 4];
        let (loss, _) = ssvm_loss_and_subgradient(&zero, &x, &[0, 1, 2, 0]).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
        let mut sep = ChainModel::zeros(2, 1).unwrap();
        sep.weights_mut()[0] = 5.0;
        sep.weights_mut()[1] = -5.0;
        let (loss, g) = ssvm_loss_and_subgradient(&sep, &vec![vec![1.0]; 3], &[0, 0, 0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let (m, x, y) = random_instance(&mut rng, 3, 2, 3, 1.0);
            let (loss, _) = ssvm_loss_and_subgradient(&m, &x, &y).unwrap();
            let sy = sequence_score(&m, &x, &y).unwrap();
            let (_, bs) = brute_argmax(&m, &x, |s| hamming_loss(s, &y).unwrap());
            assert!((loss - (bs - sy).max(0.0)).abs() < 1e-10);
        }
    }
}
