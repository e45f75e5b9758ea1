use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{write_csv, OutputFile};
use crate::data::{generate_idn_dataset, IdnDataset, IdnSpec};
use crate::error::{Error, Result};
use crate::multiclass::{argmax, ce_gradient, gce_gradient, mc_sum_loss_gradient, softmax, ScoreTable};
use crate::rng::stream_rng;
use crate::scalar::{BaseLoss, LinearCoreSpec, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub class_separation: f64,
    pub noise_rates: Vec<f64>,
    pub gce_q: Vec<f64>,
    pub base: BaseLoss,
    pub side: Side,
    pub tau: f64,
    pub eta: f64,
    pub epochs: usize,
    /// Noise rate whose final models feed grad_hist.csv.
    pub histogram_noise_rate: f64,
    pub histogram_bins: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let idn = IdnSpec::default();
        Self {
            n_train: idn.n_train,
            n_test: idn.n_test,
            dim: idn.dim,
            n_classes: idn.n_classes,
            class_separation: idn.class_separation,
            noise_rates: vec![0.2, 0.3, 0.4],
            gce_q: (1..=10).map(|i| i as f64 / 10.0).collect(),
            base: BaseLoss::Logistic,
            side: Side::OneSided,
            tau: 1.0,
            eta: 0.005,
            epochs: 40,
            histogram_noise_rate: 0.4,
            histogram_bins: 20,
            seed: 0,
        }
    }
}

/// Losses compared on the noisy task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLoss {
    Ce,
    Gce(f64),
    LinearCore(LinearCoreSpec),
}

impl NoiseLoss {
    fn score_gradient(&self, scores: &ScoreTable, y: usize) -> Result<Vec<f64>> {
        match self {
            NoiseLoss::Ce => ce_gradient(scores, y),
            NoiseLoss::Gce(q) => gce_gradient(scores, y, *q),
            NoiseLoss::LinearCore(spec) => mc_sum_loss_gradient(spec, scores, y),
        }
    }
}

/// Affine multi-class scorer, one row of `dim + 1` weights per class with
/// the bias last.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * (dim + 1)],
        }
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.dim + 1)
            .map(|row| row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.dim])
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    fn add_outer(&mut self, score_grad: &[f64], x: &[f64], scale: f64) {
        for (row, g) in self.weights.chunks_mut(self.dim + 1).zip(score_grad) {
            let c = scale * g;
            if c != 0.0 {
                row[..self.dim].iter_mut().zip(x).for_each(|(w, v)| *w += c * v);
                row[self.dim] += c;
            }
        }
    }

    pub fn accuracy(&self, data: &[(Vec<f64>, usize)]) -> f64 {
        let hits = data.iter().filter(|(x, y)| self.predict(x) == *y).count();
        hits as f64 / data.len() as f64
    }
}

/// Plain SGD on the observed labels: `epochs * n_train` single-example
/// steps, example `t` drawn from stream `(t, 0)`.
pub fn train_linear(
    data: &IdnDataset,
    loss: NoiseLoss,
    eta: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearClassifier> {
    let mut model = LinearClassifier::zeros(data.n_classes, data.dim);
    let n = data.train.len();
    for t in 0..(epochs * n) as u64 {
        let i = stream_rng(seed, t, 0).random_range(0..n);
        let ex = &data.train[i];
        let scores = ScoreTable::new(model.scores(&ex.x))?;
        let g = loss.score_gradient(&scores, ex.label)?;
        model.add_outer(&g, &ex.x, -eta);
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("linear classifier weights became non-finite".into()));
    }
    Ok(model)
}

/// `|phi'(s[y] - max_{k != y} s[k])|`: the linear-core gradient magnitude on
/// the margin pair of the observed label `y`.
pub fn lc_margin_magnitude(spec: &LinearCoreSpec, scores: &[f64], y: usize) -> Result<f64> {
    let rival = scores
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != y)
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(spec.derivative(scores[y] - rival)?.abs())
}

/// `1 - p_y`: the magnitude of the cross-entropy score gradient on the observed label.
pub fn ce_magnitude(scores: &[f64], y: usize) -> f64 {
    1.0 - softmax(scores)[y]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub loss: String,
    /// GCE exponent; empty for the other losses.
    pub q: Option<f64>,
    pub noise_rate: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradHistRow {
    pub loss: String,
    pub group: String,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

/// Gradient magnitudes of the final models at the histogram noise rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientGroups {
    pub lc_clean: Vec<f64>,
    pub lc_noisy: Vec<f64>,
    pub ce_clean: Vec<f64>,
    pub ce_noisy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    pub rows: Vec<NoiseRow>,
    pub histogram: Vec<GradHistRow>,
    pub gradients: GradientGroups,
}

impl NoiseReport {
    pub fn accuracy(&self, loss: &str, noise_rate: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.loss == loss && r.noise_rate == noise_rate)
            .map(|r| r.test_accuracy)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<OutputFile>> {
        write_csv(&dir.join("noise.csv"), &self.rows)?;
        write_csv(&dir.join("grad_hist.csv"), &self.histogram)?;
        Ok(vec![OutputFile::new("noise.csv"), OutputFile::new("grad_hist.csv")])
    }
}

/// Counts of `values` in `bins` equal-width bins over `[0, 1]`; the last bin
/// is closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 / bins as f64, (b + 1) as f64 / bins as f64, c))
        .collect()
}

pub fn run_noise(config: &NoiseConfig) -> Result<NoiseReport> {
    if config.histogram_bins == 0 || config.epochs == 0 {
        return Err(Error::Domain("histogram_bins and epochs must be positive".into()));
    }
    let spec = LinearCoreSpec::new(config.base, config.side, config.tau)?;
    let lc_name = spec.name();
    let mut rows = Vec::new();
    let mut gradients = GradientGroups::default();
    for &rate in &config.noise_rates {
        let data = generate_idn_dataset(&IdnSpec {
            n_train: config.n_train,
            n_test: config.n_test,
            dim: config.dim,
            n_classes: config.n_classes,
            noise_rate: rate,
            seed: config.seed,
            class_separation: config.class_separation,
        })?;
        let train = |loss| train_linear(&data, loss, config.eta, config.epochs, config.seed);

        let ce = train(NoiseLoss::Ce)?;
        rows.push(NoiseRow {
            loss: "ce".into(),
            q: None,
            noise_rate: rate,
            test_accuracy: ce.accuracy(&data.test),
        });
        let mut best: Option<(f64, f64)> = None;
        for &q in &config.gce_q {
            let acc = train(NoiseLoss::Gce(q))?.accuracy(&data.test);
            rows.push(NoiseRow {
                loss: "gce".into(),
                q: Some(q),
                noise_rate: rate,
                test_accuracy: acc,
            });
            if best.is_none_or(|(_, a)| acc > a) {
                best = Some((q, acc));
            }
        }
        if let Some((q, acc)) = best {
            rows.push(NoiseRow {
                loss: "gce_best".into(),
                q: Some(q),
                noise_rate: rate,
                test_accuracy: acc,
            });
        }
        let lc = train(NoiseLoss::LinearCore(spec))?;
        rows.push(NoiseRow {
            loss: lc_name.clone(),
            q: None,
            noise_rate: rate,
            test_accuracy: lc.accuracy(&data.test),
        });

        if rate == config.histogram_noise_rate {
            for ex in &data.train {
                let lc_scores = lc.scores(&ex.x);
                let ce_scores = ce.scores(&ex.x);
                let lc_m = lc_margin_magnitude(&spec, &lc_scores, ex.label)?;
                let ce_m = ce_magnitude(&ce_scores, ex.label);
                if ex.flipped {
                    gradients.lc_noisy.push(lc_m);
                    gradients.ce_noisy.push(ce_m);
                } else {
                    gradients.lc_clean.push(lc_m);
                    gradients.ce_clean.push(ce_m);
                }
            }
        }
    }
    let mut histogram_rows = Vec::new();
    for (loss, group, values) in [
        ("ce", "clean", &gradients.ce_clean),
        ("ce", "noisy", &gradients.ce_noisy),
        (lc_name.as_str(), "clean", &gradients.lc_clean),
        (lc_name.as_str(), "noisy", &gradients.lc_noisy),
    ] {
        if values.is_empty() {
            continue;
        }
        for (bin_left, bin_right, count) in histogram(values, config.histogram_bins) {
            histogram_rows.push(GradHistRow {
                loss: loss.to_string(),
                group: group.to_string(),
                bin_left,
                bin_right,
                count,
            });
        }
    }
    Ok(NoiseReport {
        rows,
        histogram: histogram_rows,
        gradients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_closes_the_last_bin() {
        let h = histogram(&[0.0, 0.5, 0.99, 1.0], 4);
        assert_eq!(h.iter().map(|b| b.2).collect::<Vec<_>>(), vec![1, 0, 1, 2]);
        assert_eq!((h[3].0, h[3].1), (0.75, 1.0));
    }

    #[test]
    fn lc_magnitude_saturates_below_the_core() {
        let spec = LinearCoreSpec::one_sided(BaseLoss::Logistic);
        assert_eq!(lc_margin_magnitude(&spec, &[0.0, 3.0, -5.0], 0).unwrap(), 1.0);
        assert_eq!(lc_margin_magnitude(&spec, &[0.5, 0.0, -5.0], 0).unwrap(), 1.0);
        assert!(lc_margin_magnitude(&spec, &[10.0, 0.0, -5.0], 0).unwrap() < 1e-3);
    }
}
