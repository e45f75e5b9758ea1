//! Seeded synthetic datasets: HMM sequence tagging and instance-dependent
//! label noise for multi-class classification.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiclass::softmax;
use crate::scalar::sigmoid;

/// One labeled sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceExample {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

/// Train and test sequences over a shared label set and input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub labels: usize,
    pub dim: usize,
    pub train: Vec<SequenceExample>,
    pub test: Vec<SequenceExample>,
}

/// Parameters of the HMM sequence generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSpec {
    pub len: usize,
    pub labels: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Scale of the i.i.d. normal transition logits; zero gives i.i.d.
    /// uniform labels.
    pub transition_temperature: f64,
    /// Standard deviation of the per-label emission centers.
    pub emission_scale: f64,
}

impl Default for HmmSpec {
    fn default() -> Self {
        Self {
            len: 10,
            labels: 10,
            dim: 20,
            n_train: 200,
            n_test: 100,
            seed: 0,
            transition_temperature: 2.0,
            emission_scale: 1.0,
        }
    }
}

impl HmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 || self.labels < 2 || self.dim == 0 || self.n_train == 0 {
            return Err(Error::Domain(format!(
                "HMM needs len >= 1, labels >= 2, dim >= 1, n_train >= 1; got {}, {}, {}, {}",
                self.len, self.labels, self.dim, self.n_train
            )));
        }
        if !(self.transition_temperature >= 0.0 && self.transition_temperature.is_finite()) {
            return Err(Error::Domain("transition temperature must be >= 0".into()));
        }
        if !(self.emission_scale >= 0.0 && self.emission_scale.is_finite()) {
            return Err(Error::Domain("emission scale must be >= 0".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws an HMM with random transitions and Gaussian emissions, then samples
/// train and test sequences from it.
pub fn generate_hmm_data(spec: &HmmSpec) -> Result<SequenceDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.labels;
    let transitions: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let logits: Vec<f64> = (0..k)
                .map(|_| spec.transition_temperature * normal(&mut rng))
                .collect();
            softmax(&logits)
        })
        .collect();
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..spec.dim).map(|_| spec.emission_scale * normal(&mut rng)).collect())
        .collect();
    let draw = |rng: &mut ChaCha8Rng| {
        let mut y = Vec::with_capacity(spec.len);
        y.push(rng.random_range(0..k));
        for j in 1..spec.len {
            y.push(sample_categorical(rng, &transitions[y[j - 1]]));
        }
        let x = y
            .iter()
            .map(|&l| centers[l].iter().map(|c| c + normal(rng)).collect())
            .collect();
        SequenceExample { x, y }
    };
    let train = (0..spec.n_train).map(|_| draw(&mut rng)).collect();
    let test = (0..spec.n_test).map(|_| draw(&mut rng)).collect();
    Ok(SequenceDataset {
        labels: k,
        dim: spec.dim,
        train,
        test,
    })
}

/// Parameters of the instance-dependent label-noise generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdnSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub noise_rate: f64,
    pub seed: u64,
    /// Standard deviation of the class centers (unit within-class noise).
    pub class_separation: f64,
}

impl Default for IdnSpec {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_test: 2000,
            dim: 10,
            n_classes: 5,
            noise_rate: 0.3,
            seed: 0,
            class_separation: 1.0,
        }
    }
}

/// A training point with its observed and clean labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyExample {
    pub x: Vec<f64>,
    pub label: usize,
    pub clean_label: usize,
    pub flipped: bool,
    pub flip_probability: f64,
    /// `|w . x - b|` for the random boundary `(w, b)`.
    pub boundary_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdnDataset {
    pub n_classes: usize,
    pub dim: usize,
    pub train: Vec<NoisyExample>,
    /// Clean test points.
    pub test: Vec<(Vec<f64>, usize)>,
    /// Class each label flips to.
    pub confusion: Vec<usize>,
}

impl IdnDataset {
    pub fn flip_rate(&self) -> f64 {
        self.train.iter().filter(|e| e.flipped).count() as f64 / self.train.len() as f64
    }
}

fn flip_probability(distance: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        2.0 * sigmoid(-distance / scale)
    }
}

/// Scale `s` with `mean_i 2 sigmoid(-d_i / s) = rate`, by bisection on `log s`.
fn calibrate_scale(distances: &[f64], rate: f64) -> f64 {
    if rate == 0.0 {
        return 0.0;
    }
    let mean = |s: f64| distances.iter().map(|d| flip_probability(*d, s)).sum::<f64>()
        / distances.len() as f64;
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid.exp()) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Gaussian class clusters whose labels flip with a probability that grows
/// as the point approaches a random hyperplane. Flipped labels go to the
/// class with the nearest center.
pub fn generate_idn_dataset(spec: &IdnSpec) -> Result<IdnDataset> {
    if spec.n_train == 0 || spec.dim == 0 || spec.n_classes < 2 {
        return Err(Error::Domain(
            "IDN data needs n_train >= 1, dim >= 1 and at least two classes".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return Err(Error::Domain(format!(
            "noise rate must lie in [0, 1), got {}",
            spec.noise_rate
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.n_classes;
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..spec.dim).map(|_| spec.class_separation * normal(&mut rng)).collect())
        .collect();
    let confusion: Vec<usize> = (0..k)
        .map(|a| {
            let dist = |b: usize| -> f64 {
                centers[a].iter().zip(&centers[b]).map(|(u, v)| (u - v).powi(2)).sum()
            };
            (0..k)
                .filter(|&b| b != a)
                .fold(None, |best: Option<usize>, b| match best {
                    Some(c) if dist(c) <= dist(b) => Some(c),
                    _ => Some(b),
                })
                .unwrap_or(0)
        })
        .collect();
    let point = |rng: &mut ChaCha8Rng| {
        let label = rng.random_range(0..k);
        let x: Vec<f64> = centers[label].iter().map(|c| c + normal(rng)).collect();
        (x, label)
    };
    let clean: Vec<(Vec<f64>, usize)> = (0..spec.n_train).map(|_| point(&mut rng)).collect();
    let test: Vec<(Vec<f64>, usize)> = (0..spec.n_test).map(|_| point(&mut rng)).collect();

    let mut direction: Vec<f64> = (0..spec.dim).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    let project = |x: &[f64]| -> f64 { x.iter().zip(&direction).map(|(a, b)| a * b).sum() };
    let anchor = &clean.choose(&mut rng).expect("non-empty").0;
    let threshold = project(anchor);
    let distances: Vec<f64> = clean.iter().map(|(x, _)| (project(x) - threshold).abs()).collect();
    let scale = calibrate_scale(&distances, spec.noise_rate);

    let train = clean
        .into_iter()
        .zip(distances)
        .map(|((x, clean_label), boundary_distance)| {
            let p = flip_probability(boundary_distance, scale);
            let flipped = rng.random::<f64>() < p;
            NoisyExample {
                x,
                label: if flipped { confusion[clean_label] } else { clean_label },
                clean_label,
                flipped,
                flip_probability: p,
                boundary_distance,
            }
        })
        .collect();
    Ok(IdnDataset {
        n_classes: k,
        dim: spec.dim,
        train,
        test,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hmm_is_deterministic() {
        let spec = HmmSpec {
            n_train: 10,
            len: 5,
            labels: 3,
            ..HmmSpec::default()
        };
        let a = generate_hmm_data(&spec).unwrap();
        assert_eq!(a, generate_hmm_data(&spec).unwrap());
        assert_eq!(a.train.len(), 10);
        assert!(a.train.iter().all(|e| e.x.len() == 5 && e.y.iter().all(|&l| l < 3)));
        let other = generate_hmm_data(&HmmSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_temperature_gives_uniform_labels() {
        let spec = HmmSpec {
            labels: 4,
            len: 50,
            n_train: 400,
            transition_temperature: 0.0,
            ..HmmSpec::default()
        };
        let data = generate_hmm_data(&spec).unwrap();
        let mut pair_counts = [[0usize; 4]; 4];
        let mut total = 0;
        for e in &data.train {
            for w in e.y.windows(2) {
                pair_counts[w[0]][w[1]] += 1;
                total += 1;
            }
        }
        for row in pair_counts {
            for c in row {
                let freq = c as f64 / total as f64;
                assert!((freq - 1.0 / 16.0).abs() < 0.01, "{freq}");
            }
        }
    }

    #[test]
    fn idn_rate_is_calibrated() {
        let spec = IdnSpec {
            n_train: 20_000,
            noise_rate: 0.4,
            ..IdnSpec::default()
        };
        let data = generate_idn_dataset(&spec).unwrap();
        assert!((data.flip_rate() - 0.4).abs() <= 0.02, "{}", data.flip_rate());
        assert!(data.train.iter().all(|e| (0.0..=1.0).contains(&e.flip_probability)));
        let mean_dist = |flipped: bool| {
            let d: Vec<f64> = data
                .train
                .iter()
                .filter(|e| e.flipped == flipped)
                .map(|e| e.boundary_distance)
                .collect();
            d.iter().sum::<f64>() / d.len() as f64
        };
        assert!(mean_dist(true) < mean_dist(false));
        for e in data.train.iter().filter(|e| e.flipped) {
            assert_eq!(e.label, data.confusion[e.clean_label]);
        }
    }

    #[test]
    fn idn_without_noise_flips_nothing() {
        let data = generate_idn_dataset(&IdnSpec {
            noise_rate: 0.0,
            ..IdnSpec::default()
        })
        .unwrap();
        assert_eq!(data.flip_rate(), 0.0);
        assert!(generate_idn_dataset(&IdnSpec {
            noise_rate: 1.0,
            ..IdnSpec::default()
        })
        .is_err());
    }
}
