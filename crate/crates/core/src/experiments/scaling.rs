use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{write_csv, OutputFile};
use crate::data::{generate_hmm_data, HmmSpec};
use crate::error::{Error, Result};
use crate::structured::ChainModel;
use crate::trainers::{Objective, Stepper, TrainConfig};

const MAX_TIMED_BATCHES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub labels: Vec<usize>,
    pub len: usize,
    pub dim: usize,
    pub n_train: usize,
    pub methods: Vec<Objective>,
    pub warmup_batches: usize,
    /// Timing continues past this many batches until `min_timed_seconds`
    /// have also elapsed.
    pub timed_batches: usize,
    pub min_timed_seconds: f64,
    /// The timed batches are split into this many blocks; block means whose
    /// coefficient of variation exceeds `cv_threshold` raise the flag.
    pub blocks: usize,
    pub cv_threshold: f64,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            labels: vec![50, 100, 200, 400],
            len: 20,
            dim: 20,
            n_train: 32,
            methods: vec![Objective::Ssvm, Objective::Crf, Objective::Lincore],
            warmup_batches: 20,
            timed_batches: 200,
            min_timed_seconds: 0.25,
            blocks: 5,
            cv_threshold: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub method: String,
    #[serde(rename = "Y")]
    pub labels: usize,
    pub seconds_per_batch: f64,
    pub cv_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn seconds(&self, method: Objective, labels: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.labels == labels)
            .map(|r| r.seconds_per_batch)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<OutputFile>> {
        write_csv(&dir.join("scaling.csv"), &self.rows)?;
        Ok(vec![OutputFile::timed(
            "scaling.csv",
            &["seconds_per_batch", "cv_flag"],
        )])
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if n < 2.0 || mean <= 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}

/// Times single-example SGD updates of each method on the calling thread.
pub fn run_scaling(config: &ScalingConfig) -> Result<ScalingReport> {
    if config.timed_batches < config.blocks.max(1) || config.blocks == 0 {
        return Err(Error::Domain(format!(
            "need at least one timed batch per block, got {} batches in {} blocks",
            config.timed_batches, config.blocks
        )));
    }
    let mut rows = Vec::new();
    for &labels in &config.labels {
        let data = generate_hmm_data(&HmmSpec {
            len: config.len,
            labels,
            dim: config.dim,
            n_train: config.n_train,
            n_test: 1,
            seed: config.seed,
            ..HmmSpec::default()
        })?;
        for &method in &config.methods {
            let stepper = Stepper::new(&TrainConfig {
                objective: method,
                batch_size: 1,
                seed: config.seed,
                ..TrainConfig::default()
            })?;
            let mut model = ChainModel::zeros(labels, config.dim)?;
            for t in 0..config.warmup_batches {
                stepper.step(&mut model, &data.train, t as u64)?;
            }
            let mut times = Vec::with_capacity(config.timed_batches);
            let mut total = 0.0;
            while times.len() < config.timed_batches
                || (total < config.min_timed_seconds && times.len() < MAX_TIMED_BATCHES)
            {
                let iteration = (config.warmup_batches + times.len()) as u64;
                let start = Instant::now();
                stepper.step(&mut model, &data.train, iteration)?;
                let dt = start.elapsed().as_secs_f64();
                total += dt;
                times.push(dt);
            }
            let per_block = times.len() / config.blocks;
            let block_means: Vec<f64> = times
                .chunks(per_block)
                .take(config.blocks)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            rows.push(ScalingRow {
                method: method.name().to_string(),
                labels,
                seconds_per_batch: median(&mut times),
                cv_flag: coefficient_of_variation(&block_means) > config.cv_threshold,
            });
        }
    }
    Ok(ScalingReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_cv() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), 0.0);
        assert!((coefficient_of_variation(&[1.0, 3.0]) - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }
}
