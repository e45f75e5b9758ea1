use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_csv, OutputFile};
use crate::data::{generate_hmm_data, HmmSpec, SequenceDataset};
use crate::error::Result;
use crate::scalar::{BaseLoss, Side};
use crate::trainers::{sgd_train, HistoryEntry, InnerProposal, Objective, TrainConfig, TrainOutcome};

/// Data and optimizer settings of one sequence-labeling run, as one flat
/// record. The defaults describe a small, nearly separable chain task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSeqConfig {
    pub objective: Objective,
    pub labels: usize,
    pub len: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub transition_temperature: f64,
    pub emission_scale: f64,
    pub eta: f64,
    pub iterations: u64,
    pub batch_size: usize,
    pub base: BaseLoss,
    pub side: Side,
    pub tau: f64,
    pub corruption_rate: f64,
    pub k_samples: usize,
    pub inner: InnerProposal,
    pub log_every: u64,
    pub seed: u64,
}

impl Default for TrainSeqConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            objective: t.objective,
            labels: 3,
            len: 4,
            dim: 8,
            n_train: 200,
            n_test: 200,
            transition_temperature: HmmSpec::default().transition_temperature,
            emission_scale: 1.5,
            eta: t.eta,
            iterations: t.iterations,
            batch_size: t.batch_size,
            base: t.base,
            side: t.side,
            tau: t.tau,
            corruption_rate: t.corruption_rate,
            k_samples: t.k_samples,
            inner: t.inner,
            log_every: t.log_every,
            seed: t.seed,
        }
    }
}

impl TrainSeqConfig {
    pub fn data_spec(&self) -> HmmSpec {
        HmmSpec {
            len: self.len,
            labels: self.labels,
            dim: self.dim,
            n_train: self.n_train,
            n_test: self.n_test,
            seed: self.seed,
            transition_temperature: self.transition_temperature,
            emission_scale: self.emission_scale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            iterations: self.iterations,
            batch_size: self.batch_size,
            seed: self.seed,
            objective: self.objective,
            base: self.base,
            side: self.side,
            tau: self.tau,
            corruption_rate: self.corruption_rate,
            k_samples: self.k_samples,
            inner: self.inner,
            log_every: self.log_every,
        }
    }

    pub fn data(&self) -> Result<SequenceDataset> {
        generate_hmm_data(&self.data_spec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSeqReport {
    pub outcome: TrainOutcome,
}

impl TrainSeqReport {
    pub fn history(&self) -> &[HistoryEntry] {
        &self.outcome.history
    }

    /// Sample standard deviation of the logged objective over the last
    /// `fraction` of iterations.
    pub fn terminal_objective_std(&self, fraction: f64) -> f64 {
        let h = self.history();
        let last = h.last().map_or(0, |e| e.iteration);
        let from = last as f64 * (1.0 - fraction);
        let tail: Vec<f64> = h
            .iter()
            .filter(|e| e.iteration as f64 >= from)
            .map(|e| e.objective)
            .collect();
        if tail.len() < 2 {
            return 0.0;
        }
        let n = tail.len() as f64;
        let mean = tail.iter().sum::<f64>() / n;
        (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    pub fn final_test_error(&self) -> f64 {
        self.history().last().map_or(f64::NAN, |e| e.test_error)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<OutputFile>> {
        write_csv(&dir.join("history.csv"), self.history())?;
        Ok(vec![OutputFile::timed("history.csv", &["seconds"])])
    }
}

pub fn run_train_seq(config: &TrainSeqConfig) -> Result<TrainSeqReport> {
    let data = config.data()?;
    Ok(TrainSeqReport {
        outcome: sgd_train(&data, &config.train_config())?,
    })
}
