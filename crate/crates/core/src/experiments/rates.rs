use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_csv, write_json, OutputFile};
use crate::consistency::{biased_coin_curve, fit_loglog_slope, logspace, MarginLoss};
use crate::error::{Error, Result};
use crate::scalar::{BaseLoss, LinearCoreSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            delta_min: 1e-4,
            delta_max: 1e-1,
            points: 25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub loss: String,
    pub delta: f64,
    pub excess_surrogate: f64,
    pub excess_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    pub rows: Vec<RateRow>,
    /// Fitted log-log slope per loss name.
    pub slopes: BTreeMap<String, f64>,
}

impl RatesReport {
    pub fn write(&self, dir: &Path) -> Result<Vec<OutputFile>> {
        write_csv(&dir.join("rates.csv"), &self.rows)?;
        write_json(&dir.join("slopes.json"), &self.slopes)?;
        Ok(vec![OutputFile::new("rates.csv"), OutputFile::new("slopes.json")])
    }
}

/// The two symmetric linear-core surrogates and their plain bases.
pub fn rate_losses() -> [MarginLoss; 4] {
    [
        MarginLoss::LinearCore(LinearCoreSpec::symmetric(BaseLoss::Logistic)),
        MarginLoss::LinearCore(LinearCoreSpec::symmetric(BaseLoss::Exponential)),
        MarginLoss::Plain(BaseLoss::Logistic),
        MarginLoss::Plain(BaseLoss::Exponential),
    ]
}

pub fn run_rates(config: &RatesConfig) -> Result<RatesReport> {
    if !(config.delta_min > 0.0 && config.delta_min < config.delta_max && config.delta_max < 0.5) {
        return Err(Error::Domain(format!(
            "need 0 < delta_min < delta_max < 1/2, got [{}, {}]",
            config.delta_min, config.delta_max
        )));
    }
    let deltas = logspace(config.delta_min, config.delta_max, config.points);
    let mut rows = Vec::new();
    let mut slopes = BTreeMap::new();
    for loss in rate_losses() {
        let curve = biased_coin_curve(&loss, &deltas)?;
        slopes.insert(loss.name(), fit_loglog_slope(&curve)?);
        rows.extend(curve.into_iter().map(|p| RateRow {
            loss: p.loss_name,
            delta: p.delta,
            excess_surrogate: p.excess_surrogate,
            excess_target: p.excess_target,
        }));
    }
    Ok(RatesReport { rows, slopes })
}
