use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_csv, OutputFile};
use crate::consistency::{logspace, tau_sweep, TauSlope};
use crate::error::Result;
use crate::scalar::BaseLoss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub base: BaseLoss,
    pub taus: Vec<f64>,
    /// Shrinking core widths, where the rate should revert to a square root.
    pub vanishing_taus: Vec<f64>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            base: BaseLoss::Logistic,
            taus: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            vanishing_taus: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            delta_min: 1e-4,
            delta_max: 1e-1,
            points: 25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StabilityRow {
    tau: f64,
    slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// One entry per distinct `tau`, in descending order.
    pub sweep: Vec<TauSlope>,
}

impl StabilityReport {
    pub fn slope(&self, tau: f64) -> Option<f64> {
        self.sweep.iter().find(|s| s.tau == tau).map(|s| s.slope)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<OutputFile>> {
        let rows: Vec<StabilityRow> = self
            .sweep
            .iter()
            .map(|s| StabilityRow {
                tau: s.tau,
                slope: s.slope,
            })
            .collect();
        write_csv(&dir.join("stability.csv"), &rows)?;
        Ok(vec![OutputFile::new("stability.csv")])
    }
}

pub fn run_stability(config: &StabilityConfig) -> Result<StabilityReport> {
    let mut taus: Vec<f64> = config.taus.iter().chain(&config.vanishing_taus).copied().collect();
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    let deltas = logspace(config.delta_min, config.delta_max, config.points);
    Ok(StabilityReport {
        sweep: tau_sweep(config.base, &taus, &deltas)?,
    })
}
