//! Experiment drivers. Each `run_*` function is a pure function of its
//! config (wall-clock columns aside) and returns a report that knows how to
//! write its CSV files.

mod manifest;
mod noise;
mod rates;
mod scaling;
mod stability;
mod train_seq;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub use manifest::{Manifest, OutputFile};
pub use noise::{run_noise, GradHistRow, NoiseConfig, NoiseReport, NoiseRow};
pub use rates::{run_rates, RateRow, RatesConfig, RatesReport};
pub use scaling::{run_scaling, ScalingConfig, ScalingReport, ScalingRow};
pub use stability::{run_stability, StabilityConfig, StabilityReport};
pub use train_seq::{run_train_seq, TrainSeqConfig, TrainSeqReport};

/// Writes `rows` to `path` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
