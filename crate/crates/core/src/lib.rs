//! Linear-core surrogate losses for binary, multi-class and linear-chain
//! structured prediction, with exact inference baselines, a pair-sampling
//! stochastic trainer and the experiment drivers that exercise them.

pub mod checks;
pub mod consistency;
pub mod data;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod minimize;
pub mod multiclass;
pub mod rng;
pub mod scalar;
pub mod structured;
pub mod trainers;

pub use error::{Error, Result};
