//! Personalized federated learning for multi-task fault diagnosis of
//! rotating machinery, simulated end to end on synthetic fleets.
//!
//! Pipeline: [`synth`] fleets → [`dsp`] features → [`fedclust`] similar-machine
//! groups → [`fedcore`] hierarchical training of the [`model`] → [`eval`]
//! comparisons against single-machine, vanilla and clustering baselines.

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fedclust;
pub mod fedcore;
pub mod model;
pub mod nn;
pub mod seed;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use synth::{Dataset, FaultType, MachineSpec, ScenarioConfig, VibrationRecord};
