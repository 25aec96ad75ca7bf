//! Adverse-event probability and hazard estimators under competing events,
//! with bootstrap benchmarking against the Aalen-Johansen estimator,
//! random-effects meta-analysis and a competing-risks trial simulator.
//!
//! Times are in days. Arms are `E` (experimental) and `C` (control); all
//! ratio effects are E over C.

pub mod benchmark;
pub mod composite;
pub mod data;
pub mod effects;
pub mod error;
pub mod hazard;
pub mod meta;
pub mod par;
pub mod prob;
pub mod sim;

pub use data::{AnalysisDataset, Arm, ArmPair, ArmSample, CeMode, EventCode, Observation, SubjectRecord};
pub use error::{Result, SavvyError};
pub use prob::{ProbEstimatorId, ProbabilityEstimate};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
