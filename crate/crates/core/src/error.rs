use thiserror::Error;

use crate::data::Arm;

pub type Result<T> = std::result::Result<T, SavvyError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SavvyError {
    #[error("empty arm {0}")]
    EmptyArm(Arm),

    #[error("non-positive time {time} for subject {subject_id}")]
    NonPositiveTime { subject_id: String, time: f64 },

    #[error("non-finite time for subject {subject_id}")]
    NonFiniteTime { subject_id: String },

    #[error("duplicate subject_id {0}")]
    DuplicateSubject(String),

    #[error("invalid quantile {0}: must lie in (0, 1]")]
    InvalidQuantile(f64),

    #[error("zero person-time")]
    ZeroPersonTime,

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("non-identifiable HR: {0}")]
    NonIdentifiableHr(String),

    #[error("AE excluded from RR analysis: zero probability in arm {0}")]
    ZeroProbability(Arm),

    #[error("boundary probability {0} in odds ratio")]
    BoundaryProbability(f64),

    #[error("estimate mismatch: {0}")]
    Mismatch(String),

    #[error("non-positive effect {0}")]
    NonPositiveEffect(f64),

    #[error("bootstrap unstable: {dropped} of {total} replicates dropped")]
    BootstrapUnstable { dropped: usize, total: usize },

    #[error("invalid bootstrap size {0}: need at least 2 replicates")]
    InvalidReplicates(usize),

    #[error("need at least {needed} units, got {got}")]
    TooFewUnits { needed: usize, got: usize },

    #[error("collinear covariates")]
    CollinearCovariates,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for SavvyError {
    fn from(e: csv::Error) -> Self {
        SavvyError::Csv(e.to_string())
    }
}
