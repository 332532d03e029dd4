use thiserror::Error;

/// Errors produced by the scoring, optimization and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("gold entity set is invalid: {0}")]
    InvalidGold(String),

    #[error("missing reference annotation: reference length list is empty")]
    EmptyReferences,

    #[error("reference lengths must be positive")]
    ZeroReferenceLength,

    #[error("group of size {0} is too small for advantage normalization (need at least 2)")]
    UndersizedGroup(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid log-probabilities: {0}")]
    InvalidLogProbs(String),

    #[error("group has no advantages; call group_advantages first")]
    MissingAdvantages,

    #[error("stale rollout: group sampled under snapshot {found}, policy snapshot is {expected}")]
    StaleRollout { expected: u64, found: u64 },

    #[error("pass@k parameters out of range: n={n}, c={c}, k={k}")]
    PassAtKBounds { n: u64, c: u64, k: u64 },

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error(
        "activation prior not reached after {attempts} attempts: pass@1={pass1:.4}, pass@{k_high}={pass_high:.4}"
    )]
    ActivationPrior {
        attempts: usize,
        pass1: f64,
        k_high: usize,
        pass_high: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
