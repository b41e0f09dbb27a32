use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed fact on line {line}: {reason}")]
    MalformedFact { line: usize, reason: String },

    #[error("dataset validation failed with {} violation(s)", .0.violations.len())]
    Validation(ValidationReport),

    #[error("invalid split ratios {ratios:?}: must sum to 1")]
    SplitRatios { ratios: [f64; 3] },

    #[error("cannot split an empty fact list")]
    EmptySplit,

    #[error("infeasible synthetic parameters: {0}")]
    InfeasibleParams(String),

    #[error("shape mismatch for `{field}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        field: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("sample {sample} has {count} mask tokens, expected exactly one")]
    MaskCount { sample: usize, count: usize },

    #[error("no valid negative concept for head {head}: all {concepts} concepts are gold")]
    NoNegative { head: u32, concepts: usize },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("non-finite {source_name} loss at epoch {epoch}, step {step}; batch saved for replay: {replay}")]
    NonFiniteLoss {
        source_name: &'static str,
        epoch: usize,
        step: usize,
        replay: String,
    },

    #[error("unknown ablation `{0}` (expected none, no_ge, no_hga or no_jl)")]
    UnknownAblation(String),

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("gold id {gold} is out of range for {candidates} candidates")]
    GoldOutOfRange { gold: usize, candidates: usize },

    #[error("gold `{0}` is outside the candidate set")]
    GoldOutsideCandidates(String),

    #[error("unknown token `{token}` in {context}")]
    UnknownToken { token: String, context: String },

    #[error("query must contain exactly one `?` hole, found {0}")]
    HoleCount(usize),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
