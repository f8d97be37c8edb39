use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("channel count {channels} not divisible by groups {groups}")]
    GroupDivisibility { channels: u64, groups: u64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("empirical prior has no samples")]
    EmptyPrior,

    #[error("FLOPs bin {bin} has no samples")]
    UnpopulatedBin { bin: u32 },

    #[error("rejection sampling exceeded {max_trials} trials for bin {bin}")]
    MaxTrialsExceeded { bin: u32, max_trials: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank correlation undefined: {0}")]
    DegenerateRanks(&'static str),

    #[error("no candidates found for constraint {constraint} MFLOPs")]
    ConstraintUnsatisfiable { constraint: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
