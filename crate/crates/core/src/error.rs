use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("resolution too coarse: stride {stride:.4} < 1 (dt={dt}, lyapunov time={lyapunov_time})")]
    ResolutionTooCoarse {
        stride: f64,
        dt: f64,
        lyapunov_time: f64,
    },

    #[error("dataset too short: need at least {required} steps, got {actual}")]
    DatasetTooShort { required: usize, actual: usize },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("no neighbours within radius {radius} at embedding dimension {m}; try a larger radius")]
    EmptyNeighborhood { m: usize, radius: f64 },

    #[error("not enough steps: {have} steps for patch size {patch_size}")]
    NotEnoughSteps { have: usize, patch_size: usize },

    #[error("not enough patches: have {have}, need {need}")]
    NotEnoughPatches { have: usize, need: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric overflow: non-finite output from {op}")]
    NumericOverflow { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotAScalar(Vec<usize>),

    #[error("training diverged in {stage} stage at epoch {epoch}, batch {batch}")]
    TrainingDiverged {
        stage: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("rollout diverged at forecast step {step}")]
    RolloutDiverged { step: usize },

    #[error("degenerate attractor: {0}")]
    DegenerateAttractor(String),

    #[error("horizon too short: need {need} steps, have {have}")]
    HorizonTooShort { need: usize, have: usize },

    #[error("empty sample set")]
    EmptySamples,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line front-end.
    ///
    /// 2 config/paths, 3 data or simulation, 4 training, 5 evaluation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } => 2,
            Error::IntegrationDiverged { .. }
            | Error::ResolutionTooCoarse { .. }
            | Error::DatasetTooShort { .. }
            | Error::DegenerateDistribution(_)
            | Error::EmptyNeighborhood { .. }
            | Error::NotEnoughSteps { .. }
            | Error::Parse { .. }
            | Error::InvalidInput(_) => 3,
            Error::TrainingDiverged { .. }
            | Error::NotEnoughPatches { .. }
            | Error::Shape { .. }
            | Error::NumericOverflow { .. }
            | Error::NotAScalar(_) => 4,
            Error::RolloutDiverged { .. }
            | Error::DegenerateAttractor(_)
            | Error::HorizonTooShort { .. }
            | Error::EmptySamples
            | Error::Evaluation(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
