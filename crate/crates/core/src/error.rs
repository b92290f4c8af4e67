use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-triangle face at line {line}")]
    NonTriangleFace { line: usize },
    #[error("vertex index {index} out of range at line {line}")]
    IndexOutOfRange { line: usize, index: i64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh is disconnected: {0}")]
    Disconnected(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("skinning weights off the simplex (row {row}: sum {sum}, min {min})")]
    OffSimplex { row: usize, sum: f64, min: f64 },
    #[error("heat equilibrium system is singular or ill-conditioned for joint {joint}; try a larger heat constant (current c = {heat_constant})")]
    SingularSystem { joint: usize, heat_constant: f64 },
    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("no pixel is covered by both the rendering and the mask")]
    NoCoverage,
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("loss became non-finite at stage {stage}, iteration {iteration}")]
    NonFiniteLoss { stage: u8, iteration: u64 },
    #[error("gradient tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error comes from malformed or inconsistent input data
    /// rather than from the filesystem or from numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::NonTriangleFace { .. }
                | Error::IndexOutOfRange { .. }
                | Error::InvalidMesh(_)
                | Error::Disconnected(_)
                | Error::DimensionMismatch { .. }
                | Error::EmptyMask
                | Error::Checkpoint(_)
                | Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::Json(_)
        )
    }

    /// Whether the error is a numerical failure (divergence, singular solve,
    /// geometry behind a camera).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::OffSimplex { .. }
                | Error::SingularSystem { .. }
                | Error::BehindCamera { .. }
                | Error::NoCoverage
                | Error::NonFiniteLoss { .. }
                | Error::NonFiniteGradient { .. }
        )
    }
}
