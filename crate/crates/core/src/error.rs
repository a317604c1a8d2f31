use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh lacks UV parameterization")]
    MissingUv,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular normal equations at stiffness level {stiffness}: {reason}")]
    SingularSystem { stiffness: f64, reason: String },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("no boundary data: every texel of the partial texture is invalid")]
    NoBoundaryData,

    #[error("rank-deficient corpus: only {achievable} nonzero singular values (requested {requested})")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("malformed layout region `{region}`: {message}")]
    Layout { region: String, message: String },

    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("denoiser failed at step {step}: {message}")]
    Denoiser { step: usize, message: String },

    #[error("external process failed during {phase}: {message}")]
    External { phase: String, message: String },

    #[error("model container: {0}")]
    Container(String),

    #[error("image: {0}")]
    Image(#[from] ::image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
