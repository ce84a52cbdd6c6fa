use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    /// An invariant was violated; `path` locates the offending field
    /// (for example `obstacles[2].shape.box.size`).
    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("scene has no machines")]
    EmptyMachines,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input")]
    EmptyInput,

    #[error("antenna position {0:?} is outside the scene bounds")]
    AntennaOutsideBounds([f64; 3]),

    #[error("propagation path has zero length")]
    ZeroLengthPath,

    #[error("grid mismatch between radio map and weight map")]
    GridMismatch,

    #[error("selection is empty")]
    EmptySelection,

    #[error("height {0} m is outside the grid")]
    HeightOutOfBounds(f64),

    #[error("deployment region does not intersect the scene bounds")]
    EmptyRegion,

    #[error("degenerate deployment region: {0}")]
    DegenerateRegion(String),

    #[error("weight map is zero everywhere")]
    ZeroWeights,

    #[error("quaternion has zero norm")]
    ZeroQuaternion,

    #[error("orientation representations differ")]
    RepresentationMismatch,

    #[error("unknown loss mode `{0}`")]
    UnknownMode(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { path: path.into(), message: message.into() }
    }

    /// Short machine-readable category, used by the CLI and the service.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Validation { .. } => "validation",
            Error::Io(_) => "io",
            Error::EmptyRegion | Error::DegenerateRegion(_) => "region",
            Error::Format(_) => "format",
            _ => "runtime",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
