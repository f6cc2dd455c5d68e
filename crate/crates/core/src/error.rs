use std::path::PathBuf;

/// Errors produced anywhere in the library.
///
/// Variants map one-to-one onto the failure modes of the individual
/// operations, so callers can match on the kind without parsing messages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("axes are not orthogonal (|<a_x, a_z>| = {dot:.3e})")]
    NonOrthogonalAxes { dot: f64 },
    #[error("axis is not unit length (norm = {norm})")]
    NonUnitAxis { norm: f64 },
    #[error("pixel ({u}, {v}) outside a {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("depth must be strictly positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("region selects no pixels")]
    EmptyRegion,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("axes are (anti)parallel, cannot orthogonalize")]
    DegenerateAxes,
    #[error("scale component {index} is not positive ({value})")]
    NonPositiveScale { index: usize, value: f64 },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("length mismatch: {left} predictions vs {right} ground-truth instances")]
    LengthMismatch { left: usize, right: usize },
    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("could not place {instances} instances after {attempts} attempts")]
    PlacementFailure { instances: usize, attempts: usize },
    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn io_other(path: impl Into<PathBuf>, msg: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            source: std::io::Error::other(msg.to_string()),
        }
    }

    /// True for errors caused by the filesystem rather than by data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
