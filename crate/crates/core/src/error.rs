use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("shape mismatch: {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("illegal label value {value} at voxel {index} (allowed: 0, 1, 2, 4)")]
    IllegalLabel { value: u8, index: usize },

    #[error("illegal mask value {value} at voxel {index} (allowed: 0, 1)")]
    IllegalMaskValue { value: u8, index: usize },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    #[error("value {value} in {context} at index {index} is outside [0, 1]")]
    OutOfRange {
        context: String,
        index: usize,
        value: f64,
    },

    #[error("modality {0:?} has an empty brain region (all voxels are zero)")]
    EmptyBrainRegion(String),

    #[error("modality {0:?} has zero variance inside the brain region")]
    ZeroVariance(String),

    #[error("infeasible fold plan: {0}")]
    InfeasibleFolds(String),

    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),

    #[error("unknown patient id {0:?}")]
    UnknownPatient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot aggregate an empty score list")]
    EmptyScores,

    #[error("feature arity mismatch: model has {weights} weights, features have {features}")]
    ArityMismatch { weights: usize, features: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("bundle metadata error in {}: {message}", path.display())]
    Metadata { path: PathBuf, message: String },

    #[error("nifti: {0}")]
    Nifti(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], found: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}
