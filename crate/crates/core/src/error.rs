use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MilacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MilacError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("matrix is numerically singular (condition number {cond:e})")]
    Singular { cond: f64 },

    #[error("scattering matrix is not realizable as a finite susceptance (condition number of I+S = {cond:e})")]
    NotRealizable { cond: f64 },

    #[error("recovered susceptance has imaginary residue {residue:e}")]
    ResidueTooLarge { residue: f64 },

    #[error("scattering matrix is not lossless and reciprocal (unitarity {unitarity:e}, symmetry {symmetry:e})")]
    NotLosslessReciprocal { unitarity: f64, symmetry: f64 },

    #[error("admittance components are asymmetric at ({0}, {1})")]
    AsymmetricComponent(usize, usize),

    #[error("port index ({0}, {1}) out of range for {2} ports")]
    IndexOutOfRange(usize, usize, usize),

    #[error("invalid network component: {0}")]
    InvalidComponent(String),

    #[error("negative entry {value} at position {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("inconsistent solution: {0}")]
    Inconsistent(String),

    #[error("degenerate projection: pre-projection matrix is zero")]
    DegenerateProjection,

    #[error("objective became non-finite at iteration {0}")]
    NonFinite(usize),

    #[error("problem too large for the brute-force oracle: {0}")]
    DimensionTooLarge(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MilacError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MilacError::Io {
            path: path.into(),
            source,
        }
    }
}
