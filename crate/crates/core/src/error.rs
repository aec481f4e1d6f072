use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed series for project {project_id} attribute {attribute}: {reason}")]
    MalformedSeries {
        project_id: String,
        attribute: String,
        reason: String,
    },

    #[error("grid mismatch: {left} vs {right} grid points")]
    GridMismatch { left: usize, right: usize },

    #[error("attribute mismatch: {left:?} vs {right:?}")]
    AttributeMismatch { left: String, right: String },

    #[error("no grid point at or before progress {progress}")]
    EmptyPrefix { progress: f64 },

    #[error("schema violation on factor {factor:?}: {reason}")]
    SchemaViolation { factor: String, reason: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("cannot aggregate an empty member list")]
    EmptyMemberList,

    #[error("heterogeneous curves: {0}")]
    HeterogeneousCurves(String),

    #[error("project {project_id} has no context")]
    MissingContext { project_id: String },

    #[error("duplicate project {project_id}: {detail}")]
    DuplicateProject { project_id: String, detail: String },

    #[error("invalid target cluster count {target_k} for {n} curves")]
    InvalidTargetK { target_k: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("unknown attribute {attribute:?}")]
    UnknownAttribute { attribute: String },

    #[error("project {project_id} has no series for attribute {attribute:?}")]
    MissingAttribute {
        project_id: String,
        attribute: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("no clusters for attribute {attribute:?}")]
    NoClusters { attribute: String },

    #[error("unknown cluster {cluster_id} for attribute {attribute:?}")]
    UnknownCluster { attribute: String, cluster_id: usize },

    #[error("measurement at t={t} does not follow last recorded t={last}")]
    NonMonotoneTime { t: f64, last: f64 },

    #[error("measurement time {t} outside [0, 1]")]
    OutOfRangeTime { t: f64 },

    #[error("dynamic selection needs {need} actual points, have {have}")]
    InsufficientPrefix { have: usize, need: usize },

    #[error("no actual measurements recorded")]
    NoActuals,

    #[error("tracked project was planned against experience base {expected}, got {found}")]
    BaseMismatch { expected: String, found: String },
}

impl Error {
    /// Stable identifier used by the CLI and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedSeries { .. } => "MALFORMED_SERIES",
            Error::GridMismatch { .. } => "GRID_MISMATCH",
            Error::AttributeMismatch { .. } => "ATTRIBUTE_MISMATCH",
            Error::EmptyPrefix { .. } => "EMPTY_PREFIX",
            Error::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            Error::InvalidSchema(_) => "INVALID_SCHEMA",
            Error::EmptyMemberList => "EMPTY_MEMBER_LIST",
            Error::HeterogeneousCurves(_) => "HETEROGENEOUS_CURVES",
            Error::MissingContext { .. } => "MISSING_CONTEXT",
            Error::DuplicateProject { .. } => "DUPLICATE_PROJECT",
            Error::InvalidTargetK { .. } => "INVALID_TARGET_K",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::UnknownAttribute { .. } => "UNKNOWN_ATTRIBUTE",
            Error::MissingAttribute { .. } => "MISSING_ATTRIBUTE",
            Error::Io { .. } => "IO_ERROR",
            Error::VersionMismatch { .. } => "VERSION_MISMATCH",
            Error::CorruptFile(_) => "CORRUPT_FILE",
            Error::NoClusters { .. } => "NO_CLUSTERS",
            Error::UnknownCluster { .. } => "UNKNOWN_CLUSTER",
            Error::NonMonotoneTime { .. } => "NON_MONOTONE_TIME",
            Error::OutOfRangeTime { .. } => "OUT_OF_RANGE_TIME",
            Error::InsufficientPrefix { .. } => "INSUFFICIENT_PREFIX",
            Error::NoActuals => "NO_ACTUALS",
            Error::BaseMismatch { .. } => "BASE_MISMATCH",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(factor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::SchemaViolation {
            factor: factor.into(),
            reason: reason.into(),
        }
    }
}
