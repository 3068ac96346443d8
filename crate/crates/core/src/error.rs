use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("constraint matrix is singular")]
    SingularConstraint,

    #[error("{kind} model needs size >= {min}, got {got}")]
    SizeTooSmall {
        kind: &'static str,
        min: usize,
        got: usize,
    },

    #[error("graph is not symmetric: {from} lists {to} but not the reverse")]
    AsymmetricGraph { from: usize, to: usize },

    #[error("graph node {0} lists itself as a neighbour")]
    SelfLoop(usize),

    #[error("malformed graph: {0}")]
    GraphFormat(String),

    #[error("correlation must satisfy |phi| < 1, got {0}")]
    InvalidCorrelation(f64),

    #[error("hyperparameter slot {slot} does not exist ({len} slots)")]
    UnknownHyperSlot { slot: usize, len: usize },

    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("copy chain through `{0}` is cyclic or refers forward")]
    CycleInCopy(String),

    #[error("invalid count: y = {y}, n = {n}")]
    InvalidCount { y: f64, n: f64 },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Newton iteration failed: {0}")]
    NewtonDiverged(String),

    #[error("hyperparameter optimisation failed: {0}")]
    OptimDiverged(String),

    #[error("grid exploration exceeded {max} points")]
    GridExplosion { max: usize },

    #[error("latent dimension {dim} exceeds the guard of {max}")]
    GuardExceeded { dim: usize, max: usize },

    #[error("quadrature grid has {nodes} nodes, more than the limit of {max}")]
    GridTooLarge { nodes: usize, max: usize },

    #[error("quadrature box too narrow along axis {axis}: {mass:e} of the mass sits on the edge")]
    BoxTooNarrow { axis: usize, mass: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },

    #[error("unknown model kind `{0}`")]
    UnknownModelKind(String),

    #[error("unsupported likelihood family `{0}`")]
    UnsupportedFamily(String),

    #[error("graph `{name}` not found at {}", path.display())]
    MissingGraphFile { name: String, path: PathBuf },

    #[error("bad numeric value {value:?} at row {row}, column `{column}`")]
    BadNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row} has responses in more than one likelihood column")]
    ResponseOverlap { row: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::SingularConstraint => "SingularConstraint",
            Error::SizeTooSmall { .. } => "SizeTooSmall",
            Error::AsymmetricGraph { .. } => "AsymmetricGraph",
            Error::SelfLoop(_) => "SelfLoop",
            Error::GraphFormat(_) => "GraphFormat",
            Error::InvalidCorrelation(_) => "InvalidCorrelation",
            Error::UnknownHyperSlot { .. } => "UnknownHyperSlot",
            Error::UnknownComponent(_) => "UnknownComponent",
            Error::CycleInCopy(_) => "CycleInCopy",
            Error::InvalidCount { .. } => "InvalidCount",
            Error::Row { source, .. } => source.kind(),
            Error::NewtonDiverged(_) => "NewtonDiverged",
            Error::OptimDiverged(_) => "OptimDiverged",
            Error::GridExplosion { .. } => "GridExplosion",
            Error::GuardExceeded { .. } => "GuardExceeded",
            Error::GridTooLarge { .. } => "GridTooLarge",
            Error::BoxTooNarrow { .. } => "BoxTooNarrow",
            Error::DomainError(_) => "DomainError",
            Error::SchemaError { .. } => "SchemaError",
            Error::UnknownModelKind(_) => "UnknownModelKind",
            Error::UnsupportedFamily(_) => "UnsupportedFamily",
            Error::MissingGraphFile { .. } => "MissingGraphFile",
            Error::BadNumeric { .. } => "BadNumeric",
            Error::ResponseOverlap { .. } => "ResponseOverlap",
            Error::Unsupported(_) => "Unsupported",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    pub(crate) fn at_row(self, row: usize) -> Error {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::SchemaError {
            path: path.into(),
            message: message.into(),
        }
    }
}
