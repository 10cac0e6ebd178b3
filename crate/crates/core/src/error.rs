use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation diverged on path {path} at node {node}")]
    SimulationDiverged { path: usize, node: usize },

    #[error("capability missing: {0}")]
    CapabilityMissing(String),

    #[error("adaptedness violation: functional `{0}` depends on the path after the evaluation node")]
    AdaptednessViolation(String),

    #[error("driver evaluation error: {0}")]
    DriverEvaluation(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("solver diverged at node {node} after {iterations} Picard iterations (residual {residual:e})")]
    SolverDiverged {
        node: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("oracle overflow: {0}")]
    OracleOverflow(String),

    #[error("diagnostics overflow on path {path}")]
    DiagnosticsOverflow { path: usize },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("unknown {kind} `{name}`; available: {}", available.join(", "))]
    UnknownRegistryName {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("report incomplete; missing stages: {}", missing.join(", "))]
    ReportIncomplete { missing: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}
