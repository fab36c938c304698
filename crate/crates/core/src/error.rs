use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("primitive size must be at least 1, got {0}")]
    InvalidPrimitiveSize(usize),
    #[error("structural invariant violated: {0}")]
    Structure(String),
    #[error("structural invariant violated: graph contains a cycle")]
    Cycle,
    #[error("symmetric pruning expects a graph without lateral edges")]
    LateralsPresent,
    #[error("path count overflowed 64 bits")]
    PathOverflow,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (available: {1})")]
    UnknownPreset(String, String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("assembly failed at {node}: {reason}")]
    Assembly { node: String, reason: String },
}

#[derive(Debug, Error)]
pub enum IrError {
    #[error("unsupported IR format `{found}`, expected `{expected}`")]
    Version {
        found: String,
        expected: &'static str,
    },
    #[error("malformed IR document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("operator {op}: {reason}")]
    Validation { op: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("operator {op}: {reason}")]
    Shape { op: usize, reason: String },
    #[error("operator {op} produced a non-finite value")]
    NonFinite { op: usize },
    #[error("operator {op} is missing weight tensor `{name}`")]
    MissingWeight { op: usize, name: String },
    #[error("weight store: {0}")]
    Weights(String),
    #[error("non-finite gradient for operator {op} tensor `{name}`")]
    NonFiniteGradient { op: usize, name: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
