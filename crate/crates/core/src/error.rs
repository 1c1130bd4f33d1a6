use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: argument outside the domain ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("{0}: reduction over an empty input")]
    EmptyReduction(&'static str),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("optimizer: non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("empty domain: {0}")]
    EmptyDomain(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("split: {0}")]
    Split(String),
    #[error("batch construction: {0}")]
    Batch(String),
    #[error("non-finite objective at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target {target}, trial {trial}: {source}")]
    Trial {
        target: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
