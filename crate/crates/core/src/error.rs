use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution ({context}): {reason}")]
    InvalidDistribution { context: String, reason: String },

    #[error("too few agents: {0} (at least 3 are required)")]
    TooFewAgents(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("enumeration budget exceeded: {needed} outcomes > budget {budget}")]
    EnumerationBudgetExceeded { needed: u128, budget: u128 },

    #[error("conditioning on label {0} which has zero marginal probability")]
    ZeroProbabilityConditioning(usize),

    #[error("logarithmic score of an outcome with zero predicted mass")]
    LogOfZero,

    #[error("object {object} has no peer report for agent {agent}")]
    NoPeer { agent: usize, object: usize },

    #[error("no disjoint task sets for agents {0} and {1}")]
    NoDisjointTaskSets(usize, usize),

    #[error("not enough objects: {0}")]
    NotEnoughObjects(String),

    #[error("mechanism requires a binary label space, got {0} labels")]
    NonBinaryLabelSpace(usize),

    #[error("matching report with zero peer belief mass")]
    ZeroBeliefMatch,

    #[error("invalid mechanism parameters: {0}")]
    InvalidMechanism(String),

    #[error("label {0} out of range")]
    LabelOutOfRange(usize),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
