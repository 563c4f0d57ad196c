use thiserror::Error;

/// Errors raised by the model, simulator, optimizer and scenario loader.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown subregion id {0}")]
    UnknownSubregion(u32),

    #[error("design does not match the candidate set: {0}")]
    DesignMismatch(String),

    #[error("{quantity} = {value} is outside [0, {max}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        max: f64,
    },

    #[error("node {0} does not occur in route")]
    NodeNotInRoute(String),

    #[error("route is illegal under the active design: {0}")]
    IllegalRoute(String),

    #[error("empty route set")]
    EmptyRouteSet,

    #[error("invariant violated at step {step} in {element}: {detail}")]
    InvariantViolation {
        step: usize,
        element: String,
        detail: String,
    },

    #[error("design is over budget: cost {cost} > budget {budget}")]
    Infeasible { cost: f64, budget: f64 },

    #[error("{pairs} candidate pairs exceed the exhaustive-search cap of {cap}")]
    CapExceeded { pairs: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown unit `{unit}` for {field}")]
    UnknownUnit { field: String, unit: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
