use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-positive price {value} in column `{column}` on {date}")]
    NonPositivePrice {
        column: String,
        date: String,
        value: f64,
    },

    #[error("column `{0}` is constant; tertile cut points are undefined")]
    ConstantColumn(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("node `{node}` has no state `{state}`")]
    UnknownState { node: String, state: String },

    #[error("evidence has zero probability under the model")]
    ZeroProbabilityEvidence,

    #[error("target `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("edge {0} -> {1} would create a cycle")]
    Cycle(String, String),

    #[error("edge {0} -> {1} is not in the network")]
    MissingEdge(String, String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures caused by the optimizer or degenerate numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::ZeroVariance(_))
    }
}
