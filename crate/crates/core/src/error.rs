use thiserror::Error;

/// Errors shared across the workspace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined fitness: no factorial rank is set")]
    UndefinedFitness,

    #[error("degenerate labels: training split contains fewer than two classes")]
    DegenerateLabels,

    #[error("evaluation budget {budget} is smaller than population size {population}")]
    BudgetTooSmall { budget: u64, population: usize },

    #[error("unknown problem id: {0}")]
    UnknownProblem(String),

    #[error("selection pool of {pool} is smaller than population size {wanted}")]
    PoolTooSmall { pool: usize, wanted: usize },

    #[error("mismatched run sets, missing cells: {0:?}")]
    MissingCells(Vec<String>),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
