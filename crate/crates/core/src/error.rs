use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate cell for unit {unit:?}, period {period}")]
    DuplicateCell { unit: String, period: i64 },

    #[error("unbalanced panel: unit {unit:?} has no observation for period {period}")]
    UnbalancedPanel { unit: String, period: i64 },

    #[error("treatment is not a single block for unit {unit:?}: {reason}")]
    NonBlockTreatment { unit: String, reason: String },

    #[error("parse error at row {row}, column {column:?}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("column {0:?} not found in input")]
    MissingColumn(String),

    #[error("attribute {0:?} is not declared in the panel metadata")]
    UnknownAttribute(String),

    #[error("invalid design: {0}")]
    DesignError(String),

    #[error("subset leaves an empty arm ({treated} treated, {control} control)")]
    EmptyArmError { treated: usize, control: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("solver did not converge after {iterations} iterations (objective {objective})")]
    ConvergenceError {
        iterations: usize,
        objective: f64,
        last_iterate: Vec<f64>,
    },

    #[error("balance constraints are infeasible: treated moments lie outside the control hull")]
    InfeasibleBalance,

    #[error("degenerate weights: zero total weight in the {0} cell")]
    DegenerateWeights(&'static str),

    #[error("bootstrap replicate {replicate} produced {attempts} consecutive single-arm resamples")]
    DegenerateResample { replicate: usize, attempts: usize },

    #[error("regressor {0:?} is collinear with the other regressors after absorbing fixed effects")]
    RankDeficient(String),

    #[error("cannot form {bins} bins from {rows} rows")]
    BinError { bins: usize, rows: usize },

    #[error("data error: {0}")]
    DataError(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceError { .. }
                | Error::InfeasibleBalance
                | Error::DegenerateWeights(_)
                | Error::DegenerateResample { .. }
                | Error::RankDeficient(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
