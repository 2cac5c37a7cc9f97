use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Config,
    Data,
    Numerical,
    Output,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Output => 1,
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numerical => 4,
        }
    }
}

/// Failure reported to the user as a JSON object on stderr.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: Kind,
    pub exit_code: i32,
    /// Core error variant, when the failure came from the library.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            exit_code: kind.exit_code(),
            error: None,
            message: message.into(),
            column: None,
            context: None,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }

    pub fn output(message: impl Into<String>) -> Self {
        Self::new(Kind::Output, message)
    }

    /// Tags the error with the job or input it arose in.
    pub fn context(mut self, context: impl Into<String>) -> Self {
        if self.context.is_none() {
            self.context = Some(context.into());
        }
        self
    }

    pub fn report(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "status": "error", "error": self }))
            .unwrap_or_else(|_| format!("{{\"status\":\"error\",\"message\":{:?}}}", self.message))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn variant_name(e: &sdid_core::Error) -> &'static str {
    use sdid_core::Error::*;
    match e {
        DuplicateCell { .. } => "duplicate_cell",
        UnbalancedPanel { .. } => "unbalanced_panel",
        NonBlockTreatment { .. } => "non_block_treatment",
        ParseError { .. } => "parse_error",
        MissingColumn(_) => "missing_column",
        UnknownAttribute(_) => "unknown_attribute",
        DesignError(_) => "design_error",
        EmptyArmError { .. } => "empty_arm",
        OutOfRange(_) => "out_of_range",
        ConvergenceError { .. } => "convergence_error",
        InfeasibleBalance => "infeasible_balance",
        DegenerateWeights(_) => "degenerate_weights",
        DegenerateResample { .. } => "degenerate_resample",
        RankDeficient(_) => "rank_deficient",
        BinError { .. } => "bin_error",
        DataError(_) => "data_error",
        Precondition(_) => "precondition",
        Csv(_) => "csv",
        Io(_) => "io",
    }
}

impl From<sdid_core::Error> for CliError {
    fn from(e: sdid_core::Error) -> Self {
        use sdid_core::Error::*;
        // Column and attribute names come from the config, so a mismatch
        // with the data is a config problem.
        let (kind, column) = match &e {
            MissingColumn(c) | UnknownAttribute(c) => (Kind::Config, Some(c.clone())),
            ParseError { column, .. } => (Kind::Data, Some(column.clone())),
            RankDeficient(c) => (Kind::Numerical, Some(c.clone())),
            Precondition(_) | BinError { .. } => (Kind::Config, None),
            e if e.is_numerical() => (Kind::Numerical, None),
            _ => (Kind::Data, None),
        };
        Self {
            kind,
            exit_code: kind.exit_code(),
            error: Some(variant_name(&e).to_string()),
            message: e.to_string(),
            column,
            context: None,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
