use semtransfer::Error;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
    #[error("not converged: {0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Stage { source, .. } if source.is_input_error() => EXIT_INPUT,
            CliError::Stage { .. } => EXIT_VALIDATION,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            CliError::Stage { stage, .. } => Some(stage),
            CliError::NotConverged(_) => None,
        }
    }

    /// Single-line JSON object written to standard error.
    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Stage { source, .. } => error_kind(source),
            CliError::NotConverged(_) => "not_converged",
        };
        json!({
            "error": {
                "code": self.exit_code(),
                "kind": kind,
                "stage": self.stage(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::EmptyCorpus => "empty_corpus",
        Error::DuplicateId(_) => "duplicate_id",
        Error::UnknownId(_) => "unknown_id",
        Error::EmptyId => "empty_id",
        Error::Dimension(_) => "dimension",
        Error::InvalidValue(_) => "invalid_value",
        Error::InvalidConfig(_) => "invalid_config",
        Error::Taxonomy(_) => "taxonomy",
        Error::UnrelatableCategory(_) => "unrelatable_category",
        Error::DegenerateAuc => "degenerate_auc",
        Error::NoPositives(_) => "no_positives",
        Error::ClampedClosedForm => "clamped_closed_form",
        Error::IsolatedNodes(_) => "isolated_nodes",
        Error::Singular => "singular",
        Error::InfeasiblePlan(_) => "infeasible_plan",
        Error::SignatureSpace { .. } => "signature_space",
    }
}

/// Attaches a stage name to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for semtransfer::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
