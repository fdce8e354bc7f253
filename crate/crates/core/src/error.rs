use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PlsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PlsError {
    #[error("cannot access `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("degenerate label column `{column}`: only one level present")]
    DegenerateLabel { column: String },

    #[error("label column `{column}` has {levels} distinct values, expected exactly 2")]
    TooManyLabelLevels { column: String, levels: usize },

    #[error("positive class `{class}` not found in label column `{column}`")]
    UnknownPositiveClass { column: String, class: String },

    #[error("no usable covariates left after ingestion (label column `{label_column}`)")]
    NoCovariates { label_column: String },

    #[error("non-finite value in column `{column}`")]
    NonFiniteFeature { column: String },

    #[error("invalid {what}: {reason}")]
    InvalidInput { what: &'static str, reason: String },

    #[error("could not draw a labeled partition with both classes after {attempts} attempts")]
    SplitUnsatisfiable { attempts: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("logistic fit did not converge (ridge {ridge:e}, gradient sup-norm {gradient_norm:e} after {iterations} iterations)")]
    FitNonConvergence {
        ridge: f64,
        gradient_norm: f64,
        iterations: usize,
    },

    #[error("non-finite objective at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },

    #[error("BFGS did not converge: gradient sup-norm {gradient_norm:e} after {iterations} iterations")]
    BfgsNonConvergence { gradient_norm: f64, iterations: usize },

    #[error("matrix is not positive definite: {context}")]
    NotPositiveDefinite { context: &'static str },

    #[error("no feasible point found (max constraint violation {max_violation:e})")]
    Infeasible { max_violation: f64 },

    #[error("evaluation budget of {budget} exhausted")]
    MaxEvaluations { budget: usize },

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("candidate {pool_index}: {source}")]
    Candidate {
        pool_index: usize,
        #[source]
        source: Box<PlsError>,
    },

    #[error("self-training iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<PlsError>,
    },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("no runs found")]
    NoRuns,

    #[error("runs have mixed config fingerprints ({first} vs {other})")]
    MixedFingerprints { first: String, other: String },
}

impl PlsError {
    /// Stable short identifier, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            PlsError::Io { .. } => "io",
            PlsError::Csv(_) => "csv",
            PlsError::Json(_) => "json",
            PlsError::MissingColumn(_) => "missing_column",
            PlsError::DegenerateLabel { .. } => "degenerate_label",
            PlsError::TooManyLabelLevels { .. } => "label_levels",
            PlsError::UnknownPositiveClass { .. } => "positive_class",
            PlsError::NoCovariates { .. } => "no_covariates",
            PlsError::NonFiniteFeature { .. } => "non_finite_feature",
            PlsError::InvalidInput { .. } => "invalid_input",
            PlsError::SplitUnsatisfiable { .. } => "split_unsatisfiable",
            PlsError::DimensionMismatch { .. } => "dimension_mismatch",
            PlsError::FitNonConvergence { .. } => "fit_non_convergence",
            PlsError::NonFiniteObjective { .. } => "non_finite_objective",
            PlsError::BfgsNonConvergence { .. } => "bfgs_non_convergence",
            PlsError::NotPositiveDefinite { .. } => "not_positive_definite",
            PlsError::Infeasible { .. } => "infeasible",
            PlsError::MaxEvaluations { .. } => "max_evaluations",
            PlsError::EmptyCandidates => "empty_candidates",
            PlsError::EmptyTestSet => "empty_test_set",
            PlsError::Candidate { source, .. } | PlsError::Iteration { source, .. } => source.kind(),
            PlsError::InvalidConfig { .. } => "invalid_config",
            PlsError::NoRuns => "no_runs",
            PlsError::MixedFingerprints { .. } => "mixed_fingerprints",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PlsError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        PlsError::InvalidInput {
            what,
            reason: reason.into(),
        }
    }
}
