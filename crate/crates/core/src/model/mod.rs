//! Design matrices and survey-weighted logistic risk models.

mod design;
mod fit;
mod spec;

pub use design::{build_design, DesignMatrix};
pub use fit::{fit_logistic, log_likelihood, logistic, predict, score, FitOptions, RiskModel, DEFAULT_RIDGE};
pub use spec::{FeatureSpec, Scaling, Term, Variable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("model `{model}`: every cohort row is missing a required variable ({excluded} excluded)")]
    EmptyDesign { model: String, excluded: usize },

    #[error("need more rows than columns to fit (rows = {rows}, columns = {columns})")]
    TooFewRows { rows: usize, columns: usize },

    #[error("all observation weights are zero")]
    ZeroWeights,

    #[error("quasi-separation: coefficient for `{column}` reached {value}; enable the ridge fallback")]
    Separation { column: String, value: f64 },

    #[error("weighted information matrix is singular (collinear columns?)")]
    Singular,

    #[error("design does not match model: {0}")]
    ColumnMismatch(String),

    #[error("model JSON: {0}")]
    Json(String),
}
