use thiserror::Error;

use crate::panel::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("outcome matrix is {rows}x{cols}, expected {units}x{periods}")]
    Shape {
        rows: usize,
        cols: usize,
        units: usize,
        periods: usize,
    },

    #[error("invalid input: {0}")]
    Validation(ValidationReport),

    #[error("proxy outcome series has no unit `{0}`")]
    ProxyMissingUnit(String),

    #[error("proxy outcome series has no period `{0}`")]
    ProxyMissingPeriod(String),

    #[error("covariate table has no row for unit `{0}`")]
    CovariatesMissingUnit(String),

    #[error("lag specification asks for covariates but none were supplied")]
    MissingCovariates,

    #[error("lag specification produced no predictors")]
    NoPredictors,

    #[error("donor pool has {0} member(s); at least 2 are required")]
    DonorPoolTooSmall(usize),

    #[error("weight vector has length {got}, expected {expected}")]
    WeightLength { got: usize, expected: usize },

    #[error("empty {0} window")]
    EmptyWindow(&'static str),

    #[error("period `{0}` not found in gap series")]
    UnknownPeriod(String),

    #[error("event-time supports of the two gap series do not overlap")]
    NoOverlap,

    #[error("paired comparison needs at least 2 pairs of equal length (got {left} and {right})")]
    TooFewPairs { left: usize, right: usize },

    #[error("confidence level must lie in (0, 1), got {0}")]
    Level(f64),

    #[error("no estimate available for unit `{0}`")]
    EstimateMissing(String),

    #[error("treated unit could not be estimated: {0}")]
    TreatedFailed(String),

    #[error("invalid solver settings: {0}")]
    Settings(String),

    #[error("invalid generator spec: {0}")]
    Generator(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
