use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lambda[{index}] is zero")]
    ZeroLambda { index: usize },

    #[error("sigma2[{index}] = {value} is not positive")]
    NonPositiveSigma2 { index: usize, value: f64 },

    #[error("{what} is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { what: &'static str, eigenvalue: f64 },

    #[error("{what} is not positive definite")]
    NotPd { what: &'static str },

    #[error("{what} is not symmetric")]
    NotSymmetric { what: &'static str },

    #[error("label {label} of feature {index} is outside 0..{k}")]
    LabelOutOfRange { index: usize, label: usize, k: usize },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("canonical denominator vanishes at feature {index}")]
    VanishingCanonicalDenominator { index: usize },

    #[error("condition 1 violated: {}", fmt_violations(.0))]
    Condition1(Vec<Violation>),

    #[error("invalid probability vector: {0}")]
    InvalidSimplex(String),

    #[error("column {index} is constant")]
    ConstantColumn { index: usize },

    #[error("community {community} has no members")]
    EmptyCommunity { community: usize },

    #[error("k-means left a cluster empty after every restart")]
    EmptyCluster,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite objective at iteration {iteration}")]
    NonFiniteElbo { iteration: usize },

    #[error("number of communities {k} exceeds the supported maximum {max}")]
    TooManyCommunities { k: usize, max: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical procedures themselves, as opposed
    /// to malformed input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPsd { .. }
                | Error::NotPd { .. }
                | Error::VanishingCanonicalDenominator { .. }
                | Error::EmptyCluster
                | Error::ConstantColumn { .. }
                | Error::NonFiniteElbo { .. }
        )
    }
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
