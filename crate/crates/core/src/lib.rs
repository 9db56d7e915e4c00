//! Heterogeneous block covariance model: simulation, spectral and
//! variational EM clustering of correlated features, and agreement metrics.

pub mod bench;
pub mod error;
pub mod labels;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod spectral;
pub mod vem;

pub use error::{Error, Result};
pub use labels::LabelAssignment;
pub use model::{CanonicalSystem, CovarianceMatrix, ParameterSystem};
pub use simulate::{DataMatrix, GroundTruth, NoiseSpec};
pub use vem::{FitOptions, FitResult, Params};
