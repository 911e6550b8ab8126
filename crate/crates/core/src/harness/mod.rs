//! Instance generation, experiment drivers and file formats.

mod experiment;
mod instance;
pub mod io;
mod spectrum;

use thiserror::Error;

use crate::fixedpoint::FixedPointError;
use crate::matkit::MatError;
use crate::refine::RefineError;

pub use experiment::{
    distance_to_canonical, order_estimates, run_convergence, run_fixedpoint_suite, write_trace_csv,
    ConvergenceSummary, CrossCheck, ExperimentResult, InstanceDescriptor, PicardSummary,
    LIMIT_CHECK_MAX_PERTURBATION, ORDER_FLOOR, PICARD_ITERS, PICARD_STARTS,
};
pub use instance::{gen_instance, make_fstar, Instance, InstanceCheck, MIN_BLOCK_SINGULAR_VALUE};
pub use spectrum::SpectrumSpec;

/// Seed used when none is given and `EIGREFINE_SEED` is unset.
pub const DEFAULT_SEED: u64 = 42;

/// `EIGREFINE_SEED` if set and parseable, else [`DEFAULT_SEED`].
pub fn default_seed() -> u64 {
    std::env::var("EIGREFINE_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid spectrum: {0}")]
    Spec(String),
    #[error("perturbation {0:e} outside [0, 1/3)")]
    PerturbationOutOfRange(f64),
    #[error("cluster {cluster} block is too far from orthogonal (sigma_min = {sigma_min:e})")]
    IllConditionedCluster { cluster: usize, sigma_min: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
