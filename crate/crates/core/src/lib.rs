//! Robust Bayesian ordinal regression for care-level utilization data.
//!
//! A patient's final level of care is modeled from their intended level and
//! the nurse's recommendation through a latent-variable ordinal model with a
//! two-component (contaminated) normal error and group-specific spreads.
//! The crate covers fitting by adaptive random-walk Metropolis, WAIC model
//! selection, posterior predictive validation, threshold-curve derivatives
//! and cost scenarios.

pub mod data;
pub mod error;
pub mod inference;
pub mod model;
pub mod sampler;
pub mod selection;
pub mod simulate;
pub mod stats;
pub mod validation;

pub use data::{
    build_design_matrix, load_dataset, marginals, parse_dataset, Axis, CareLevel, CountTable,
    DataFormat, Dataset, DesignMatrix, Observation, StandardizationStats,
};
pub use error::{Error, Result};
pub use inference::{
    branch_root, cost_report, curve_points, derivative_table, expected_cost, reciprocal_slope,
    slope, CostReport, CostSchedule, CurveCoefficients, DerivativeTable, Scenario,
};
pub use model::{
    back_transform, category_probabilities, log_likelihood, log_prior, mean_utilized_care, Model,
    ModelSpec, ParameterVector, Priors, RawCoefficients, SigmaStructure, Term, Thresholds,
};
pub use sampler::{
    hpd_interval, load_posterior, posterior_summary, rhat, run_mcmc, write_posterior, Diagnostics,
    Interval, PosteriorSamples, PosteriorSummary, SamplerConfig,
};
pub use selection::{scan_candidates, waic, CandidateGrid, ScanTable, WaicResult};
pub use simulate::{simulate_dataset, uniform_design, TrueParameters};
pub use validation::{
    cell_checks, discrepancy_pvalue, error_rate, replicate_datasets, CellReport, Measure,
    ReplicatedSet,
};
