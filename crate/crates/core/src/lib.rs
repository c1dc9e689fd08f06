//! Budget-aware label collection with inverse-probability-weighted
//! estimation.
//!
//! Given covariates, black-box predictions, and a label budget, this crate
//! builds sampling rules that interpolate between uncertainty-driven and
//! uniform label collection, hardens the interpolation point against
//! misspecified error estimates via a worst-case inner maximization, and
//! produces point estimates with asymptotic confidence intervals for means
//! and GLM coefficients. A simulation harness measures effective sample
//! size and interval coverage over repeated trials.
//!
//! Start with the runnable examples (`cargo run --example budget_paths`,
//! `--example plan_and_estimate`, ...) or the `robust-ai` binary.

pub mod cli;
pub mod data_model;
pub mod error;
pub mod error_model;
pub mod estimation;
pub mod harness;
pub mod normal;
pub mod paths;
pub mod report;
pub mod robust_opt;
pub mod rng;
pub mod sampler;

pub use data_model::{
    load_csv, split_burn_in, write_csv, Budget, BurnInPlan, CsvSchema, Dataset, EstimandKind,
    EstimandSpec, Matrix,
};
pub use error::{Error, Result};
pub use error_model::{
    fit_binned_error, fit_knn_error, glm_error_transform, ErrorEstimate, ErrorSource,
    HessianColumn,
};
pub use estimation::{
    confidence_interval, estimate_m, estimate_mean, variance_plugin, EstimateResult,
};
pub use harness::{
    coverage, effective_sample_size, generate_gaussian_mean, generate_toy_regions,
    perturbation_demo, run_trials, EssCurve, ExperimentConfig, Method, MetricsSummary, RunOutput,
    TrialRecord,
};
pub use paths::{normalize_to_budget, path_eval, uniform_rule, PathKind, SamplingRule};
pub use robust_opt::{
    cross_validate_c, inner_max, learn_regions, objective, solve_rho, ConstraintSet, RhoGrid,
};
pub use sampler::{budget_audit, draw_labels, LabelDraw};
