//! Differentially private point estimates and confidence intervals for the
//! ratio of two means, built from noisy summary sums.
//!
//! The pipeline is
//! [`compute_sums`](sums::compute_sums) →
//! [`release`](mechanisms::release) →
//! one of the interval methods in [`inference`]. Everything after the
//! release is post-processing of the noisy sums.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod inference;
pub mod mechanisms;
pub mod normal;
pub mod simulation;
pub mod sums;

pub use error::{Error, Result};
pub use inference::{
    ci_analytical, ci_monte_carlo, ci_no_correction, log_ratio_variance, plug_in_moments,
    point_estimate, public_estimate, ratio_variance, two_ratio_test, wald_interval, Method,
    Moments, RatioEstimate, Scale, TwoRatioTest,
};
pub use mechanisms::{
    gaussian_sigma, laplace_scale, release, split_budget, MechanismKind, PrivacyBudget,
    ReleasedSums,
};
pub use simulation::{
    generate_dataset, interval_score, run_experiment, CellResult, ExperimentRow, SimulationConfig,
};
pub use sums::{
    compute_sums, kish_effective_n, sensitivity_per_sum, Bounds, Profile, Record, SumField,
    SumVector, Sums,
};
