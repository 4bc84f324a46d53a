//! Asymptotic variances and replicated normalized-error experiments.

mod experiment;
mod stats;
mod variance;

pub use experiment::{run_clt_experiment, run_replicate, CltConfig, CltExperiment, ReplicateRun, SchemeMode};
pub use crate::numeric::{ks_critical, ks_statistic};
pub use stats::{density_grid, kernel_density, normality_stats, NormalityStats};
pub use variance::{
    marginal_sigma2, sigma2_conditional_form, sigma2_covariance_form, CovarianceCurve, CovarianceForm,
    Estimate, FunctionalCompanion, VarianceBudget,
};
