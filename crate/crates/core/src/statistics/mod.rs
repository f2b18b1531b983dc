//! Exact binomial tails, Kolmogorov–Smirnov tests and the normality battery.

mod battery;
mod binomial;
mod ks;

pub use battery::{
    annulus_min_cv, empirical_fpr, undetectability_suite, BatteryConfig, NormalityReport,
    SuiteMode, Verdicts,
};
pub use binomial::{binomial_tail, min_threshold};
pub use ks::{
    kolmogorov_q, ks_statistic, ks_test, ks_test_against, ks_two_sample, standard_normal_cdf,
    KsResult, MIN_KS_SAMPLES,
};
