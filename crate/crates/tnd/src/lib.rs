//! Simulation and estimation toolkit for test-negative design studies with
//! multiple reasons for testing.
//!
//! The crate simulates populations where testing happens for symptoms,
//! disease-unrelated reasons, case contact tracing, or other reasons, and
//! provides the stratified vaccine-effectiveness estimators that remain valid
//! under that design, alongside the naive pooled odds ratio that does not.

pub mod demo;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod mc;
pub mod sim;

pub use estimators::{
    combine_estimates, estimate_pooled_naive, estimate_stratum_ve, estimate_ve_curve,
    inverse_variance_weights, pool_estimates_log_scale, rrp_convert, rrp_infer, Estimand,
    EstimatorError, EvalPoint, Method,
    StratumTag, VeCurve, VeEstimate,
};
pub use glm::{fit_glm, fit_glm_weighted, GlmError, GlmFit, Link};
pub use inference::{combined_variance, equality_test, InferenceError, TestResult};
pub use kernel::{kernel_curve, select_bandwidth, KernelError, KernelFit};
pub use mc::{run_monte_carlo, run_replicate, EstimatorKind, McError, McSummary};
pub use sim::{
    generate_dataset, replicate_seed, true_ve, Conditioning, Dataset, Prevalence, Reason,
    ScenarioConfig, SimError, Subject,
};
