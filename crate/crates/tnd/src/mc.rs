//! Replicated simulation experiments and their performance metrics.

use crate::estimators::{
    estimate_pooled_naive, estimate_stratum_ve, pool_estimates_log_scale, EvalPoint, Method,
    VeEstimate,
};
use crate::sim::{
    generate_dataset, replicate_seed, true_ve, Conditioning, Reason, ScenarioConfig, SimError,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("every replicate failed for every estimator")]
    AllReplicatesFailed,
    #[error("estimates and standard errors have different lengths or fewer than 2 entries")]
    LengthMismatch,
    #[error("reference empirical standard error is zero")]
    ZeroVariance,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// The four estimators evaluated in the replicated experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Symptoms-stratum odds ratio.
    OddsRatioS,
    /// All tested subjects pooled, ignoring the reason (biased by design).
    OddsRatioAll,
    /// Disease-unrelated + case-contact strata, inverse-variance weighted.
    Stratified,
    /// Symptoms + disease-unrelated + case-contact, inverse-variance weighted.
    StratifiedAll,
}

pub const ALL_ESTIMATORS: [EstimatorKind; 4] = [
    EstimatorKind::OddsRatioS,
    EstimatorKind::OddsRatioAll,
    EstimatorKind::Stratified,
    EstimatorKind::StratifiedAll,
];

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::OddsRatioS => "odds-ratio-s",
            EstimatorKind::OddsRatioAll => "odds-ratio-all",
            EstimatorKind::Stratified => "stratified",
            EstimatorKind::StratifiedAll => "stratified-all",
        }
    }
}

/// One replicate's estimates; estimators that failed carry `None`.
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub rep_index: u64,
    pub estimates: Vec<(EstimatorKind, Option<VeEstimate>)>,
}

fn ivw_combined(parts: &[VeEstimate]) -> Option<VeEstimate> {
    pool_estimates_log_scale(parts).ok()
}

/// Run all four estimators on the dataset for one replicate.
pub fn run_replicate(scenario: &ScenarioConfig, rep_index: u64) -> Result<ReplicateResult, McError> {
    let seed = replicate_seed(scenario.base_seed, rep_index);
    let ds = generate_dataset(scenario, seed)?;
    let symptoms =
        estimate_stratum_ve(&ds, Reason::Symptoms, Method::Parametric, EvalPoint::Average).ok();
    let unrelated = estimate_stratum_ve(
        &ds,
        Reason::DiseaseUnrelated,
        Method::Parametric,
        EvalPoint::Average,
    )
    .ok();
    let cct = estimate_stratum_ve(
        &ds,
        Reason::CaseContactTracing,
        Method::Parametric,
        EvalPoint::Average,
    )
    .ok();
    let pooled = estimate_pooled_naive(&ds, Method::Parametric).ok();

    let stratified = match (&unrelated, &cct) {
        (Some(u), Some(c)) => ivw_combined(&[*u, *c]),
        _ => None,
    };
    let stratified_all = match (&symptoms, &unrelated, &cct) {
        (Some(s), Some(u), Some(c)) => ivw_combined(&[*s, *u, *c]),
        _ => None,
    };

    Ok(ReplicateResult {
        rep_index,
        estimates: vec![
            (EstimatorKind::OddsRatioS, symptoms),
            (EstimatorKind::OddsRatioAll, pooled),
            (EstimatorKind::Stratified, stratified),
            (EstimatorKind::StratifiedAll, stratified_all),
        ],
    })
}

/// Performance metrics of one estimator over the replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub estimator: EstimatorKind,
    pub truth: f64,
    pub bias: f64,
    pub empirical_se: f64,
    pub avg_estimated_se: f64,
    pub coverage: f64,
    pub relative_efficiency: Option<f64>,
    pub n_replicates: usize,
    pub n_failed: usize,
}

/// Metrics from per-replicate point estimates and their estimated SEs.
pub fn summarize(estimates: &[f64], ses: &[f64], truth: f64) -> Result<McSummary, McError> {
    summarize_tagged(EstimatorKind::Stratified, estimates, ses, truth, 0)
}

fn summarize_tagged(
    estimator: EstimatorKind,
    estimates: &[f64],
    ses: &[f64],
    truth: f64,
    n_failed: usize,
) -> Result<McSummary, McError> {
    let n = estimates.len();
    if n < 2 || ses.len() != n {
        return Err(McError::LengthMismatch);
    }
    let nf = n as f64;
    let mean = estimates.iter().sum::<f64>() / nf;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (nf - 1.0);
    let covered = estimates
        .iter()
        .zip(ses)
        .filter(|(e, s)| (*e - 1.96 * *s) <= truth && truth <= (*e + 1.96 * *s))
        .count();
    Ok(McSummary {
        estimator,
        truth,
        bias: mean - truth,
        empirical_se: var.sqrt(),
        avg_estimated_se: ses.iter().sum::<f64>() / nf,
        coverage: covered as f64 / nf,
        relative_efficiency: None,
        n_replicates: n,
        n_failed,
    })
}

fn truth_for(scenario: &ScenarioConfig, kind: EstimatorKind) -> f64 {
    // At x1 = 0.75 as a representative interior point; under homogeneity all
    // conditionings agree.
    match kind {
        EstimatorKind::OddsRatioS => true_ve(scenario, 0.75, Conditioning::SeekerStratum),
        _ => true_ve(scenario, 0.75, Conditioning::Marginal),
    }
}

/// Run the full replicated experiment. Replicates execute in parallel; RNG
/// streams are keyed by replicate index so the result is schedule-independent.
pub fn run_monte_carlo(scenario: &ScenarioConfig) -> Result<Vec<McSummary>, McError> {
    scenario.validate()?;
    let reps: Vec<ReplicateResult> = (0..scenario.n_replicates as u64)
        .into_par_iter()
        .map(|k| run_replicate(scenario, k))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for kind in ALL_ESTIMATORS {
        let mut points = Vec::new();
        let mut ses = Vec::new();
        let mut failed = 0usize;
        for rep in &reps {
            match rep
                .estimates
                .iter()
                .find(|(k, _)| *k == kind)
                .and_then(|(_, e)| e.as_ref())
            {
                Some(e) => {
                    points.push(e.point);
                    ses.push(e.se);
                }
                None => failed += 1,
            }
        }
        if points.len() >= 2 {
            out.push(summarize_tagged(
                kind,
                &points,
                &ses,
                truth_for(scenario, kind),
                failed,
            )?);
        }
    }
    if out.is_empty() {
        return Err(McError::AllReplicatesFailed);
    }
    Ok(out)
}

/// Attach variance ratios against a reference estimator's empirical SE.
pub fn relative_efficiency(
    reference: &McSummary,
    others: &[McSummary],
) -> Result<Vec<McSummary>, McError> {
    if reference.empirical_se <= 0.0 {
        return Err(McError::ZeroVariance);
    }
    let ref_var = reference.empirical_se * reference.empirical_se;
    Ok(others
        .iter()
        .map(|o| {
            let mut s = o.clone();
            s.relative_efficiency = if o.empirical_se > 0.0 {
                Some(ref_var / (o.empirical_se * o.empirical_se))
            } else {
                None
            };
            s
        })
        .collect())
}
