//! Vaccine-effectiveness estimators by reason-for-testing stratum.
//!
//! Symptoms stratum: logistic regression odds ratio (which identifies the
//! symptomatic-infection relative risk under the design). Disease-unrelated
//! and case-contact strata: log-binomial relative risk. Pooled naive: the
//! deliberately biased all-reasons odds ratio. Standard errors come from the
//! robust coefficient covariance via the delta method; stratum estimates can
//! be combined with arbitrary nonnegative weights.

use crate::glm::{fit_glm, GlmError, Link};
use crate::kernel::{
    estimate_log_or_at, estimate_log_rr_at, select_bandwidth, variance_log_or_at,
    variance_log_rr_at, KernelError, StratumRow,
};
use crate::sim::{Dataset, Reason, Subject};
use thiserror::Error;

pub const Z_95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("no tested subjects in the requested stratum")]
    EmptyStratum,
    #[error("stratum has only one vaccine arm")]
    OneArmOnly,
    #[error("weights and estimates have different lengths")]
    WeightMismatch,
    #[error("weights must be nonnegative and sum to one")]
    NonPositiveWeight,
    #[error("standard error must be positive")]
    ZeroSe,
    #[error("argument outside its domain: {0}")]
    DomainError(String),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    /// VE(x, h=1): symptomatic infection among healthcare seekers.
    VeSSeeker,
    /// VE(x): any infection, marginal over seeking behavior.
    VeMarginal,
    /// VE among contacts of known cases.
    VeCct,
    /// The all-reasons pooled odds ratio (biased by design).
    VePooledNaive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Parametric,
    Kernel,
}

/// Covariate value at which a stratum estimate is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPoint {
    /// The no-interaction model's single coefficient (exact when VE is flat).
    Average,
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratumTag {
    Reason(Reason),
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VeEstimate {
    pub estimand: Estimand,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub stratum: StratumTag,
    pub method: Method,
    pub n_used: usize,
}

impl VeEstimate {
    /// Build from a log relative risk (or log odds ratio) and its standard
    /// error; the VE-scale standard error and interval use the delta method.
    pub fn from_log_scale(
        estimand: Estimand,
        log_rr: f64,
        se_log: f64,
        stratum: StratumTag,
        method: Method,
        n_used: usize,
    ) -> VeEstimate {
        let rr = log_rr.exp();
        let point = 1.0 - rr;
        let se = rr * se_log;
        VeEstimate {
            estimand,
            point,
            se,
            ci_low: point - Z_95 * se,
            ci_high: point + Z_95 * se,
            stratum,
            method,
            n_used,
        }
    }
}

fn stratum_subjects<'a>(dataset: &'a Dataset, reason: Reason) -> Vec<&'a Subject> {
    dataset.stratum(reason).collect()
}

fn check_arms(subjects: &[&Subject]) -> Result<(), EstimatorError> {
    if subjects.is_empty() {
        return Err(EstimatorError::EmptyStratum);
    }
    let n_vax = subjects.iter().filter(|s| s.v == 1).count();
    if n_vax == 0 || n_vax == subjects.len() {
        return Err(EstimatorError::OneArmOnly);
    }
    Ok(())
}

fn design(subjects: &[&Subject], interaction: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
    let y: Vec<f64> = subjects.iter().map(|s| s.i as f64).collect();
    let x: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| {
            let mut row = vec![1.0, s.v as f64, s.x1, s.x2 as f64];
            if interaction {
                row.push(s.v as f64 * s.x1);
            }
            row
        })
        .collect();
    (y, x)
}

fn reason_estimand(reason: Reason) -> Estimand {
    match reason {
        Reason::Symptoms => Estimand::VeSSeeker,
        Reason::CaseContactTracing => Estimand::VeCct,
        _ => Estimand::VeMarginal,
    }
}

fn reason_link(reason: Reason) -> Link {
    if reason == Reason::Symptoms {
        Link::Logit
    } else {
        Link::Log
    }
}

/// VE in one reason stratum. The parametric fit adjusts for (x1, x2) without
/// interaction, so the vaccine coefficient is the log RR (or log OR) at any x.
/// The kernel method smooths over x1 and stratifies exactly on x2, combining
/// the two x2 cells by inverse variance on the log scale.
pub fn estimate_stratum_ve(
    dataset: &Dataset,
    reason: Reason,
    method: Method,
    x: EvalPoint,
) -> Result<VeEstimate, EstimatorError> {
    let subjects = stratum_subjects(dataset, reason);
    check_arms(&subjects)?;
    let estimand = reason_estimand(reason);
    match method {
        Method::Parametric => {
            let (y, xmat) = design(&subjects, false);
            let fit = fit_glm(&y, &xmat, reason_link(reason))?;
            let se_log = fit.covariance_sandwich[(1, 1)].sqrt();
            Ok(VeEstimate::from_log_scale(
                estimand,
                fit.coefficients[1],
                se_log,
                StratumTag::Reason(reason),
                Method::Parametric,
                subjects.len(),
            ))
        }
        Method::Kernel => {
            let x0 = match x {
                EvalPoint::At(v) => v,
                EvalPoint::Average => {
                    subjects.iter().map(|s| s.x1).sum::<f64>() / subjects.len() as f64
                }
            };
            let (log_rr, se_log) =
                kernel_point_x2_stratified(&subjects, x0, reason == Reason::Symptoms)?;
            Ok(VeEstimate::from_log_scale(
                estimand,
                log_rr,
                se_log,
                StratumTag::Reason(reason),
                Method::Kernel,
                subjects.len(),
            ))
        }
    }
}

fn kernel_point_x2_stratified(
    subjects: &[&Subject],
    x: f64,
    use_odds_ratio: bool,
) -> Result<(f64, f64), EstimatorError> {
    let mut parts: Vec<(f64, f64)> = Vec::new();
    for x2 in 0..2u8 {
        let rows: Vec<StratumRow> = subjects
            .iter()
            .filter(|s| s.x2 == x2)
            .map(|s| StratumRow {
                infected: s.i == 1,
                vaccinated: s.v == 1,
                x1: s.x1,
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.x1).collect();
        let h = select_bandwidth(rows.len(), 1, 2, sample_sd(&xs), 1.0)?;
        let (l, var) = if use_odds_ratio {
            (
                estimate_log_or_at(x, &rows, h)?,
                variance_log_or_at(x, &rows, h)?,
            )
        } else {
            (
                estimate_log_rr_at(x, &rows, h)?,
                variance_log_rr_at(x, &rows, h)?,
            )
        };
        parts.push((l, var));
    }
    if parts.is_empty() {
        return Err(EstimatorError::EmptyStratum);
    }
    let wsum: f64 = parts.iter().map(|(_, v)| 1.0 / v).sum();
    let l = parts.iter().map(|(l, v)| l / v).sum::<f64>() / wsum;
    Ok((l, (1.0 / wsum).sqrt()))
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// All-reasons pooled odds ratio adjusted for (x1, x2); reproduces the
/// collider bias of ignoring the reason for testing.
pub fn estimate_pooled_naive(
    dataset: &Dataset,
    method: Method,
) -> Result<VeEstimate, EstimatorError> {
    let subjects: Vec<&Subject> = dataset.tested().collect();
    check_arms(&subjects)?;
    match method {
        Method::Parametric => {
            let (y, xmat) = design(&subjects, false);
            let fit = fit_glm(&y, &xmat, Link::Logit)?;
            let se_log = fit.covariance_sandwich[(1, 1)].sqrt();
            Ok(VeEstimate::from_log_scale(
                Estimand::VePooledNaive,
                fit.coefficients[1],
                se_log,
                StratumTag::Pooled,
                Method::Parametric,
                subjects.len(),
            ))
        }
        Method::Kernel => {
            let x0 = subjects.iter().map(|s| s.x1).sum::<f64>() / subjects.len() as f64;
            let (l, se) = kernel_point_x2_stratified(&subjects, x0, true)?;
            Ok(VeEstimate::from_log_scale(
                Estimand::VePooledNaive,
                l,
                se,
                StratumTag::Pooled,
                Method::Kernel,
                subjects.len(),
            ))
        }
    }
}

/// Weighted combination of stratum estimates assumed independent:
/// point = sum w_i p_i, se = sqrt(sum w_i^2 se_i^2).
pub fn combine_estimates(
    estimates: &[VeEstimate],
    weights: &[f64],
) -> Result<VeEstimate, EstimatorError> {
    if estimates.is_empty() || estimates.len() != weights.len() {
        return Err(EstimatorError::WeightMismatch);
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(EstimatorError::NonPositiveWeight);
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(EstimatorError::NonPositiveWeight);
    }
    let point: f64 = estimates
        .iter()
        .zip(weights)
        .map(|(e, w)| w * e.point)
        .sum();
    let var: f64 = estimates
        .iter()
        .zip(weights)
        .map(|(e, w)| w * w * e.se * e.se)
        .sum();
    let se = var.sqrt();
    Ok(VeEstimate {
        estimand: estimates[0].estimand,
        point,
        se,
        ci_low: point - Z_95 * se,
        ci_high: point + Z_95 * se,
        stratum: StratumTag::Pooled,
        method: estimates[0].method,
        n_used: estimates.iter().map(|e| e.n_used).sum(),
    })
}

/// Inverse-variance pooling on the log relative-risk scale, the standard
/// meta-analytic convention: normality is better on the log scale, so pooled
/// intervals keep their coverage where VE-scale averaging drifts.
pub fn pool_estimates_log_scale(
    estimates: &[VeEstimate],
) -> Result<VeEstimate, EstimatorError> {
    if estimates.is_empty() {
        return Err(EstimatorError::WeightMismatch);
    }
    let mut wsum = 0.0;
    let mut lsum = 0.0;
    let mut n_used = 0;
    for e in estimates {
        let rr = 1.0 - e.point;
        if rr <= 0.0 {
            return Err(EstimatorError::DomainError(
                "cannot pool an estimate with VE >= 1 on the log scale".into(),
            ));
        }
        if e.se <= 0.0 {
            return Err(EstimatorError::ZeroSe);
        }
        let se_log = e.se / rr;
        let w = 1.0 / (se_log * se_log);
        wsum += w;
        lsum += w * rr.ln();
        n_used += e.n_used;
    }
    Ok(VeEstimate::from_log_scale(
        estimates[0].estimand,
        lsum / wsum,
        (1.0 / wsum).sqrt(),
        StratumTag::Pooled,
        estimates[0].method,
        n_used,
    ))
}

/// w_i = se_i^-2 / sum_j se_j^-2.
pub fn inverse_variance_weights(ses: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    if ses.iter().any(|s| *s <= 0.0) {
        return Err(EstimatorError::ZeroSe);
    }
    let inv: Vec<f64> = ses.iter().map(|s| 1.0 / (s * s)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// VE = 1 - (1 - VE_s) / RR_P, converting a symptomatic-infection VE to an
/// any-infection VE given the relative risk of progression to symptoms.
pub fn rrp_convert(ve_s: f64, rr_p: f64) -> Result<f64, EstimatorError> {
    if ve_s >= 1.0 {
        return Err(EstimatorError::DomainError("ve_s must be < 1".into()));
    }
    if rr_p <= 0.0 {
        return Err(EstimatorError::DomainError("rr_p must be > 0".into()));
    }
    Ok(1.0 - (1.0 - ve_s) / rr_p)
}

/// RR_P = (1 - VE_s) / (1 - VE).
pub fn rrp_infer(ve_s: f64, ve: f64) -> Result<f64, EstimatorError> {
    if ve_s >= 1.0 || ve >= 1.0 {
        return Err(EstimatorError::DomainError(
            "both VE arguments must be < 1".into(),
        ));
    }
    Ok((1.0 - ve_s) / (1.0 - ve))
}

/// A pointwise VE(x1) curve with 95% confidence limits.
#[derive(Debug, Clone, PartialEq)]
pub struct VeCurve {
    pub estimand: Estimand,
    pub method: Method,
    pub grid: Vec<f64>,
    pub point: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

/// Pointwise VE(x1). Parametric fits add a v*x1 interaction so the log RR is
/// linear in x1; the marginal estimand combines the disease-unrelated and
/// case-contact strata by inverse variance at each grid point.
pub fn estimate_ve_curve(
    dataset: &Dataset,
    estimand: Estimand,
    grid: &[f64],
    method: Method,
) -> Result<VeCurve, EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::DomainError("empty grid".into()));
    }
    if let Some(bad) = grid.iter().find(|x| !(0.5..=1.0).contains(*x)) {
        return Err(EstimatorError::DomainError(format!(
            "grid point {bad} outside [0.5, 1]"
        )));
    }
    let reasons: &[Reason] = match estimand {
        Estimand::VeSSeeker => &[Reason::Symptoms],
        Estimand::VeMarginal => &[Reason::DiseaseUnrelated, Reason::CaseContactTracing],
        Estimand::VeCct => &[Reason::CaseContactTracing],
        Estimand::VePooledNaive => &[],
    };

    let per_stratum: Vec<Vec<(f64, f64)>> = if estimand == Estimand::VePooledNaive {
        let subjects: Vec<&Subject> = dataset.tested().collect();
        check_arms(&subjects)?;
        vec![curve_log_scale(&subjects, Link::Logit, grid, method)?]
    } else {
        reasons
            .iter()
            .map(|&r| {
                let subjects = stratum_subjects(dataset, r);
                check_arms(&subjects)?;
                curve_log_scale(&subjects, reason_link(r), grid, method)
            })
            .collect::<Result<_, _>>()?
    };

    let mut point = Vec::with_capacity(grid.len());
    let mut ci_low = Vec::with_capacity(grid.len());
    let mut ci_high = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let parts: Vec<(f64, f64)> = per_stratum.iter().map(|s| s[k]).collect();
        let (l, se_log) = if parts.len() == 1 {
            parts[0]
        } else {
            let wsum: f64 = parts.iter().map(|(_, s)| 1.0 / (s * s)).sum();
            let l = parts.iter().map(|(l, s)| l / (s * s)).sum::<f64>() / wsum;
            (l, (1.0 / wsum).sqrt())
        };
        let rr = l.exp();
        let p = 1.0 - rr;
        let se = rr * se_log;
        point.push(p);
        ci_low.push(p - Z_95 * se);
        ci_high.push(p + Z_95 * se);
    }
    Ok(VeCurve {
        estimand,
        method,
        grid: grid.to_vec(),
        point,
        ci_low,
        ci_high,
    })
}

fn curve_log_scale(
    subjects: &[&Subject],
    link: Link,
    grid: &[f64],
    method: Method,
) -> Result<Vec<(f64, f64)>, EstimatorError> {
    match method {
        Method::Parametric => {
            let (y, xmat) = design(subjects, true);
            let fit = fit_glm(&y, &xmat, link)?;
            Ok(grid
                .iter()
                .map(|&x| {
                    let l = fit.coefficients[1] + x * fit.coefficients[4];
                    // var(c'beta) with c selecting the v and v*x1 coefficients
                    let var = fit.covariance_sandwich[(1, 1)]
                        + 2.0 * x * fit.covariance_sandwich[(1, 4)]
                        + x * x * fit.covariance_sandwich[(4, 4)];
                    (l, var.sqrt())
                })
                .collect())
        }
        Method::Kernel => grid
            .iter()
            .map(|&x| kernel_point_x2_stratified(subjects, x, link == Link::Logit))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, Prevalence, ScenarioConfig, HOMOGENEOUS_LOG_RR};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dummy(point: f64, se: f64) -> VeEstimate {
        VeEstimate {
            estimand: Estimand::VeMarginal,
            point,
            se,
            ci_low: point - Z_95 * se,
            ci_high: point + Z_95 * se,
            stratum: StratumTag::Pooled,
            method: Method::Parametric,
            n_used: 100,
        }
    }

    #[test]
    fn inverse_variance_weight_arithmetic() {
        let w = inverse_variance_weights(&[0.02, 0.02]).unwrap();
        assert_relative_eq!(w[0], 0.5, max_relative = 1e-12);
        let w = inverse_variance_weights(&[0.01, 0.03]).unwrap();
        assert_relative_eq!(w[0], 0.9, max_relative = 1e-12);
        assert_relative_eq!(w[1], 0.1, max_relative = 1e-12);
        assert!(matches!(
            inverse_variance_weights(&[0.01, 0.0]),
            Err(EstimatorError::ZeroSe)
        ));
    }

    #[test]
    fn combine_weight_one_returns_first() {
        let a = dummy(0.4, 0.05);
        let b = dummy(0.1, 0.02);
        let c = combine_estimates(&[a, b], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(c.point, a.point, max_relative = 1e-12);
        assert_relative_eq!(c.se, a.se, max_relative = 1e-12);
    }

    #[test]
    fn combine_equal_se_halves_variance() {
        let a = dummy(0.4, 0.06);
        let b = dummy(0.2, 0.06);
        let c = combine_estimates(&[a, b], &[0.5, 0.5]).unwrap();
        assert_relative_eq!(c.point, 0.3, max_relative = 1e-12);
        assert_relative_eq!(c.se, 0.06 / 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn combine_rejects_bad_weights() {
        let a = dummy(0.4, 0.05);
        let b = dummy(0.1, 0.02);
        assert!(matches!(
            combine_estimates(&[a, b], &[0.5]),
            Err(EstimatorError::WeightMismatch)
        ));
        assert!(matches!(
            combine_estimates(&[a, b], &[1.5, -0.5]),
            Err(EstimatorError::NonPositiveWeight)
        ));
        assert!(matches!(
            combine_estimates(&[a, b], &[0.5, 0.4]),
            Err(EstimatorError::NonPositiveWeight)
        ));
    }

    #[test]
    fn rrp_conversion_cases() {
        assert_relative_eq!(rrp_convert(0.3935, 1.0).unwrap(), 0.3935);
        assert_relative_eq!(rrp_infer(0.3935, 0.3935).unwrap(), 1.0);
        assert_relative_eq!(rrp_infer(0.7, 0.4).unwrap(), 0.5, max_relative = 1e-12);
        // round trip
        let ve = rrp_convert(0.7, 0.5).unwrap();
        assert_relative_eq!(rrp_infer(0.7, ve).unwrap(), 0.5, max_relative = 1e-12);
        assert!(rrp_convert(1.0, 0.5).is_err());
        assert!(rrp_convert(0.5, 0.0).is_err());
        assert!(rrp_infer(0.5, 1.0).is_err());
    }

    #[test]
    fn delta_se_matches_numeric_propagation() {
        let log_rr = -0.5;
        let se_log = 1e-4;
        let e = VeEstimate::from_log_scale(
            Estimand::VeMarginal,
            log_rr,
            se_log,
            StratumTag::Pooled,
            Method::Parametric,
            10,
        );
        // numeric derivative of l -> 1 - exp(l)
        let step = 1e-6;
        let d = (((1.0 - (log_rr + step).exp()) - (1.0 - (log_rr - step).exp())) / (2.0 * step))
            .abs();
        assert_relative_eq!(e.se, d * se_log, max_relative = 1e-6);
        assert!(e.ci_low <= e.point && e.point <= e.ci_high);
    }

    #[test]
    fn unrelated_stratum_recovers_truth() {
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 60_000;
        let ds = generate_dataset(&sc, 11).unwrap();
        let e = estimate_stratum_ve(&ds, Reason::DiseaseUnrelated, Method::Parametric, EvalPoint::Average)
            .unwrap();
        let truth = 1.0 - HOMOGENEOUS_LOG_RR.exp();
        assert!((e.point - truth).abs() < 4.0 * e.se, "VE {} truth {truth}", e.point);
        assert!(e.se < 0.05);
    }

    #[test]
    fn symptoms_stratum_recovers_truth() {
        let mut sc = ScenarioConfig::new(Prevalence::Low);
        sc.n_subjects = 80_000;
        let ds = generate_dataset(&sc, 13).unwrap();
        let e = estimate_stratum_ve(&ds, Reason::Symptoms, Method::Parametric, EvalPoint::Average)
            .unwrap();
        let truth = 1.0 - HOMOGENEOUS_LOG_RR.exp();
        assert!((e.point - truth).abs() < 4.0 * e.se, "VE {} truth {truth}", e.point);
    }

    #[test]
    fn kernel_stratum_estimate_is_sane() {
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 60_000;
        let ds = generate_dataset(&sc, 19).unwrap();
        let e = estimate_stratum_ve(
            &ds,
            Reason::DiseaseUnrelated,
            Method::Kernel,
            EvalPoint::At(0.75),
        )
        .unwrap();
        let truth = 1.0 - HOMOGENEOUS_LOG_RR.exp();
        assert!((e.point - truth).abs() < 4.0 * e.se, "VE {} se {}", e.point, e.se);
    }

    #[test]
    fn pooled_naive_is_biased_upward_high() {
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 60_000;
        let ds = generate_dataset(&sc, 17).unwrap();
        let e = estimate_pooled_naive(&ds, Method::Parametric).unwrap();
        let truth = 1.0 - HOMOGENEOUS_LOG_RR.exp();
        assert!(e.point - truth > 0.3, "pooled bias {}", e.point - truth);
    }

    #[test]
    fn rare_outcome_pooled_approaches_stratified() {
        // single reason stratum, rare outcome: OR approx RR
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 40_000;
        let mut ds = generate_dataset(&sc, 23).unwrap();
        for s in &mut ds.subjects {
            s.reason = Reason::DiseaseUnrelated;
            s.tested = 1;
            // thin the outcome to make it rare while keeping the RR structure
            if s.i == 1 && rng.gen::<f64>() > 0.15 {
                s.i = 0;
            }
        }
        let pooled = estimate_pooled_naive(&ds, Method::Parametric).unwrap();
        let strat =
            estimate_stratum_ve(&ds, Reason::DiseaseUnrelated, Method::Parametric, EvalPoint::Average)
                .unwrap();
        assert!(
            (pooled.point - strat.point).abs() < 0.03,
            "pooled {} stratified {}",
            pooled.point,
            strat.point
        );
    }

    #[test]
    fn one_arm_only_detected() {
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 500;
        let mut ds = generate_dataset(&sc, 31).unwrap();
        for s in &mut ds.subjects {
            s.v = 1;
        }
        assert!(matches!(
            estimate_stratum_ve(&ds, Reason::DiseaseUnrelated, Method::Parametric, EvalPoint::Average),
            Err(EstimatorError::OneArmOnly)
        ));
        let empty = Dataset {
            subjects: vec![],
            scenario: None,
            seed: 0,
        };
        assert!(matches!(
            estimate_stratum_ve(&empty, Reason::DiseaseUnrelated, Method::Parametric, EvalPoint::Average),
            Err(EstimatorError::EmptyStratum)
        ));
    }

    #[test]
    fn curve_rejects_out_of_support_grid() {
        let sc = ScenarioConfig::new(Prevalence::High);
        let ds = generate_dataset(&sc, 37).unwrap();
        assert!(matches!(
            estimate_ve_curve(&ds, Estimand::VeMarginal, &[0.3], Method::Parametric),
            Err(EstimatorError::DomainError(_))
        ));
    }

    #[test]
    fn homogeneous_curve_is_flat_near_truth() {
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 60_000;
        let ds = generate_dataset(&sc, 41).unwrap();
        let grid = [0.55, 0.65, 0.75, 0.85, 0.95];
        let curve = estimate_ve_curve(&ds, Estimand::VeMarginal, &grid, Method::Parametric).unwrap();
        let truth = 1.0 - HOMOGENEOUS_LOG_RR.exp();
        for (k, p) in curve.point.iter().enumerate() {
            let half = (curve.ci_high[k] - curve.ci_low[k]) / 2.0;
            assert!((p - truth).abs() < 2.5 * half, "point {p} at x={}", grid[k]);
        }
    }

    #[test]
    fn row_order_invariance() {
        let mut sc = ScenarioConfig::new(Prevalence::High);
        sc.n_subjects = 5_000;
        let ds = generate_dataset(&sc, 43).unwrap();
        let mut rev = ds.clone();
        rev.subjects.reverse();
        let a = estimate_stratum_ve(&ds, Reason::DiseaseUnrelated, Method::Parametric, EvalPoint::Average)
            .unwrap();
        let b = estimate_stratum_ve(&rev, Reason::DiseaseUnrelated, Method::Parametric, EvalPoint::Average)
            .unwrap();
        assert!((a.point - b.point).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn inverse_variance_combination_beats_every_input(
            ses in proptest::collection::vec(0.001f64..1.0, 2..6),
            points in proptest::collection::vec(-0.5f64..0.9, 6),
        ) {
            let ses = &ses[..];
            let ests: Vec<VeEstimate> = ses
                .iter()
                .zip(&points)
                .map(|(s, p)| dummy(*p, *s))
                .collect();
            let w = inverse_variance_weights(ses).unwrap();
            let c = combine_estimates(&ests, &w).unwrap();
            let min_se = ses.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(c.se <= min_se + 1e-12);
            // combined variance equals the harmonic form 1/sum(se^-2)
            let harm = (1.0 / ses.iter().map(|s| 1.0 / (s * s)).sum::<f64>()).sqrt();
            prop_assert!((c.se - harm).abs() < 1e-12);
        }
    }
}
