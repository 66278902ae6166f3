//! Hypothesis tests between estimands and the combined asymptotic variance
//! of weighted multi-stratum relative-risk estimators.

use crate::estimators::{Estimand, VeEstimate};
use crate::glm::GlmFit;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("standard errors must not both be zero")]
    ZeroSe,
    #[error("fits, weights, and reason probabilities must have equal lengths")]
    DimensionMismatch,
    #[error("reason probabilities must be positive")]
    BadReasonProb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub estimands: (Estimand, Estimand),
}

/// Two-sided z-test of equality between two VE estimates from disjoint
/// (independent) strata.
pub fn equality_test(
    e1: &VeEstimate,
    e2: &VeEstimate,
    alpha: f64,
) -> Result<TestResult, InferenceError> {
    let var = e1.se * e1.se + e2.se * e2.se;
    if var <= 0.0 {
        return Err(InferenceError::ZeroSe);
    }
    let z = (e1.point - e2.point) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(TestResult {
        statistic: z,
        p_value,
        alpha,
        reject: p_value < alpha,
        estimands: (e1.estimand, e2.estimand),
    })
}

/// Asymptotic variance of the weighted combination of per-stratum VE
/// estimators: (1/n) sum_r w_r^2 [1/Pr(R=r|T=1)] v_r' Sigma_0r v_r e^{2 l_r},
/// with Sigma_0r = n_r * Cov(beta_r), v_r the contrast selecting the vaccine
/// coefficient (plus x times the interaction coefficient when present and an
/// evaluation point is given), and l_r the fitted log relative risk.
pub fn combined_variance(
    fits: &[GlmFit],
    weights: &[f64],
    reason_probs: &[f64],
    x: Option<f64>,
) -> Result<f64, InferenceError> {
    if fits.is_empty() || fits.len() != weights.len() || fits.len() != reason_probs.len() {
        return Err(InferenceError::DimensionMismatch);
    }
    if reason_probs.iter().any(|p| *p <= 0.0) {
        return Err(InferenceError::BadReasonProb);
    }
    let n_total: f64 = fits.iter().map(|f| f.n_obs as f64).sum();
    let mut var = 0.0;
    for ((fit, w), p_r) in fits.iter().zip(weights).zip(reason_probs) {
        let dim = fit.coefficients.len();
        let mut v = vec![0.0; dim];
        v[1] = 1.0;
        if let (Some(x0), true) = (x, dim >= 5) {
            v[4] = x0;
        }
        let log_rr: f64 = v
            .iter()
            .zip(fit.coefficients.iter())
            .map(|(a, b)| a * b)
            .sum();
        let mut quad = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                quad += v[a] * fit.covariance_sandwich[(a, b)] * v[b];
            }
        }
        let sigma0 = fit.n_obs as f64 * quad;
        var += w * w * (1.0 / p_r) * sigma0 * (2.0 * log_rr).exp();
    }
    Ok(var / n_total)
}
