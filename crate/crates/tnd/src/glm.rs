//! Binomial regression with log and logit links.
//!
//! The logit link is fit by Newton scoring on the binomial likelihood. The
//! log link solves the estimating equation sum x (y - exp(eta)) = 0 by Fisher
//! scoring with step-halving so that every accepted iterate keeps the linear
//! predictor nonpositive (fitted probabilities at most one). Coefficient
//! covariances come in a model-based and a robust sandwich flavor.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("IRLS did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("separation: a covariate perfectly predicts the outcome")]
    Separation,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("outcome is constant; need at least one observation per class")]
    DegenerateOutcome,
    #[error("empty dataset or dimension mismatch")]
    BadInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Log,
    Logit,
}

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOL: f64 = 1e-8;
pub const COEF_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 50;

/// A fitted binomial regression.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub link: Link,
    pub coefficients: DVector<f64>,
    pub covariance_model: DMatrix<f64>,
    pub covariance_sandwich: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

impl GlmFit {
    pub fn linear_predictor(&self, covariates: &[f64]) -> f64 {
        covariates
            .iter()
            .zip(self.coefficients.iter())
            .map(|(x, b)| x * b)
            .sum()
    }
}

/// Fitted probability at a covariate vector. No truncation is applied; log
/// link admissibility keeps the value within [0, 1] on training-like inputs.
pub fn predict_prob(fit: &GlmFit, covariates: &[f64]) -> f64 {
    let eta = fit.linear_predictor(covariates);
    match fit.link {
        Link::Log => eta.exp(),
        Link::Logit => 1.0 / (1.0 + (-eta).exp()),
    }
}

/// Analytic score (gradient of the fitting objective) at `beta`.
///
/// Logit: gradient of the binomial log-likelihood, sum x (y - sigma(eta)).
/// Log: the estimating function sum x (y - exp(eta)) whose root the log-link
/// fit solves.
pub fn score_at(beta: &[f64], y: &[f64], x: &[Vec<f64>], link: Link) -> Vec<f64> {
    let p = beta.len();
    let mut score = vec![0.0; p];
    for (yi, xi) in y.iter().zip(x) {
        let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = match link {
            Link::Log => eta.exp(),
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        };
        let r = yi - mu;
        for (s, xij) in score.iter_mut().zip(xi) {
            *s += xij * r;
        }
    }
    score
}

pub fn fit_glm(y: &[f64], x: &[Vec<f64>], link: Link) -> Result<GlmFit, GlmError> {
    fit_glm_weighted(y, x, None, link)
}

/// Weighted fit; weights are frequency-style (a weight-2 row behaves like a
/// duplicated row). `demo_bias` uses fractional weights for exact enumeration.
pub fn fit_glm_weighted(
    y: &[f64],
    x: &[Vec<f64>],
    weights: Option<&[f64]>,
    link: Link,
) -> Result<GlmFit, GlmError> {
    let n = y.len();
    if n == 0 || x.len() != n {
        return Err(GlmError::BadInput);
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(GlmError::BadInput);
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(GlmError::BadInput);
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let wsum: f64 = w.iter().sum();
    let ybar: f64 = y.iter().zip(&w).map(|(yi, wi)| yi * wi).sum::<f64>() / wsum;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Err(GlmError::DegenerateOutcome);
    }

    let mut beta = DVector::zeros(p);
    if link == Link::Log {
        // start at the intercept-only closed form, assuming column 0 is the
        // intercept; any other layout still starts feasible when eta <= 0
        beta[0] = ybar.ln();
    }

    let eta_of = |beta: &DVector<f64>| -> Vec<f64> {
        x.iter()
            .map(|xi| xi.iter().zip(beta.iter()).map(|(a, b)| a * b).sum())
            .collect()
    };

    let mut eta = eta_of(&beta);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // score and expected information at the current iterate
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for k in 0..n {
            let (mu, wk) = match link {
                Link::Log => {
                    let mu = eta[k].exp();
                    (mu, mu)
                }
                Link::Logit => {
                    let mu = 1.0 / (1.0 + (-eta[k]).exp());
                    (mu, mu * (1.0 - mu))
                }
            };
            let r = w[k] * (y[k] - mu);
            let ww = w[k] * wk;
            for a in 0..p {
                score[a] += x[k][a] * r;
                for b in a..p {
                    info[(a, b)] += ww * x[k][a] * x[k][b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }

        if score.amax() < SCORE_TOL {
            converged = true;
            break;
        }

        let chol = info.clone().cholesky().ok_or(GlmError::RankDeficient)?;
        let delta = chol.solve(&score);

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + lambda * &delta;
            let cand_eta = eta_of(&cand);
            let feasible = link == Link::Logit
                || cand_eta.iter().all(|e| *e <= -1e-12);
            if feasible {
                let step = lambda * delta.amax();
                beta = cand;
                eta = cand_eta;
                accepted = true;
                if step < COEF_TOL * beta.amax().max(1.0) {
                    converged = true;
                }
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(GlmError::NonConvergence(iterations));
        }
        if beta.amax() > 1e3 {
            return Err(GlmError::Separation);
        }
        if converged {
            break;
        }
    }

    if !converged {
        return Err(GlmError::NonConvergence(MAX_ITERATIONS));
    }

    // A logit score can vanish with every observation perfectly predicted
    // (probabilities saturated at 0/1); that is separation, not a fit.
    if link == Link::Logit {
        let perfectly_predicted = y.iter().zip(&eta).all(|(yi, e)| {
            let mu = 1.0 / (1.0 + (-e).exp());
            (yi - mu).abs() < 1e-6
        });
        if perfectly_predicted {
            return Err(GlmError::Separation);
        }
    }

    let (covariance_model, covariance_sandwich) = covariances(y, x, &w, &eta, link)?;
    Ok(GlmFit {
        link,
        coefficients: beta,
        covariance_model,
        covariance_sandwich,
        converged,
        iterations,
        n_obs: n,
    })
}

fn covariances(
    y: &[f64],
    x: &[Vec<f64>],
    w: &[f64],
    eta: &[f64],
    link: Link,
) -> Result<(DMatrix<f64>, DMatrix<f64>), GlmError> {
    let n = y.len();
    let p = x[0].len();
    let mut bread = DMatrix::zeros(p, p); // derivative of the estimating function
    let mut meat_robust = DMatrix::zeros(p, p); // empirical score variance
    let mut meat_model = DMatrix::zeros(p, p); // binomial-variance meat
    for k in 0..n {
        let (mu, dmu) = match link {
            Link::Log => {
                let mu = eta[k].exp();
                (mu, mu)
            }
            Link::Logit => {
                let mu = 1.0 / (1.0 + (-eta[k]).exp());
                (mu, mu * (1.0 - mu))
            }
        };
        let r2 = (y[k] - mu) * (y[k] - mu);
        let vm = mu * (1.0 - mu);
        for a in 0..p {
            for b in a..p {
                let xx = x[k][a] * x[k][b];
                bread[(a, b)] += w[k] * dmu * xx;
                meat_robust[(a, b)] += w[k] * r2 * xx;
                meat_model[(a, b)] += w[k] * vm * xx;
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            bread[(a, b)] = bread[(b, a)];
            meat_robust[(a, b)] = meat_robust[(b, a)];
            meat_model[(a, b)] = meat_model[(b, a)];
        }
    }
    let inv = bread
        .clone()
        .cholesky()
        .ok_or(GlmError::SingularInformation)?
        .inverse();
    let sandwich = &inv * &meat_robust * &inv;
    let model = match link {
        // for the logit MLE the bread equals the binomial meat
        Link::Logit => inv.clone(),
        Link::Log => &inv * &meat_model * &inv,
    };
    Ok((model, sandwich))
}

/// Robust sandwich covariance of the coefficients, recomputed from data.
pub fn sandwich_covariance(fit: &GlmFit, y: &[f64], x: &[Vec<f64>]) -> Result<DMatrix<f64>, GlmError> {
    if y.len() != x.len() || y.len() != fit.n_obs {
        return Err(GlmError::BadInput);
    }
    let w = vec![1.0; y.len()];
    let eta: Vec<f64> = x.iter().map(|xi| fit.linear_predictor(xi)).collect();
    let (_, sandwich) = covariances(y, x, &w, &eta, fit.link)?;
    Ok(sandwich)
}
