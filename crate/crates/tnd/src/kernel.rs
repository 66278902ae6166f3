//! Nonparametric conditional relative-risk estimation.
//!
//! Nadaraya-Watson-style four-sum ratio of kernel-weighted counts within a
//! reason stratum, with a plug-in asymptotic variance built from the
//! kernel-weighted covariance of (IV, V, 1-V, I(1-V)) and a kernel density
//! estimate of the covariate.

use crate::sim::{Dataset, Reason};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("too few observations in stratum ({0})")]
    TooFewObservations(usize),
    #[error("a required kernel-weighted cell is empty at x = {0}")]
    EmptyCell(f64),
    #[error("reason stratum is empty")]
    EmptyStratum,
}

/// L2 norm of the Gaussian kernel: integral of K^2 = 1 / (2 sqrt(pi)).
pub const GAUSSIAN_KERNEL_L2: f64 = 0.28209479177387814;

/// Second-order Gaussian kernel.
pub fn gaussian_kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// One observation of a reason stratum for kernel smoothing over x1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumRow {
    pub infected: bool,
    pub vaccinated: bool,
    pub x1: f64,
}

/// Undersmoothing bandwidth: scale * sigma * n^(-1/(2s+d)) / sqrt(log n),
/// strictly inside the o(n^(-1/(2s+d))) regime.
pub fn select_bandwidth(
    n_stratum: usize,
    d: u32,
    s: u32,
    sigma: f64,
    scale: f64,
) -> Result<f64, KernelError> {
    if n_stratum < 50 {
        return Err(KernelError::TooFewObservations(n_stratum));
    }
    let n = n_stratum as f64;
    let rate = -1.0 / (2.0 * s as f64 + d as f64);
    Ok(scale * sigma * n.powf(rate) / n.ln().sqrt())
}

fn kernel_sums(x: f64, rows: &[StratumRow], h: f64) -> ([f64; 4], f64) {
    // components (IV, V, 1-V, I(1-V))
    let mut sums = [0.0f64; 4];
    let mut wtot = 0.0;
    for r in rows {
        let w = gaussian_kernel((r.x1 - x) / h);
        let i = r.infected as u8 as f64;
        let v = r.vaccinated as u8 as f64;
        sums[0] += w * i * v;
        sums[1] += w * v;
        sums[2] += w * (1.0 - v);
        sums[3] += w * i * (1.0 - v);
        wtot += w;
    }
    (sums, wtot)
}

/// log of the four-sum relative-risk ratio at x:
/// log[(sum w IV / sum w V) * (sum w (1-V) / sum w I(1-V))].
pub fn estimate_log_rr_at(x: f64, rows: &[StratumRow], h: f64) -> Result<f64, KernelError> {
    let (s, _) = kernel_sums(x, rows, h);
    if s.iter().any(|c| *c <= 0.0) {
        return Err(KernelError::EmptyCell(x));
    }
    Ok((s[0] / s[1]).ln() + (s[2] / s[3]).ln())
}

/// Plug-in asymptotic variance of the log relative risk at x:
/// c' Sigma c * int K^2 / (n h f(x)), with Sigma the kernel-weighted
/// covariance of (IV, V, 1-V, I(1-V)) and f a kernel density estimate.
pub fn variance_log_rr_at(x: f64, rows: &[StratumRow], h: f64) -> Result<f64, KernelError> {
    let n = rows.len();
    let (sums, wtot) = kernel_sums(x, rows, h);
    if sums.iter().any(|c| *c <= 0.0) || wtot <= 0.0 {
        return Err(KernelError::EmptyCell(x));
    }
    let mu = [
        sums[0] / wtot,
        sums[1] / wtot,
        sums[2] / wtot,
        sums[3] / wtot,
    ];
    // kernel-weighted covariance of the four components
    let mut cov = [[0.0f64; 4]; 4];
    for r in rows {
        let w = gaussian_kernel((r.x1 - x) / h);
        let i = r.infected as u8 as f64;
        let v = r.vaccinated as u8 as f64;
        let u = [i * v, v, 1.0 - v, i * (1.0 - v)];
        for a in 0..4 {
            for b in a..4 {
                cov[a][b] += w * (u[a] - mu[a]) * (u[b] - mu[b]);
            }
        }
    }
    for a in 0..4 {
        for b in a..4 {
            cov[a][b] /= wtot;
            cov[b][a] = cov[a][b];
        }
    }
    let c = [1.0 / mu[0], -1.0 / mu[1], 1.0 / mu[2], -1.0 / mu[3]];
    let mut quad = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            quad += c[a] * cov[a][b] * c[b];
        }
    }
    let density = wtot / (n as f64 * h);
    Ok(quad * GAUSSIAN_KERNEL_L2 / (n as f64 * h * density))
}

/// Kernel-weighted log odds ratio at x; used for the symptoms stratum where
/// the odds ratio is the identified quantity.
pub fn estimate_log_or_at(x: f64, rows: &[StratumRow], h: f64) -> Result<f64, KernelError> {
    let (s, cells) = or_cells(x, rows, h);
    if cells.iter().any(|c| *c <= 0.0) || s <= 0.0 {
        return Err(KernelError::EmptyCell(x));
    }
    Ok((cells[0] / cells[1]).ln() - (cells[2] / cells[3]).ln())
}

/// Plug-in variance of the kernel log odds ratio at x.
pub fn variance_log_or_at(x: f64, rows: &[StratumRow], h: f64) -> Result<f64, KernelError> {
    let n = rows.len();
    let (wtot, cells) = or_cells(x, rows, h);
    if cells.iter().any(|c| *c <= 0.0) || wtot <= 0.0 {
        return Err(KernelError::EmptyCell(x));
    }
    let mu = [
        cells[0] / wtot,
        cells[1] / wtot,
        cells[2] / wtot,
        cells[3] / wtot,
    ];
    let mut cov = [[0.0f64; 4]; 4];
    for r in rows {
        let w = gaussian_kernel((r.x1 - x) / h);
        let i = r.infected as u8 as f64;
        let v = r.vaccinated as u8 as f64;
        let u = [i * v, (1.0 - i) * v, i * (1.0 - v), (1.0 - i) * (1.0 - v)];
        for a in 0..4 {
            for b in a..4 {
                cov[a][b] += w * (u[a] - mu[a]) * (u[b] - mu[b]);
            }
        }
    }
    for a in 0..4 {
        for b in a..4 {
            cov[a][b] /= wtot;
            cov[b][a] = cov[a][b];
        }
    }
    let c = [1.0 / mu[0], -1.0 / mu[1], -1.0 / mu[2], 1.0 / mu[3]];
    let mut quad = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            quad += c[a] * cov[a][b] * c[b];
        }
    }
    let density = wtot / (n as f64 * h);
    Ok(quad * GAUSSIAN_KERNEL_L2 / (n as f64 * h * density))
}

fn or_cells(x: f64, rows: &[StratumRow], h: f64) -> (f64, [f64; 4]) {
    // 2x2 table weights: (IV, (1-I)V, I(1-V), (1-I)(1-V))
    let mut cells = [0.0f64; 4];
    let mut wtot = 0.0;
    for r in rows {
        let w = gaussian_kernel((r.x1 - x) / h);
        let i = r.infected as u8 as f64;
        let v = r.vaccinated as u8 as f64;
        cells[0] += w * i * v;
        cells[1] += w * (1.0 - i) * v;
        cells[2] += w * i * (1.0 - v);
        cells[3] += w * (1.0 - i) * (1.0 - v);
        wtot += w;
    }
    (wtot, cells)
}

/// Kernel density estimate of x1 within the stratum.
pub fn density_at(x: f64, rows: &[StratumRow], h: f64) -> Result<f64, KernelError> {
    if rows.len() < 50 {
        return Err(KernelError::TooFewObservations(rows.len()));
    }
    let total: f64 = rows
        .iter()
        .map(|r| gaussian_kernel((r.x1 - x) / h))
        .sum();
    Ok(total / (rows.len() as f64 * h))
}

/// Batched kernel relative-risk curve for one reason stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFit {
    pub reason: Reason,
    pub bandwidth: f64,
    pub kernel_order: u32,
    pub grid: Vec<f64>,
    pub log_rr: Vec<Option<f64>>,
    pub se_log_rr: Vec<Option<f64>>,
    pub n_stratum: usize,
}

pub fn stratum_rows(dataset: &Dataset, reason: Reason) -> Vec<StratumRow> {
    dataset
        .stratum(reason)
        .map(|s| StratumRow {
            infected: s.i == 1,
            vaccinated: s.v == 1,
            x1: s.x1,
        })
        .collect()
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Evaluate the kernel estimator over a grid; grid points with an empty cell
/// carry `None` rather than an imputed value.
pub fn kernel_curve(
    dataset: &Dataset,
    reason: Reason,
    grid: &[f64],
    s: u32,
) -> Result<KernelFit, KernelError> {
    let rows = stratum_rows(dataset, reason);
    if rows.is_empty() {
        return Err(KernelError::EmptyStratum);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.x1).collect();
    let h = select_bandwidth(rows.len(), 1, s, sample_sd(&xs), 1.0)?;
    let mut log_rr = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for &x in grid {
        match (estimate_log_rr_at(x, &rows, h), variance_log_rr_at(x, &rows, h)) {
            (Ok(l), Ok(var)) => {
                log_rr.push(Some(l));
                se.push(Some(var.sqrt()));
            }
            _ => {
                log_rr.push(None);
                se.push(None);
            }
        }
    }
    Ok(KernelFit {
        reason,
        bandwidth: h,
        kernel_order: s,
        grid: grid.to_vec(),
        log_rr,
        se_log_rr: se,
        n_stratum: rows.len(),
    })
}
