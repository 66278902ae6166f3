//! Dataset and results serialization: CSV round-tripping, plot data, and
//! atomic file writes.

use crate::estimators::VeCurve;
use crate::kernel::KernelFit;
use crate::mc::McSummary;
use crate::sim::{Dataset, Reason, Subject};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoModuleError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

/// Counts of tolerated anomalies seen while loading a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadWarnings {
    /// Rows whose reason token was unknown and mapped to `missing`.
    pub unknown_reason: usize,
    /// Rows with x1 outside [0.5, 1] (accepted; the simulator's bound is not
    /// a data contract).
    pub x1_out_of_range: usize,
}

const COLUMNS: [&str; 8] = ["x1", "x2", "h", "v", "c", "i", "reason", "tested"];

/// Write the dataset as CSV with header `x1,x2,h,v,c,i,reason,tested`.
/// The write is atomic: a temp file in the target directory is renamed over
/// the destination only after a successful flush.
pub fn save_dataset_csv(dataset: &Dataset, path: &Path) -> Result<(), IoModuleError> {
    atomic_write(path, |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(COLUMNS)?;
        for s in &dataset.subjects {
            w.write_record(&[
                s.x1.to_string(),
                s.x2.to_string(),
                s.h.to_string(),
                s.v.to_string(),
                s.c.to_string(),
                s.i.to_string(),
                s.reason.token().to_string(),
                s.tested.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Load a dataset written by `save_dataset_csv` or hand-prepared real data.
/// The `h` column is optional (defaults to 0 when absent); unknown reason
/// tokens map to `missing` and are counted in the warnings.
pub fn load_dataset_csv(path: &Path) -> Result<(Dataset, LoadWarnings), IoModuleError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut col = std::collections::HashMap::new();
    for (k, name) in headers.iter().enumerate() {
        col.insert(name.trim().to_string(), k);
    }
    for required in COLUMNS.iter().filter(|c| **c != "h") {
        if !col.contains_key(*required) {
            return Err(IoModuleError::Schema(format!(
                "missing required column `{required}`"
            )));
        }
    }
    let h_col = col.get("h").copied();

    let mut warnings = LoadWarnings::default();
    let mut subjects = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record?;
        let field = |name: &str| -> &str { record.get(col[name]).unwrap_or("") };
        let parse_f64 = |name: &str| -> Result<f64, IoModuleError> {
            field(name).trim().parse().map_err(|_| IoModuleError::Parse {
                line,
                message: format!("bad value `{}` in column `{name}`", field(name)),
            })
        };
        let parse_flag = |name: &str| -> Result<u8, IoModuleError> {
            match field(name).trim() {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(IoModuleError::Parse {
                    line,
                    message: format!("bad value `{other}` in column `{name}` (expected 0/1)"),
                }),
            }
        };
        let x1 = parse_f64("x1")?;
        if !(0.5..=1.0).contains(&x1) {
            warnings.x1_out_of_range += 1;
        }
        let h = match h_col {
            Some(k) => match record.get(k).map(str::trim) {
                None | Some("") => 0,
                Some("0") => 0,
                Some("1") => 1,
                Some(other) => {
                    return Err(IoModuleError::Parse {
                        line,
                        message: format!("bad value `{other}` in column `h`"),
                    })
                }
            },
            None => 0,
        };
        let token = field("reason").trim().to_string();
        let reason = match Reason::from_token(&token) {
            Some(r) => r,
            None => {
                warnings.unknown_reason += 1;
                Reason::Missing
            }
        };
        subjects.push(Subject {
            x1,
            x2: parse_flag("x2")?,
            h,
            v: parse_flag("v")?,
            c: parse_flag("c")?,
            i: parse_flag("i")?,
            reason,
            tested: parse_flag("tested")?,
        });
    }
    Ok((
        Dataset {
            subjects,
            scenario: None,
            seed: 0,
        },
        warnings,
    ))
}

/// One row of plot data; `None` marks a grid point where the estimator was
/// unavailable (serialized as empty fields, never fabricated numbers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotRow {
    pub x1: f64,
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub truth: f64,
}

pub fn plot_rows_from_curve(curve: &VeCurve, truth: &[f64]) -> Vec<PlotRow> {
    curve
        .grid
        .iter()
        .enumerate()
        .map(|(k, &x1)| PlotRow {
            x1,
            estimate: Some(curve.point[k]),
            ci_low: Some(curve.ci_low[k]),
            ci_high: Some(curve.ci_high[k]),
            truth: truth[k],
        })
        .collect()
}

pub fn plot_rows_from_kernel(fit: &KernelFit, truth: &[f64]) -> Vec<PlotRow> {
    fit.grid
        .iter()
        .enumerate()
        .map(|(k, &x1)| {
            let (estimate, lo, hi) = match (fit.log_rr[k], fit.se_log_rr[k]) {
                (Some(l), Some(se)) => {
                    let rr = l.exp();
                    let p = 1.0 - rr;
                    let half = 1.96 * rr * se;
                    (Some(p), Some(p - half), Some(p + half))
                }
                _ => (None, None, None),
            };
            PlotRow {
                x1,
                estimate,
                ci_low: lo,
                ci_high: hi,
                truth: truth[k],
            }
        })
        .collect()
}

/// Emit `x1,estimate,ci_low,ci_high,truth` rows sorted ascending in x1.
pub fn emit_plot_data(rows: &[PlotRow], path: &Path) -> Result<(), IoModuleError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.x1.partial_cmp(&b.x1).expect("finite x1"));
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    atomic_write(path, |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["x1", "estimate", "ci_low", "ci_high", "truth"])?;
        for r in &sorted {
            w.write_record(&[
                r.x1.to_string(),
                opt(r.estimate),
                opt(r.ci_low),
                opt(r.ci_high),
                r.truth.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Write the replicated-experiment results table.
pub fn write_results_csv(
    scenario_label: &str,
    summaries: &[McSummary],
    path: &Path,
) -> Result<(), IoModuleError> {
    atomic_write(path, |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record([
            "scenario",
            "estimator",
            "bias",
            "empirical_se",
            "avg_se",
            "coverage",
            "relative_efficiency",
        ])?;
        for s in summaries {
            w.write_record(&[
                scenario_label.to_string(),
                s.estimator.name().to_string(),
                format!("{:.6}", s.bias),
                format!("{:.6}", s.empirical_se),
                format!("{:.6}", s.avg_estimated_se),
                format!("{:.6}", s.coverage),
                s.relative_efficiency
                    .map(|r| format!("{r:.6}"))
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Write through a temp file in the destination directory, then rename, so an
/// interrupted run never leaves a partial file at `path`.
pub fn atomic_write<F>(path: &Path, write_fn: F) -> Result<(), IoModuleError>
where
    F: FnOnce(&mut std::fs::File) -> Result<(), IoModuleError>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    write_fn(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
