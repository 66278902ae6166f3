use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tnd::estimators::{
    estimate_pooled_naive, estimate_stratum_ve, estimate_ve_curve, Estimand, EvalPoint, Method,
};
use tnd::inference::equality_test;
use tnd::io::{
    emit_plot_data, load_dataset_csv, plot_rows_from_curve, save_dataset_csv, write_results_csv,
};
use tnd::mc::run_monte_carlo;
use tnd::sim::{generate_dataset, true_ve, Conditioning, Dataset, Reason, ScenarioConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tnd",
    about = "Test-negative design simulation and vaccine-effectiveness estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimandArg {
    /// VE_s(x,1): symptoms stratum, healthcare seekers.
    Ves,
    /// VE(x): disease-unrelated + case-contact strata.
    Ve,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Parametric,
    Kernel,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Parametric => Method::Parametric,
            MethodArg::Kernel => Method::Kernel,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset and write it as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the replicated experiment and write the results table.
    Mc {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; results.csv is written inside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a VE(x1) curve on one simulated dataset and emit plot data.
    Curve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        estimand: EstimandArg,
        /// Number of grid points over [0.55, 0.95].
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long, value_enum, default_value = "parametric")]
        method: MethodArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact-enumeration collider-bias demonstration (no sampling).
    DemoBias,
    /// Test equality of VE_s(x,1) and VE(x) at a covariate value.
    TestEquality {
        #[arg(long)]
        data: PathBuf,
        /// Evaluation point x1 in [0.5, 1].
        #[arg(long)]
        x: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Estimate VE in one reason stratum of a dataset (or pooled).
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// Reason token: symptoms | unrelated | cct | pooled.
        #[arg(long)]
        reason: String,
        #[arg(long, value_enum, default_value = "parametric")]
        method: MethodArg,
    },
}

enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read scenario file: {e}")))?;
    let scenario: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid scenario config: {e}")))?;
    scenario
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(scenario)
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    let (dataset, warnings) =
        load_dataset_csv(path).map_err(|e| CliError::Data(e.to_string()))?;
    if warnings.unknown_reason > 0 {
        eprintln!(
            "warning: {} rows had unknown reason tokens (mapped to `missing`)",
            warnings.unknown_reason
        );
    }
    if warnings.x1_out_of_range > 0 {
        eprintln!(
            "warning: {} rows had x1 outside [0.5, 1]",
            warnings.x1_out_of_range
        );
    }
    Ok(dataset)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            let sc = load_scenario(&scenario)?;
            let seed = seed.unwrap_or(sc.base_seed);
            let ds = generate_dataset(&sc, seed).map_err(|e| CliError::Numeric(e.to_string()))?;
            save_dataset_csv(&ds, &out).map_err(|e| CliError::Data(e.to_string()))?;
            println!(
                "wrote {} subjects ({} tested) to {}",
                ds.subjects.len(),
                ds.tested().count(),
                out.display()
            );
            Ok(())
        }
        Command::Mc { scenario, out } => {
            let sc = load_scenario(&scenario)?;
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;
            let summaries =
                run_monte_carlo(&sc).map_err(|e| CliError::Numeric(e.to_string()))?;
            let label = format!("{:?}", sc.prevalence).to_lowercase();
            let path = out.join("results.csv");
            write_results_csv(&label, &summaries, &path)
                .map_err(|e| CliError::Data(e.to_string()))?;
            println!("scenario,estimator,bias,empirical_se,avg_se,coverage");
            for s in &summaries {
                println!(
                    "{label},{},{:.3},{:.3},{:.3},{:.3}",
                    s.estimator.name(),
                    s.bias,
                    s.empirical_se,
                    s.avg_estimated_se,
                    s.coverage
                );
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Curve {
            scenario,
            estimand,
            grid,
            method,
            seed,
            out,
        } => {
            if grid < 2 {
                return Err(CliError::Config("grid must have at least 2 points".into()));
            }
            let sc = load_scenario(&scenario)?;
            let seed = seed.unwrap_or(sc.base_seed);
            let ds = generate_dataset(&sc, seed).map_err(|e| CliError::Numeric(e.to_string()))?;
            let (target, conditioning) = match estimand {
                EstimandArg::Ves => (Estimand::VeSSeeker, Conditioning::SeekerStratum),
                EstimandArg::Ve => (Estimand::VeMarginal, Conditioning::Marginal),
            };
            let points: Vec<f64> = (0..grid)
                .map(|k| 0.55 + 0.40 * k as f64 / (grid - 1) as f64)
                .collect();
            let curve = estimate_ve_curve(&ds, target, &points, method.into())
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            let truth: Vec<f64> = points.iter().map(|&x| true_ve(&sc, x, conditioning)).collect();
            let rows = plot_rows_from_curve(&curve, &truth);
            emit_plot_data(&rows, &out).map_err(|e| CliError::Data(e.to_string()))?;
            println!("wrote {} grid points to {}", points.len(), out.display());
            Ok(())
        }
        Command::DemoBias => {
            let d = tnd::demo::demo_bias();
            let opt = |v: Option<f64>| match v {
                Some(x) => format!("{x:.4}"),
                None => "n/a".to_string(),
            };
            println!("true VE (population):          {:.4}", d.true_ve);
            println!("aggregated odds-ratio VE:      {:.4}", d.pooled_ve);
            println!("x-adjusted logistic VE:        {}", opt(d.adjusted_ve));
            println!(
                "stratum 1 - OR (x=0, x=1):     {}, {}",
                opt(d.stratum_ve[0]),
                opt(d.stratum_ve[1])
            );
            Ok(())
        }
        Command::TestEquality { data, x, alpha } => {
            if !(0.5..=1.0).contains(&x) {
                return Err(CliError::Config("x must lie in [0.5, 1]".into()));
            }
            if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
                return Err(CliError::Config("alpha must lie in (0, 1)".into()));
            }
            let ds = load_data(&data)?;
            let point = |estimand| -> Result<_, CliError> {
                let c = estimate_ve_curve(&ds, estimand, &[x], Method::Parametric)
                    .map_err(|e| CliError::Numeric(e.to_string()))?;
                Ok((c.point[0], (c.ci_high[0] - c.point[0]) / 1.96))
            };
            let (p1, se1) = point(Estimand::VeSSeeker)?;
            let (p2, se2) = point(Estimand::VeMarginal)?;
            let mk = |estimand, p: f64, se: f64| tnd::estimators::VeEstimate {
                estimand,
                point: p,
                se,
                ci_low: p - 1.96 * se,
                ci_high: p + 1.96 * se,
                stratum: tnd::estimators::StratumTag::Pooled,
                method: Method::Parametric,
                n_used: ds.tested().count(),
            };
            let t = equality_test(
                &mk(Estimand::VeSSeeker, p1, se1),
                &mk(Estimand::VeMarginal, p2, se2),
                alpha,
            )
            .map_err(|e| CliError::Numeric(e.to_string()))?;
            println!("VE_s(x,1) at x={x}: {p1:.4} (se {se1:.4})");
            println!("VE(x)     at x={x}: {p2:.4} (se {se2:.4})");
            println!(
                "z = {:.4}, p = {:.4}, {} H0 at alpha = {}",
                t.statistic,
                t.p_value,
                if t.reject { "reject" } else { "do not reject" },
                alpha
            );
            Ok(())
        }
        Command::Estimate {
            data,
            reason,
            method,
        } => {
            let ds = load_data(&data)?;
            let estimate = if reason == "pooled" {
                estimate_pooled_naive(&ds, method.into())
            } else {
                let r = Reason::from_token(&reason)
                    .filter(|r| {
                        matches!(
                            r,
                            Reason::Symptoms | Reason::DiseaseUnrelated | Reason::CaseContactTracing
                        )
                    })
                    .ok_or_else(|| {
                        CliError::Config(format!(
                            "unknown reason `{reason}` (expected symptoms|unrelated|cct|pooled)"
                        ))
                    })?;
                estimate_stratum_ve(&ds, r, method.into(), EvalPoint::Average)
            }
            .map_err(|e| CliError::Numeric(e.to_string()))?;
            println!(
                "VE = {:.4} (se {:.4}, 95% CI {:.4} to {:.4}, n = {})",
                estimate.point, estimate.se, estimate.ci_low, estimate.ci_high, estimate.n_used
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
