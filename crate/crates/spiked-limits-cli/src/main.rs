//! Experiment runner for spiked Wigner detection limits.
//!
//! Subcommands reproduce the limiting-theory quantities at desk scale and
//! emit machine-readable outputs: CSV for data, JSON on stdout for the
//! summary (with a config echo and a SHA-256 content hash of the resolved
//! config, so outputs are traceable to their inputs). Exit codes: 0 on
//! success, 2 for domain errors (for example lambda outside the validity
//! range of a formula), 3 for solver or convergence failures.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use spiked_limits::detection;
use spiked_limits::experiments::{
    run_clt, run_overlap, run_strong_detection, run_test_error, ExperimentError,
};
use spiked_limits::sim::{sample_observation, top_eigenvalue, Observation, SimError};
use spiked_limits::threshold::{rho_star, rs_report, spectral_threshold, ThresholdError};

use config::{overlap_method_from_str, parse_prior, ExperimentArgs};

/// Error carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn new(message: String, code: u8) -> Self {
        Self { message, code }
    }

    pub fn domain(message: String) -> Self {
        Self::new(message, 2)
    }

    pub fn solver(message: String) -> Self {
        Self::new(message, 3)
    }

    pub fn io(message: String) -> Self {
        Self::new(message, 1)
    }
}

impl From<ThresholdError> for CliError {
    fn from(e: ThresholdError) -> Self {
        match e {
            ThresholdError::BracketFailure { .. } | ThresholdError::Channel(_) => {
                Self::solver(e.to_string())
            }
            _ => Self::domain(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match &e {
            ExperimentError::Threshold(
                ThresholdError::BracketFailure { .. } | ThresholdError::Channel(_),
            ) => Self::solver(e.to_string()),
            ExperimentError::Threshold(_) => Self::domain(e.to_string()),
            ExperimentError::Sim(SimError::GibbsNotConverged { .. }) => Self::solver(e.to_string()),
            ExperimentError::Sim(SimError::Io(_)) => Self::io(e.to_string()),
            _ => Self::domain(e.to_string()),
        }
    }
}

impl From<detection::DetectionError> for CliError {
    fn from(e: detection::DetectionError) -> Self {
        match e {
            detection::DetectionError::Threshold(inner) => inner.into(),
            _ => Self::domain(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::GibbsNotConverged { .. } => Self::solver(e.to_string()),
            SimError::Io(_) => Self::io(e.to_string()),
            _ => Self::domain(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "spiked-limits",
    about = "Detection and estimation limits of the rank-one spiked Wigner model",
    after_help = "Environment:\n  SPIKED_LIMITS_THREADS  caps the worker pool for replicated experiments."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruction threshold, spectral threshold, and the RS curves on
    /// a lambda grid (CSV columns: lambda,q_star,phi_rs)
    Threshold {
        /// Prior: `rademacher`, `sparse:<rho>`, inline JSON, or a file path
        #[arg(long)]
        prior: String,
        #[arg(long, default_value_t = 0.0)]
        grid_min: f64,
        /// Defaults to twice the spectral threshold
        #[arg(long)]
        grid_max: Option<f64>,
        #[arg(long, default_value_t = 41)]
        grid_points: usize,
        /// CSV output path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also locate the critical sparsity of the sparse Rademacher
        /// family (independent of --prior)
        #[arg(long)]
        rho_star: bool,
    },

    /// Limiting detection curves below the reconstruction threshold
    /// (CSV columns: lambda,mu,mean_null,mean_alt,variance,err_star,kl,tv)
    Curves {
        #[arg(long)]
        prior: String,
        #[arg(long, default_value_t = 0.0)]
        grid_min: f64,
        #[arg(long, default_value_t = 0.9)]
        grid_max: f64,
        #[arg(long, default_value_t = 10)]
        grid_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Empirical law of log L under both hypotheses against N(+-mu, 2mu).
    /// Desk-scale tolerances: means within max(4 SE, 0.1 mu), variance
    /// within 25%, mean gap within 20% of 2 mu
    Clt(ExperimentArgs),

    /// Likelihood-ratio test error against the optimal-test limit
    /// erfc(sqrt(mu)/2); desk-scale tolerance +-0.05 per rate
    TestError(ExperimentArgs),

    /// Sign test of log L / n above the reconstruction threshold
    StrongDetection(ExperimentArgs),

    /// Posterior overlap moments and their size scaling
    Overlap {
        #[command(flatten)]
        args: ExperimentArgs,
        /// `exact` (enumeration) or `gibbs` (two heat-bath chains)
        #[arg(long, default_value = "exact")]
        overlap_method: String,
    },

    /// Sample an observation to a binary file, or summarize one back
    Simulate {
        #[arg(long, required_unless_present = "load")]
        prior: Option<String>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the sampled observation to this file
        #[arg(long, conflicts_with = "load")]
        out: Option<PathBuf>,
        /// Read an observation file instead of sampling
        #[arg(long)]
        load: Option<PathBuf>,
        /// Report the top eigenvalue of Y / sqrt(n) (power iteration)
        #[arg(long)]
        top_eig: bool,
    },
}

fn main() -> ExitCode {
    configure_thread_pool();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn configure_thread_pool() {
    if let Ok(value) = std::env::var("SPIKED_LIMITS_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Prints the standard stdout summary: command, config echo, content hash
/// of the config, and the result payload.
fn emit<C: Serialize, R: Serialize>(
    command: &str,
    config: &C,
    result: &R,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config_value =
        serde_json::to_value(config).map_err(|e| CliError::io(format!("encode config: {e}")))?;
    let config_bytes = serde_json::to_vec(&config_value)
        .map_err(|e| CliError::io(format!("encode config: {e}")))?;
    let summary = serde_json::json!({
        "command": command,
        "config": config_value,
        "config_sha256": sha256_hex(&config_bytes),
        "out": out.map(|p| p.display().to_string()),
        "result": result,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::io(format!("encode summary: {e}")))?
    );
    Ok(())
}

fn write_csv(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn lambda_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if points < 2 || !max.is_finite() || !min.is_finite() || max <= min {
        return Err(CliError::domain(
            "grid needs at least 2 points and max > min".into(),
        ));
    }
    let step = (max - min) / (points - 1) as f64;
    Ok((0..points).map(|i| min + step * i as f64).collect())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Threshold {
            prior,
            grid_min,
            grid_max,
            grid_points,
            out,
            rho_star: with_rho_star,
        } => {
            let prior = parse_prior(&prior)?;
            let spectral = spectral_threshold(&prior)?;
            let grid = lambda_grid(grid_min, grid_max.unwrap_or(2.0 * spectral), grid_points)?;
            let report = rs_report(&prior, &grid)?;
            if let Some(path) = &out {
                write_csv(path, &report.to_csv())?;
            }
            let rho = if with_rho_star {
                Some(rho_star(1e-4)?)
            } else {
                None
            };
            let result = serde_json::json!({
                "report": report,
                "rho_star": rho,
            });
            emit("threshold", &prior, &result, out.as_deref())
        }

        Command::Curves {
            prior,
            grid_min,
            grid_max,
            grid_points,
            out,
        } => {
            let prior = parse_prior(&prior)?;
            let grid = lambda_grid(grid_min, grid_max, grid_points)?;
            let curves = detection::curves(&prior, &grid)?;
            if let Some(path) = &out {
                write_csv(path, &curves.to_csv())?;
            }
            emit("curves", &prior, &curves, out.as_deref())
        }

        Command::Clt(args) => {
            let config = args.resolve()?;
            let result = run_clt(&config)?;
            if let Some(path) = &args.out {
                write_csv(path, &clt_csv(&result))?;
            }
            emit("clt", &config, &result, args.out.as_deref())
        }

        Command::TestError(args) => {
            let config = args.resolve()?;
            let result = run_test_error(&config)?;
            if let Some(path) = &args.out {
                let mut csv = String::from(
                    "n,replicates,type_i,type_ii,total,theory_total,theory_per_type\n",
                );
                csv.push_str(&format!(
                    "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                    result.n,
                    result.replicates,
                    result.type_i,
                    result.type_ii,
                    result.total,
                    result.theory_total,
                    result.theory_per_type
                ));
                write_csv(path, &csv)?;
            }
            emit("test-error", &config, &result, args.out.as_deref())
        }

        Command::StrongDetection(args) => {
            let config = args.resolve()?;
            let result = run_strong_detection(&config)?;
            if let Some(path) = &args.out {
                let mut csv = String::from(
                    "n,replicates,correct_sign_null,correct_sign_alt,mean_normalized_null,mean_normalized_alt\n",
                );
                csv.push_str(&format!(
                    "{},{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                    result.n,
                    result.replicates,
                    result.correct_sign_null,
                    result.correct_sign_alt,
                    result.mean_normalized_null,
                    result.mean_normalized_alt
                ));
                write_csv(path, &csv)?;
            }
            emit("strong-detection", &config, &result, args.out.as_deref())
        }

        Command::Overlap {
            args,
            overlap_method,
        } => {
            let config = args.resolve()?;
            let method = overlap_method_from_str(&overlap_method)?;
            let rows = run_overlap(&config, method)?;
            if let Some(path) = &args.out {
                let mut csv = String::from(
                    "n,replicates,e_r1star_sq,se_r1star_sq,e_r1star_4,e_r12_sq,se_r12_sq,scaled_second,scaled_fourth,nishimori_gap,nishimori_gap_se\n",
                );
                for row in &rows {
                    csv.push_str(&format!(
                        "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                        row.n,
                        row.replicates,
                        row.e_r1star_sq,
                        row.se_r1star_sq,
                        row.e_r1star_4,
                        row.e_r12_sq,
                        row.se_r12_sq,
                        row.scaled_second,
                        row.scaled_fourth,
                        row.nishimori_gap,
                        row.nishimori_gap_se
                    ));
                }
                write_csv(path, &csv)?;
            }
            emit("overlap", &config, &rows, args.out.as_deref())
        }

        Command::Simulate {
            prior,
            n,
            lambda,
            sigma,
            seed,
            out,
            load,
            top_eig,
        } => {
            let (obs, origin): (Observation, &str) = match &load {
                Some(path) => {
                    let file = fs::File::open(path).map_err(|e| {
                        CliError::io(format!("cannot open {}: {e}", path.display()))
                    })?;
                    (
                        Observation::read_from(std::io::BufReader::new(file))?,
                        "loaded",
                    )
                }
                None => {
                    let prior = parse_prior(prior.as_deref().expect("clap enforces presence"))?;
                    let sigma = sigma.unwrap_or(f64::INFINITY);
                    let (obs, _) = sample_observation(&prior, n, lambda, sigma, seed)?;
                    (obs, "sampled")
                }
            };
            if let Some(path) = &out {
                let mut buf = Vec::new();
                obs.write_to(&mut buf)?;
                fs::write(path, &buf)
                    .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
            }
            let top = if top_eig {
                Some(top_eigenvalue(&obs, 2500))
            } else {
                None
            };
            let result = serde_json::json!({
                "origin": origin,
                "n": obs.n(),
                "sigma": if obs.sigma().is_finite() { Some(obs.sigma()) } else { None },
                "lambda_true": obs.lambda_true(),
                "seed": obs.seed(),
                "entries": obs.upper().len(),
                "has_diagonal": obs.diag().is_some(),
                "top_eigenvalue": top,
            });
            let echo = serde_json::json!({
                "n": n, "lambda": lambda, "sigma": sigma, "seed": seed,
            });
            emit("simulate", &echo, &result, out.as_deref())
        }
    }
}

fn clt_csv(result: &spiked_limits::experiments::CltResult) -> String {
    let mut csv = String::from(
        "hypothesis,n,replicates,mean,variance,std_error,theory_mean,theory_variance,z,ks\n",
    );
    csv.push_str(&format!(
        "null,{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
        result.n,
        result.replicates,
        result.null.mean,
        result.null.variance,
        result.null.std_error,
        -result.theory_mu,
        result.theory_variance,
        result.z_null,
        result.ks_null
    ));
    csv.push_str(&format!(
        "alt,{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
        result.n,
        result.replicates,
        result.alt.mean,
        result.alt.variance,
        result.alt.std_error,
        result.theory_mu,
        result.theory_variance,
        result.z_alt,
        result.ks_alt
    ));
    csv
}
