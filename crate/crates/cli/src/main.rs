//! Command-line driver for the bi-fidelity collocation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bifi_core::config::RunConfig;
use bifi_core::orchestrate::{
    cmd_convergence_study, cmd_energy_study, cmd_evaluate, cmd_offline, cmd_online,
};
use bifi_core::persist::save_snapshot;
use bifi_core::samples::{draw_samples, SampleStream};
use bifi_core::{Error, Result};

#[derive(Parser)]
#[command(name = "bifi", version, about = "Bi-fidelity stochastic collocation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to a TOML run configuration; defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the Stokes number epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        if let Some(epsilon) = self.epsilon {
            config.model.epsilon = epsilon;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Training stage: candidate sweep, node selection, high-fidelity runs.
    Offline {
        #[command(flatten)]
        common: Common,
    },
    /// Query stage: bi-fidelity reconstruction for given parameter vectors.
    Online {
        #[command(flatten)]
        common: Common,
        /// JSON file containing an array of parameter vectors.
        #[arg(long, conflicts_with = "n_queries")]
        queries: Option<PathBuf>,
        /// Draw this many queries from the held-out evaluation stream.
        #[arg(long, default_value_t = 1)]
        n_queries: usize,
    },
    /// Held-out error evaluation; writes errors.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Perturbation-energy decay study; writes energy.csv.
    EnergyStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Error decay over the configured node-count sweep; writes
    /// convergence.csv.
    ConvergenceStudy {
        #[command(flatten)]
        common: Common,
    },
}

fn load_queries(
    config: &RunConfig,
    queries: &Option<PathBuf>,
    n_queries: usize,
) -> Result<Vec<Vec<f64>>> {
    if let Some(path) = queries {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())));
    }
    let initial = bifi_core::initial::InitialData::new(config.initial.clone(), &config.hi_grid()?)?;
    let dim = initial.z_dim(&config.model);
    if dim == 0 {
        return Ok(vec![Vec::new(); n_queries]);
    }
    Ok(draw_samples(n_queries, dim, config.distribution, config.seed, SampleStream::Evaluation)?
        .into_iter()
        .map(|s| s.z)
        .collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Offline { common } => {
            let config = common.load()?;
            let summary = cmd_offline(&config)?;
            println!(
                "offline complete: {} candidates, {} nodes selected (pivots {:?})",
                summary.lo_completed, summary.hi_completed, summary.pivots
            );
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            println!("manifest: {}", summary.manifest_path.display());
        }
        Command::Online { common, queries, n_queries } => {
            let config = common.load()?;
            let z_list = load_queries(&config, &queries, n_queries)?;
            let result = cmd_online(&config, &z_list)?;
            let dir = config.output_dir.join("online");
            for (i, snap) in result.snapshots.iter().enumerate() {
                save_snapshot(&dir, &format!("query_{i:04}"), snap, 0.0, None)?;
            }
            println!(
                "online complete: {} queries in {:.3} s ({:.3} s in low-fidelity solves)",
                result.snapshots.len(),
                result.total_wall_seconds,
                result.lo_wall_seconds
            );
            println!("snapshots: {}", dir.display());
        }
        Command::Evaluate { common } => {
            let config = common.load()?;
            let rows = cmd_evaluate(&config)?;
            for row in &rows {
                println!(
                    "K={} {}: err_bi={:.3e} err_lo={:.3e} ratio={:.3e}",
                    row.k, row.component, row.err_bi, row.err_lo, row.err_ratio
                );
            }
            println!("wrote {}", config.output_dir.join("errors.csv").display());
        }
        Command::EnergyStudy { common } => {
            let config = common.load()?;
            let report = cmd_energy_study(&config)?;
            match (report.lambda_fit, report.r_squared) {
                (Some(lambda), Some(r2)) => {
                    println!(
                        "energy study: {} checkpoints, monotone={}, lambda_fit={lambda:.6e}, R2={r2:.4}",
                        report.times.len(),
                        report.monotone
                    );
                }
                _ => println!(
                    "energy study: {} checkpoints, monotone={}, no decay fit",
                    report.times.len(),
                    report.monotone
                ),
            }
            println!("wrote {}", config.output_dir.join("energy.csv").display());
        }
        Command::ConvergenceStudy { common } => {
            let config = common.load()?;
            let rows = cmd_convergence_study(&config)?;
            for row in &rows {
                println!(
                    "K={} {}: err_bi={:.3e} err_lo={:.3e}",
                    row.k, row.component, row.err_bi, row.err_lo
                );
            }
            println!("wrote {}", config.output_dir.join("convergence.csv").display());
        }
    }
    Ok(())
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        Error::RankDeficient { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
