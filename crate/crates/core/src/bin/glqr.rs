use clap::{Parser, Subcommand, ValueEnum};
use glqr::experiment::{self, ReportFormat};
use glqr::Error;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "glqr", version, about = "Backward reconstruction studies for a semilinear diffusion equation")]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format for `mise-study`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one replicate of noisy observations and write them out.
    Generate {
        /// Index into the config's counts list.
        #[arg(long, default_value_t = 0)]
        cell: usize,
        /// Index into the config's eps list.
        #[arg(long, default_value_t = 0)]
        eps_index: usize,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Forward-solve the truth recipe and write the trajectory.
    Forward,
    /// Reconstruct the final state from one replicate of observations.
    Reconstruct {
        #[arg(long, default_value_t = 0)]
        cell: usize,
        #[arg(long, default_value_t = 0)]
        eps_index: usize,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Run the backward solver for one replicate and write the trajectory.
    Backward {
        #[arg(long, default_value_t = 0)]
        cell: usize,
        #[arg(long, default_value_t = 0)]
        eps_index: usize,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Monte Carlo MISE study over the whole (counts, eps) grid.
    MiseStudy,
    /// Estimator-only convergence table.
    RatesTable,
}

fn load_config(cli: &Cli) -> Result<experiment::ExperimentConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::invalid("--config is required"))?;
    let mut cfg = experiment::parse_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_path(cli: &Cli) -> Result<&PathBuf, Error> {
    cli.out.as_ref().ok_or_else(|| Error::invalid("--out is required"))
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate { cell, eps_index, replicate } => {
            let artifacts = experiment::run_single_cell(&cfg, *cell, *eps_index, *replicate)?;
            let mut text = artifacts.observations.to_text();
            text.push_str("coefficient:\n");
            text.push_str(&artifacts.lambda_eps.to_text());
            write_text(out_path(cli)?, &text)
        }
        Command::Forward => {
            let truth = experiment::run::TruthData::prepare(&cfg)?;
            write_text(out_path(cli)?, &truth.trajectory.to_text())
        }
        Command::Reconstruct { cell, eps_index, replicate } => {
            let artifacts = experiment::run_single_cell(&cfg, *cell, *eps_index, *replicate)?;
            write_text(out_path(cli)?, &artifacts.h_hat.to_text())
        }
        Command::Backward { cell, eps_index, replicate } => {
            let artifacts = experiment::run_single_cell(&cfg, *cell, *eps_index, *replicate)?;
            write_text(out_path(cli)?, &artifacts.reconstruction.to_text())
        }
        Command::MiseStudy => {
            let start = Instant::now();
            let report = experiment::run_mise_study(&cfg)?;
            let format = match cli.format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            experiment::emit_report(&report, format, out_path(cli)?)?;
            // wall time goes to stderr, never into the byte-stable report
            eprintln!("mise-study finished in {:.2?}", start.elapsed());
            Ok(())
        }
        Command::RatesTable => {
            let table = experiment::run_convergence_table(&cfg)?;
            write_text(out_path(cli)?, &table)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
