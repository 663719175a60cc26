//! `adapt`: runs adaptive-parameterization experiments from config files.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use experiments::report::{overview, read_summaries, OUTPUT_ENV};
use experiments::{parse_config, run_dir, ExperimentConfig, RunRecord};

#[derive(Parser)]
#[command(name = "adapt", version, about = "Adaptive parameterization experiments")]
struct Cli {
    /// Root directory for run outputs; each config writes to `<root>/<name>`.
    #[arg(long, global = true, env = OUTPUT_ENV, default_value = "runs")]
    output: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the models of a config and write their reports.
    Run { config: PathBuf },
    /// Train the parameter-matched ablation grid around a language-model config.
    Grid { config: PathBuf },
    /// Train LSTM and aLSTM at randomly perturbed dropout rates.
    Sweep {
        config: PathBuf,
        /// Samples per model; defaults to `[train] samples`.
        #[arg(long)]
        n: Option<usize>,
        /// Half-width of the rate box; defaults to `[train] radius`.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Print one line per run found in a run directory.
    Report { run_dir: PathBuf },
}

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    parse_config(path).with_context(|| format!("reading config {}", path.display()))
}

/// Prints one line per run. Write errors such as a closed pipe are ignored:
/// the report files are already on disk.
fn print_runs(records: &[RunRecord], dir: &Path) {
    let mut out = std::io::stdout().lock();
    for r in records {
        let scores: Vec<String> = r.scores.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        let status = if r.converged { "converged" } else { "diverged" };
        let _ = writeln!(out, "{} params={} {status} {}", r.run_id, r.params, scores.join(" "));
    }
    let _ = writeln!(out, "wrote {} runs to {}", records.len(), dir.display());
}

fn main_inner(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let dir = run_dir(&cli.output, &cfg);
            print_runs(&experiments::run_to(&cfg, &dir)?, &dir);
        }
        Command::Grid { config } => {
            let cfg = load(&config)?;
            let dir = run_dir(&cli.output, &cfg);
            print_runs(&experiments::grid_to(&cfg, &dir)?, &dir);
        }
        Command::Sweep { config, n, radius } => {
            let cfg = load(&config)?;
            let dir = run_dir(&cli.output, &cfg);
            let n = n.unwrap_or(cfg.train.samples);
            let radius = radius.unwrap_or(cfg.train.radius);
            print_runs(&experiments::sweep_to(&cfg, n, radius, &dir)?, &dir);
        }
        Command::Report { run_dir } => {
            let rows = read_summaries(&run_dir)?;
            anyhow::ensure!(!rows.is_empty(), "no run summaries in {}", run_dir.display());
            let _ = std::io::stdout().lock().write_all(overview(&rows).as_bytes());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
