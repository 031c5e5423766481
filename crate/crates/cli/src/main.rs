//! `nmq`: coefficient tables, control synthesis, trajectories, ensembles and
//! figure presets from one TOML configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{CliError, CliResult};
use config::{parse_config, ConfigError, Mode, Preset, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "nmq",
    version,
    about = "Non-Markovian qubit decoherence control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file (all keys optional).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// fig1, fig2a, fig2b, fig2c or fig2d.
    #[arg(long, global = true)]
    preset: Option<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Ensemble size.
    #[arg(long, global = true)]
    trajectories: Option<usize>,

    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Nonmarkovian,
    Markovian,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate Δ(t), γ(t), Γ1, Γ2.
    Coeffs,
    /// Solve the optimal control problem.
    Control,
    /// One stochastic trajectory.
    Simulate,
    /// Ensemble statistics.
    Ensemble,
    /// Deterministic temperature scan.
    Fig1,
    /// Controlled / uncontrolled / Markovian comparison panels.
    Fig2,
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(name) = &cli.preset {
        let preset = Preset::parse(name).ok_or_else(|| ConfigError::Invalid {
            field: "preset".into(),
            detail: format!("unknown preset `{name}`"),
        })?;
        cfg.apply_preset(preset);
    }
    if let Some(seed) = cli.seed {
        cfg.integrator.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = cli.trajectories {
        cfg.ensemble_size = n;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = match mode {
            ModeArg::Nonmarkovian => Mode::NonMarkovian,
            ModeArg::Markovian => Mode::Markovian,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult {
    let cfg = load(cli)?;
    match cli.command {
        Command::Coeffs => commands::cmd_coeffs(&cfg),
        Command::Control => commands::cmd_control(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::Ensemble => commands::cmd_ensemble(&cfg),
        Command::Fig1 => commands::cmd_fig1(&cfg),
        Command::Fig2 => commands::cmd_fig2(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
