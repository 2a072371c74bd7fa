mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Ctx, FitArgs};
use config::{load_config, ConfigError};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(weyllab_core::Error),
    Io(std::io::Error),
    Json(serde_json::Error),
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(ConfigError::Constraint { .. }) => "config_constraint",
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Usage(_) => "usage",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Core(e) => e.fmt(f),
            CliError::Io(e) => e.fmt(f),
            CliError::Json(e) => e.fmt(f),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
impl From<weyllab_core::Error> for CliError {
    fn from(e: weyllab_core::Error) -> Self {
        CliError::Core(e)
    }
}
impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Json(e)
    }
}

/// Weyl-law remainder experiments for `-Δ + V` on flat tori.
#[derive(Parser)]
#[command(name = "weyllab", version)]
struct Cli {
    /// Experiment configuration (.toml or .json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lambda_grid.max=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `output.path`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print errors as a JSON object on stdout.
    #[arg(long, global = true)]
    error_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lattice points in the closed ball of a radius.
    Count {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        radius: f64,
    },
    /// Shell multiplicities `#{|j|² = m}` for `m <= max-norm-sq`.
    Shells {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        max_norm_sq: u64,
    },
    /// Dyadic annulus census; every non-empty bucket unless `--ell/--m` are given.
    Annulus {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long, requires = "m")]
        ell: Option<u32>,
        #[arg(long, requires = "ell")]
        m: Option<u32>,
    },
    /// Largest number of sphere lattice points in a cap.
    Caps {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        lambda_sq: u64,
        #[arg(long)]
        radius: f64,
    },
    /// Fourier table of the potential and its envelope constants.
    Fourier {
        #[arg(long)]
        xi_max: Option<f64>,
    },
    /// Assemble the truncated Hamiltonian and summarise it.
    Assemble,
    /// Eigenvalues of the truncated Hamiltonian (cached).
    Eigs,
    /// Pointwise Weyl remainders over the λ grid and x points.
    Weyl {
        /// indicator | mollified | both
        #[arg(long, default_value = "both")]
        mode: String,
        /// Report the perturbation difference instead of the remainder.
        #[arg(long)]
        difference: bool,
    },
    /// Finite-dimensional Duhamel residuals; exit status 2 above tolerance.
    DuhamelCheck {
        /// Defaults to `lambda_grid.max`.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// First-order perturbation sum with tail bounds.
    R1,
    /// Positive lower sum at the singularity.
    R1Lower {
        /// model | potential
        #[arg(long, default_value = "model")]
        table: String,
    },
    /// Second-order perturbation sum.
    R2,
    /// Log–log exponent fit of two CSV columns.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "lambda")]
        x_column: String,
        #[arg(long, default_value = "value")]
        y_column: String,
        /// `lo,hi`
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Band, rough-bound and heat-kernel ratio reports.
    Diagnose,
    /// Eigensolve, perturbation difference over the λ grid, and exponent fit.
    Report,
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--window expects lo,hi, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let config = match &cli.config {
        Some(p) => Some(load_config(p, &cli.set)?),
        None if !cli.set.is_empty() => return Err(CliError::Usage("--set needs --config".into())),
        None => None,
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.as_ref().map(|c| c.output.path.clone()))
        .unwrap_or_else(|| PathBuf::from("weyllab-out"));
    let ctx = Ctx {
        out_dir,
        config,
        config_path: cli.config.clone(),
    };
    match cli.command {
        Command::Count { dim, radius } => commands::count(&ctx, dim, radius),
        Command::Shells { dim, max_norm_sq } => commands::shells(&ctx, dim, max_norm_sq),
        Command::Annulus { dim, lambda, ell, m } => commands::annulus(&ctx, dim, lambda, ell.zip(m)),
        Command::Caps { dim, lambda_sq, radius } => commands::caps(&ctx, dim, lambda_sq, radius),
        Command::Fourier { xi_max } => commands::fourier(&ctx, xi_max),
        Command::Assemble => commands::assemble_cmd(&ctx),
        Command::Eigs => commands::eigs(&ctx),
        Command::Weyl { mode, difference } => commands::weyl(&ctx, &mode, difference),
        Command::DuhamelCheck { lambda } => commands::duhamel_check(&ctx, lambda),
        Command::R1 => commands::r1(&ctx),
        Command::R1Lower { table } => commands::r1_lower(&ctx, &table),
        Command::R2 => commands::r2(&ctx),
        Command::Fit {
            input,
            x_column,
            y_column,
            window,
            dim,
            eta,
        } => {
            let window = window.as_deref().map(parse_window).transpose()?;
            commands::fit(
                &ctx,
                &FitArgs {
                    input,
                    x_column,
                    y_column,
                    window,
                    dim,
                    eta,
                },
            )
        }
        Command::Diagnose => commands::diagnose(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let error_json = cli.error_json;
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            if error_json {
                println!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
    }
}
