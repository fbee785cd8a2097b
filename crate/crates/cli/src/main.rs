use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gradflow_cli::config::{RunConfig, TableauSource};
use gradflow_cli::experiments::{accuracy_space, accuracy_time, check_tableau, load_tableau, simulate};
use gradflow_cli::Result;

#[derive(Parser)]
#[command(name = "gradflow", version, about = "DG solver for fourth-order gradient flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; unspecified keys keep their defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set time.tau=0.5`. Repeatable.
    #[arg(short, long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for s in &self.set {
            cfg.apply_override(s)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Spatial convergence study over `sweep.cells`.
    AccuracySpace(RunArgs),
    /// Temporal convergence study over `sweep.tau`.
    AccuracyTime(RunArgs),
    /// Pattern simulation with energy history and snapshots.
    Simulate(RunArgs),
    /// Algebraic-stability report for a builtin tableau or a coefficients file.
    CheckTableau {
        /// Builtin name (qz2, crouzeix3, gl4, ...) or a path to a coefficients file.
        tableau: String,
    },
}

fn run(cli: Cli) -> Result<()> {
    let with_config = |args: &RunArgs| -> Result<Option<RunConfig>> {
        let cfg = args.load()?;
        if args.print_config {
            print!("{cfg}");
            return Ok(None);
        }
        Ok(Some(cfg))
    };
    match cli.command {
        Command::AccuracySpace(args) => {
            if let Some(cfg) = with_config(&args)? {
                print!("{}", accuracy_space(&cfg)?);
            }
        }
        Command::AccuracyTime(args) => {
            if let Some(cfg) = with_config(&args)? {
                print!("{}", accuracy_time(&cfg)?);
            }
        }
        Command::Simulate(args) => {
            if let Some(cfg) = with_config(&args)? {
                let summary = simulate(&cfg)?;
                let first = &summary.records[0];
                let last = summary.records.last().unwrap_or(first);
                println!("steps: {}", last.step);
                println!("final time: {}", last.t);
                println!("energy: {:.16e} -> {:.16e}", first.energy, last.energy);
                println!("shifted energy: {:.16e} -> {:.16e}", first.shifted, last.shifted);
                println!("max relative energy increase: {:e}", summary.max_energy_increase);
                println!("max relative bound violation: {:e}", summary.max_bound_violation);
                println!("energy stable: {}", summary.energy_stable());
                for p in &summary.snapshots {
                    println!("snapshot: {}", p.display());
                }
            }
        }
        Command::CheckTableau { tableau } => {
            let source = if gradflow_core::rk::BUILTIN_NAMES.contains(&tableau.as_str()) {
                TableauSource::Builtin(tableau)
            } else {
                TableauSource::File(PathBuf::from(tableau))
            };
            print!("{}", check_tableau(load_tableau(&source)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
