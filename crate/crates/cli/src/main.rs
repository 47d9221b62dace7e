//! Command-line runner for the latent-reliability experiments.
//!
//! Every experiment subcommand takes a TOML config, runs all (learner, seed)
//! cells, and writes byte-deterministic artifacts (run CSVs, figure CSVs,
//! summary JSON) under the output directory. `report` rebuilds the derived
//! artifacts from persisted run logs alone.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 run failure.

use clap::{Args, Parser, Subcommand};
use mtr_core::config::{parse_config, ExperimentConfig, ExperimentKind};
use mtr_core::harness;
use mtr_core::MtrError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mtr-lab",
    about = "Desk-scale experiments in learning under latent feedback reliability",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print per-run progress.
    #[arg(long, global = true, conflicts_with = "quiet")]
    verbose: bool,
    /// Print errors only.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list; overrides the config's seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Biased quadratic descent: stable optimization, wrong fixed point.
    Prop1(RunArgs),
    /// Local versus trajectory-level regime detection, plus the
    /// error-versus-data estimation curve.
    Identifiability(RunArgs),
    /// Trajectory detectability across drift strengths.
    Sweep(RunArgs),
    /// Staged corruption/recovery on the tabular episodic task.
    RecoveryRl(RunArgs),
    /// Staged class-trigger bias on the logistic task.
    RecoverySupervised(RunArgs),
    /// Volatile two-context bandit with a trust-scaled learning rate.
    Bandit(RunArgs),
    /// Regenerate figure CSVs and the summary from persisted run logs.
    Report {
        /// Output directory of a previous experiment run.
        #[arg(long)]
        out: PathBuf,
    },
}

fn expected_kind(command: &Command) -> Option<ExperimentKind> {
    match command {
        Command::Prop1(_) => Some(ExperimentKind::Prop1),
        Command::Identifiability(_) => Some(ExperimentKind::Identifiability),
        Command::Sweep(_) => Some(ExperimentKind::Sweep),
        Command::RecoveryRl(_) => Some(ExperimentKind::RecoveryRl),
        Command::RecoverySupervised(_) => Some(ExperimentKind::RecoverySupervised),
        Command::Bandit(_) => Some(ExperimentKind::Bandit),
        Command::Report { .. } => None,
    }
}

fn load_config(args: &RunArgs, expected: ExperimentKind) -> Result<ExperimentConfig, MtrError> {
    let mut config = parse_config(&args.config)?;
    if config.kind != expected {
        return Err(MtrError::validation(format!(
            "config kind {} does not match the {} subcommand",
            config.kind.label(),
            expected.label()
        )));
    }
    if let Some(seeds) = &args.seeds {
        if seeds.is_empty() {
            return Err(MtrError::validation("--seeds needs at least one seed"));
        }
        config.seeds = seeds.clone();
    }
    if let Some(out) = &args.out {
        config.out_dir = out.display().to_string();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), (u8, MtrError)> {
    match &cli.command {
        Command::Report { out } => {
            let result = harness::report(out).map_err(|e| (2, e))?;
            if !cli.quiet {
                println!(
                    "regenerated {} artifacts under {}",
                    result.artifacts.len(),
                    out.display()
                );
            }
            Ok(())
        }
        command => {
            let args = match command {
                Command::Prop1(a)
                | Command::Identifiability(a)
                | Command::Sweep(a)
                | Command::RecoveryRl(a)
                | Command::RecoverySupervised(a)
                | Command::Bandit(a) => a,
                Command::Report { .. } => unreachable!(),
            };
            let expected = expected_kind(command).expect("run subcommands have a kind");
            let config = load_config(args, expected).map_err(|e| (1, e))?;
            if cli.verbose {
                println!(
                    "running {} with {} learners x {} seeds",
                    config.kind.label(),
                    config.learners.len(),
                    config.seeds.len()
                );
            }
            let result = harness::run_experiment(&config).map_err(|e| (2, e))?;
            let out_dir = PathBuf::from(&config.out_dir);
            harness::write_experiment(&result, &out_dir).map_err(|e| (2, e))?;
            if cli.verbose {
                for (meta, _) in &result.runs {
                    match &meta.abort {
                        Some(a) => println!(
                            "  {} seed {}: aborted at step {} ({})",
                            meta.label, meta.seed, a.step, a.reason
                        ),
                        None => println!("  {} seed {}: ok", meta.label, meta.seed),
                    }
                }
            }
            if !cli.quiet {
                println!(
                    "wrote {} artifacts under {}",
                    result.artifacts.len(),
                    out_dir.display()
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}
