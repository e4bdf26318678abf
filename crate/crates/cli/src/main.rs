use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trustprobe_cli::{cmd_attack, cmd_eval, cmd_profile, cmd_synth, cmd_train, init_threads, load_config, CliError, Overrides, Run};

/// Trustworthiness evaluation of emotion classifiers on frozen speech embeddings.
#[derive(Parser)]
#[command(name = "trustprobe", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured fold count.
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus under <out>/data.
    Synth,
    /// Train one head per fold and pool the test predictions.
    Train,
    /// Attack each fold's head on its test items.
    Attack,
    /// Measure performance, privacy, safety, fairness and FLOPs.
    Eval,
    /// Render eval reports as a profile document and radar chart.
    Profile {
        /// Eval reports to compare; defaults to this run's.
        reports: Vec<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<String, CliError> {
    init_threads()?;
    let loaded = match &cli.config {
        Some(path) => Some(load_config(path)?),
        None if matches!(cli.command, Command::Profile { .. }) => None,
        None => return Err(CliError::Usage("--config is required for this command".into())),
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        folds: cli.folds,
    };
    let run = Run::new(loaded, &overrides)?;
    match &cli.command {
        Command::Synth => cmd_synth(&run),
        Command::Train => cmd_train(&run),
        Command::Attack => cmd_attack(&run),
        Command::Eval => cmd_eval(&run),
        Command::Profile { reports } => cmd_profile(&run, reports),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
