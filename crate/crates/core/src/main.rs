use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slrlab::commands::{self, Outcome};
use slrlab::{Result, TheoremCase};

#[derive(Parser)]
#[command(
    name = "slrlab",
    version,
    about = "SGD with a multiplicative stochastic learning rate"
)]
#[command(
    after_help = "The SLRLAB_SEED environment variable overrides master_seed.\nExit codes: 0 success, 1 validation failure, 2 runtime error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check step-size, factor and rate-case conditions for a config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every seed of a config and write trajectory CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-seed Welch/Bonferroni comparison of two configs.
    Compare {
        #[arg(long = "config-a")]
        config_a: PathBuf,
        #[arg(long = "config-b")]
        config_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rate envelope of one case and the little-o trend diagnostic.
    Envelope {
        #[arg(long)]
        config: PathBuf,
        /// case11a, case11b, case12 or deterministic.
        #[arg(long)]
        case: TheoremCase,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot the trajectories in a run directory as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Validate { config } => commands::validate(&commands::load_config(&config)?),
        Command::Run { config, out } => commands::run_command(&commands::load_config(&config)?, &out),
        Command::Compare {
            config_a,
            config_b,
            out,
        } => {
            let a = commands::load_config(&config_a)?;
            let b = commands::load_config(&config_b)?;
            commands::compare_command(&a, &b, &out)
        }
        Command::Envelope { config, case, out } => {
            commands::envelope_command(&commands::load_config(&config)?, case, &out)
        }
        Command::Plot { input, out } => commands::plot_command(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
