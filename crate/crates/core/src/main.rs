use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use byrd_nafl::cli;

#[derive(Parser)]
#[command(name = "byrd-nafl", version, about = "Byzantine-resilient federated learning simulator")]
struct Args {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every cell of the config's matrix.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run the self-check suites.
    Verify {
        /// all, gradients, nesterov, aggregation, attacks, resilience or theorem
        #[arg(default_value = "all")]
        suite: String,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match args.command {
        Command::Run { config, out } => cli::cmd_run(&config, &out, args.seed),
        Command::Grid { config, out, jobs } => cli::cmd_grid(&config, &out, args.seed, jobs),
        Command::Verify { suite } => cli::cmd_verify(&suite),
    };
    ExitCode::from(code as u8)
}
