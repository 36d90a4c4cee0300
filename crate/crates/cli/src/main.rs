use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ppde_cli::{run, CliError, Command, RunOptions, EXIT_OK};

#[derive(Parser)]
#[command(name = "ppde", version, about = "Value functions of controlled path-dependent diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Value at each query point of the config.
    Solve(Flags),
    /// Sup gaps of a coefficient sequence over a compact test set.
    Stability(Flags),
    /// Ratios |v(a) - v(b)| / d(a, b) over seeded pairs.
    Lipschitz(Flags),
    /// Sampling checks of the standing conditions on a field.
    Validate(Flags),
}

#[derive(clap::Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the config value, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::Solve(f) => (Command::Solve, f),
        Sub::Stability(f) => (Command::Stability, f),
        Sub::Lipschitz(f) => (Command::Lipschitz, f),
        Sub::Validate(f) => (Command::Validate, f),
    };
    let opts = RunOptions {
        config: flags.config,
        out: flags.out,
        seed: flags.seed,
        threads: flags.threads,
    };
    match run(command, &opts) {
        Ok(summary) => {
            println!("{}", summary.dir.display());
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(e: &CliError) {
    eprintln!("error: {e}");
    if let CliError::Core(ppde_core::Error::Validation { condition, .. }) = e {
        let key = serde_json::to_value(condition).ok();
        eprintln!("condition: {}", key.as_ref().and_then(|k| k.as_str()).unwrap_or("unknown"));
    }
}
