use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spm_cli::{cmd_oracle, cmd_solve, cmd_sweep, cmd_verify, CliError, ExperimentConfig, Outcome};

#[derive(Parser)]
#[command(name = "spm", version, about = "Optimal and subspace-constrained single-shot estimation with Gaussian states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the constrained problem for every configured basis.
    Solve(Common),
    /// Relative MSL of every basis over a grid of prior variances, as CSV.
    Sweep(Common),
    /// Global optimum on a truncated Fock space.
    Oracle(Common),
    /// Stationarity, orthogonality, excess-MSL and inequality checks.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to `output` in the config, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides SPM_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SPM_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("SPM_WORKERS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(command: Command) -> Result<Outcome, CliError> {
    let (common, exec): (&Common, fn(&ExperimentConfig) -> Result<Outcome, CliError>) = match &command {
        Command::Solve(c) => (c, cmd_solve),
        Command::Sweep(c) => (c, cmd_sweep),
        Command::Oracle(c) => (c, cmd_oracle),
        Command::Verify(c) => (c, cmd_verify),
    };
    if let Some(n) = workers(common.workers)? {
        if n == 0 {
            return Err(CliError::Config("worker count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    let mut config = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let outcome = exec(&config)?;
    match common.out.as_ref().or(config.output.as_ref()) {
        Some(path) => std::fs::write(path, &outcome.body)?,
        None => print!("{}", outcome.body),
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let failure = match run(cli.command) {
        Ok(outcome) => outcome.failure,
        Err(e) => Some(e),
    };
    match failure {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
