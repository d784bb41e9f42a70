use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specmatch_cli::commands;
use specmatch_cli::error::{CliError, EXIT_CONFIG};
use specmatch_cli::Common;

#[derive(Parser)]
#[command(name = "specmatch", version, about = "Contrastive spectral shape matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config for the command
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute and cache Laplacian eigenbases
    Precompute(CommonArgs),
    /// Train the feature network
    Train(CommonArgs),
    /// Predict correspondences with a trained checkpoint
    Match(CommonArgs),
    /// Score predictions against ground truth
    Eval(CommonArgs),
    /// Time projection, solver, search and training kernels
    Bench(CommonArgs),
    /// Finite-difference check of every loss pipeline
    Gradcheck(CommonArgs),
    /// Generate a synthetic near-isometric dataset
    Synth(CommonArgs),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SPECMATCH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("SPECMATCH_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (run, args): (fn(&Common) -> Result<(), CliError>, CommonArgs) = match cli.command {
        Command::Precompute(a) => (commands::precompute, a),
        Command::Train(a) => (commands::train_cmd, a),
        Command::Match(a) => (commands::match_cmd, a),
        Command::Eval(a) => (commands::eval_cmd, a),
        Command::Bench(a) => (commands::bench_cmd, a),
        Command::Gradcheck(a) => (commands::gradcheck_cmd, a),
        Command::Synth(a) => (commands::synth_cmd, a),
    };
    let common = Common {
        config: args.config,
        out: args.out,
        seed: args.seed,
    };
    let result = init_threads().and_then(|()| run(&common));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert!(code == EXIT_CONFIG || code > 2);
            ExitCode::from(code as u8)
        }
    }
}
