mod align;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dyadnet", version, about = "Joint-dyad network model: generate, fit, cross-validate, sample, reconstruct, evaluate")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice of the run
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "DYADNET_THREADS")]
    pub threads: Option<usize>,
    /// Directory receiving the outputs
    #[arg(short = 'o', long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    pub quiet: bool,
    /// Print the main table as CSV on stdout and write no files
    #[arg(long, global = true)]
    pub csv_only: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample planted benchmark networks
    Generate(commands::GenerateArgs),
    /// Fit the model to an edge list
    Fit(commands::FitArgs),
    /// Cross-validate edge prediction
    Cv(commands::CvArgs),
    /// Sample networks from fitted parameters
    Sample(commands::SampleArgs),
    /// Score every dyad of a network under fitted parameters
    Reconstruct(commands::ReconstructArgs),
    /// Community recovery, modularity and summary statistics
    #[command(subcommand)]
    Eval(commands::EvalCommand),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.common.quiet {
        "warn"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();

    if let Some(t) = cli.common.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
