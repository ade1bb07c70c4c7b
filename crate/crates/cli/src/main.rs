//! `mseq`: data generation, training, evaluation, property checks and plots.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mseq_core::Error;

#[derive(Parser, Debug)]
#[command(name = "mseq", version, about = "Scale-equivariant networks on the dyadic scale-translation semigroup")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every experiment command. Flags override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Plain `key = value` config file; `#` starts a comment.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output (or run) directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// gaussian, dilation, closing, identity, erosion or opening.
    #[arg(long)]
    pub lifting: Option<String>,
    /// A lifting name or `cnn`.
    #[arg(long)]
    pub model: Option<String>,
    /// classify or segment.
    #[arg(long)]
    pub task: Option<String>,
    /// Segmentation: ranges `lo:hi` with `lo·hi = 1` (or `1`). Classification: scale factors.
    #[arg(long, value_name = "LIST")]
    pub scales: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes train, validation and test shape images with label masks.
    GenShapes(Overrides),
    /// Renders MNIST digits at the training factor and every test factor.
    GenMnistScales(Overrides),
    /// Trains one model and saves `model.ckpt` in the run directory.
    Train {
        #[command(flatten)]
        o: Overrides,
        /// Continue from the run directory's checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluates a trained run directory on test scales.
    Eval {
        /// Run directory (defaults to --out).
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Runs every property suite and prints a pass/fail table.
    Equicheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Renders SVG charts and mask comparisons from a run or comparison directory.
    Plot { dir: PathBuf },
    /// Trains and evaluates every configured model for every seed.
    Compare(Overrides),
}

fn run(cli: Cli) -> mseq_core::Result<ExitCode> {
    match cli.command {
        Command::GenShapes(o) => commands::gen_shapes(&o),
        Command::GenMnistScales(o) => commands::gen_mnist_scales(&o),
        Command::Train { o, resume } => commands::train(&o, resume),
        Command::Eval { run_dir, o } => commands::eval(run_dir, &o),
        Command::Equicheck { seed } => return Ok(commands::equicheck(seed)),
        Command::Plot { dir } => commands::plot(&dir),
        Command::Compare(o) => commands::compare(&o),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 1 } else { 2 })
        }
    }
}
