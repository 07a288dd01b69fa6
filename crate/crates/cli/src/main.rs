use std::path::PathBuf;

use clap::Parser;

use opkernel_cli::{run_path, Overrides};

/// Runs one opkernel job document and writes its result document.
#[derive(Debug, Parser)]
#[command(name = "opkernel", version)]
struct Args {
    /// Job document, or a previous result document to replay.
    #[arg(long)]
    job: PathBuf,
    /// Result path; overrides the job's output_path. Stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for stochastic commands; overrides the job's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// PSD and order tolerance; overrides the job's tol.
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
}

fn main() {
    let args = Args::parse();
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        tol: args.tol,
    };
    std::process::exit(run_path(&args.job, &overrides));
}
