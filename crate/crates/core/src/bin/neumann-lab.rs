use std::path::PathBuf;

use clap::Parser;

/// Solvers, lemma checks and studies for Neumann-type boundary value problems.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// One of: solve, vv-rate, cont-dep, lemma-check, holder, probe.
    command: String,
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let args = Args::parse();
    let code = neumann_lab::cli::execute(&args.command, &args.config, args.seed, args.out.as_deref());
    std::process::exit(code);
}
