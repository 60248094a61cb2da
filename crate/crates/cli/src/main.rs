//! Command-line surface of the melody-fingerprint engine: corpus
//! synthesis, feature extraction, aligned-fragment extraction, index
//! building, querying, evaluation and benchmarking.

mod commands;
mod config;
mod db;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Exit code for a successful run with an empty result set.
pub const EXIT_EMPTY: i32 = 2;

#[derive(Parser)]
#[command(name = "humdex", version, about = "Melody-fingerprint song search")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every deterministic component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker-thread cap; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(commands::synth::Args),
    /// Extract features and fingerprints for one audio file.
    Features(commands::features::Args),
    /// Extract groups of aligned fragments from an original and covers.
    Align(commands::align::Args),
    /// Build fingerprint indexes over a directory of songs.
    Index(commands::index::Args),
    /// Search the database with a query recording.
    Query(commands::query::Args),
    /// Compute top-n hit rates against a truth table.
    Eval(commands::eval::Args),
    /// Measure two-step search timings.
    Bench(commands::bench::Args),
    /// Run quick internal consistency checks.
    Selftest,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    let mut config = config::RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.run.threads = threads;
    }
    if config.run.threads > 0 {
        // Ignore failure when a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.threads)
            .build_global();
    }
    match cli.command {
        Command::Synth(args) => commands::synth::run(args, &config),
        Command::Features(args) => commands::features::run(args, &config),
        Command::Align(args) => commands::align::run(args, &config),
        Command::Index(args) => commands::index::run(args, &config),
        Command::Query(args) => commands::query::run(args, &config),
        Command::Eval(args) => commands::eval::run(args, &config),
        Command::Bench(args) => commands::bench::run(args, &config),
        Command::Selftest => commands::selftest::run(&config),
    }
}
