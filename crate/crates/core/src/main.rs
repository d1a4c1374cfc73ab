use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use donor_nmr::cli::{describe, parse_config, run, ExitStatus, RunConfig, RunOptions};

/// Simulate pulsed NMR on ensembles of donor nuclear spins.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the seed of the configuration.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,

    /// Write results here instead of the configured directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Size of the worker pool.
    #[arg(long, global = true)]
    workers: Option<NonZeroUsize>,

    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocol and write result files.
    Run { config: PathBuf },
    /// Print the resolved pulse timeline without running it.
    Describe { config: PathBuf },
    /// Check a configuration; with --canonical, print its normalized form.
    Validate {
        config: PathBuf,
        #[arg(long)]
        canonical: bool,
    },
}

fn load(path: &Path, cli: &Cli) -> Result<RunConfig, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(ExitStatus::ConfigError.code() as u8)
    })?;
    let mut cfg = parse_config(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(ExitStatus::ConfigError.code() as u8)
    })?;
    if let Some(seed) = cli.seed {
        cfg.execution.seed = seed;
    }
    if cli.workers.is_some() {
        cfg.execution.workers = cli.workers;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Run { config } | Command::Describe { config } | Command::Validate { config, .. } => config,
    };
    let cfg = match load(path, &cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match &cli.command {
        Command::Validate { canonical, .. } => {
            if *canonical {
                print!("{}", cfg.to_toml());
            } else if !cli.quiet {
                println!("{}: ok ({})", path.display(), cfg.protocol.name());
            }
            ExitCode::SUCCESS
        }
        Command::Describe { .. } => {
            print!("{}", describe(&cfg));
            ExitCode::SUCCESS
        }
        Command::Run { .. } => {
            let opts = RunOptions {
                out_dir: cli.out_dir.clone(),
            };
            match run(&cfg, &opts) {
                Ok(outcome) => {
                    for e in &outcome.bundle.errors {
                        eprintln!("error: {e}");
                    }
                    if !cli.quiet {
                        for f in &outcome.files {
                            println!("{}", f.display());
                        }
                    }
                    ExitCode::from(outcome.bundle.status.code() as u8)
                }
                Err(e) => {
                    eprintln!("error: writing results: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
