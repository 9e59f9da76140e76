use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cqw_cli::error::ConfigError;
use cqw_cli::{commands, parse_config, CliError};

#[derive(Parser)]
#[command(name = "cqw", version, about = "Quantum walks over curved 2+1d spacetimes")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// JSON run configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides output.directory from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker thread count; 0 or absent means all cores. CQW_THREADS overrides.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Suppress the normal summary lines on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Verb {
    /// Compile the coins for the configured metric and dump them as coins.json.
    Compile,
    /// Evolve the walk, writing observables.csv and snapshot files.
    Run,
    /// Run a convergence study against the reference integrator.
    Study,
    /// Integrate the continuum equation and dump the final field.
    Oracle,
    /// Tabulate one-step eigenphases against the exact dispersion relation.
    Dispersion,
}

fn thread_count(cli_threads: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("CQW_THREADS") {
        Ok(v) => {
            let n = v.trim().parse::<usize>().map_err(|_| {
                ConfigError::new(
                    "/",
                    format!("CQW_THREADS must be a non-negative integer, got `{v}`"),
                )
            })?;
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(cli_threads),
        Err(e) => Err(ConfigError::new("/", format!("CQW_THREADS: {e}")).into()),
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    let path = cli
        .config
        .ok_or_else(|| ConfigError::new("/", "--config PATH is required"))?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Config(ConfigError::new(
            "/",
            format!("cannot read {}: {e}", path.display()),
        ))
    })?;
    let cfg = parse_config(&text)?;
    let out_dir = cli
        .out
        .or_else(|| cfg.directory.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    match cli.verb {
        Verb::Compile => commands::compile(&cfg, &out_dir, cli.quiet),
        Verb::Run => commands::run(&cfg, &out_dir, cli.quiet),
        Verb::Study => commands::study(&cfg, &out_dir, cli.quiet),
        Verb::Oracle => commands::oracle(&cfg, &out_dir, cli.quiet),
        Verb::Dispersion => commands::dispersion(&cfg, &out_dir, cli.quiet),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
