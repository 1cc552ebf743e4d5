use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod manifest;

use config::LoadedConfig;
use error::{CliError, CliResult};
use manifest::Run;

#[derive(Parser)]
#[command(name = "seiscox", version, about = "Induced-seismicity rate modelling with a latent Gaussian field")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "seiscox.toml")]
    config: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin the catalog and production, build the mean pressure field.
    Ingest,
    /// Maximum composite-likelihood fit with sandwich intervals.
    Fit {
        /// Pin a parameter, e.g. `--fix alpha=0.0129`. Repeatable.
        #[arg(long, value_parser = parse_fix)]
        fix: Vec<(String, f64)>,
    },
    /// Sample the latent field given the fitted parameters.
    Sample,
    /// Forecast intensity maps for the configured years.
    Forecast {
        /// Use E = 0 instead of posterior draws.
        #[arg(long)]
        plugin: bool,
    },
    /// Simulate counts from the configured parameters.
    Simulate,
    /// Monte Carlo history match of the reservoir model.
    HistoryMatch {
        /// Number of simulations, overriding the config.
        #[arg(short, long)]
        n: Option<usize>,
    },
    /// Summarise the artifacts in the output directory.
    Report,
}

fn parse_fix(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = value.trim().parse().map_err(|_| format!("not a number: {value:?}"))?;
    Ok((name.trim().to_string(), v))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    let cfg = LoadedConfig::load(&cli.config)?;
    let mut run = Run::new(cfg, cli.output_dir, cli.seed)?;
    match cli.command {
        Command::Ingest => commands::ingest::run(&run),
        Command::Fit { fix } => {
            for (name, value) in &fix {
                run.overrides.insert(format!("fix.{name}"), value.to_string());
            }
            commands::fit::run(&run, &fix)
        }
        Command::Sample => commands::sample::run(&run),
        Command::Forecast { plugin } => {
            if plugin {
                run.overrides.insert("plugin".into(), "true".into());
            }
            commands::forecast::run(&run, plugin)
        }
        Command::Simulate => commands::simulate::run(&run),
        Command::HistoryMatch { n } => {
            if let Some(n) = n {
                run.overrides.insert("n_simulations".into(), n.to_string());
            }
            commands::history::run(&run, n)
        }
        Command::Report => commands::report::run(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
