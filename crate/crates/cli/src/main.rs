//! `pathflow` command-line interface.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::PipelineConfig;

/// Usage or configuration problem; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "pathflow", version, about = "Clinical pathway mining and patient-flow simulation")]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for simulation (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic event log and its ground truth
    Synth,
    /// Clean, encode, cluster, classify and align an event log
    Mine {
        #[arg(long, value_name = "CSV")]
        log: Option<PathBuf>,
    },
    /// Fit simulation distributions from an event log
    Fit {
        #[arg(long, value_name = "CSV")]
        log: Option<PathBuf>,
        /// Directory written by `mine`; mining is redone when omitted
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
    },
    /// Run the scenario grid
    Simulate {
        #[arg(long, value_name = "JSON")]
        dists: Option<PathBuf>,
        /// Route target patients through the basic-state chain
        #[arg(long)]
        baseline: bool,
    },
    /// Compare class-aware and baseline runs against observed stays
    Evaluate {
        #[arg(long, value_name = "CSV")]
        observed: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        class_aware: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        baseline: Option<PathBuf>,
        /// Directory written by `mine`; needed for top-cluster filtering
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
    },
    /// Summarize an evaluation as Markdown
    Report {
        #[arg(long, value_name = "DIR")]
        eval: Option<PathBuf>,
    },
    /// Print the effective configuration
    Config {
        /// Print built-in defaults instead
        #[arg(long)]
        dump_defaults: bool,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use pathflow::Error as E;
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(
            E::InvalidCodeMap(_) | E::InvalidSynthSpec(_) | E::InvalidRange(_) | E::InvalidTemplate { .. } | E::InvalidScenario(_),
        ) = cause.downcast_ref::<E>()
        {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Usage("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    let out = cli.out;
    match cli.command {
        Command::Synth => commands::synth(&cfg, &out),
        Command::Mine { log } => commands::mine(&cfg, log, &out),
        Command::Fit { log, model } => commands::fit(&cfg, log, model, &out),
        Command::Simulate { dists, baseline } => commands::simulate(&cfg, dists, baseline, &out),
        Command::Evaluate {
            observed,
            class_aware,
            baseline,
            model,
        } => commands::evaluate(&cfg, observed, class_aware, baseline, model, &out),
        Command::Report { eval } => commands::report(eval, &out),
        Command::Config { dump_defaults } => {
            let shown = if dump_defaults { PipelineConfig::default() } else { cfg };
            print!("{}", shown.dump()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
