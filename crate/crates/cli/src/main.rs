//! `deu`: data generation, training, ensemble sampling and uncertainty
//! analysis for toy diffusion surrogates.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, Overrides};
use stages::OutputExists;

#[derive(Parser)]
#[command(name = "deu", version, about = "Diffusion ensembles for regression: toy pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Built-in preset: ks-toy, ns-toy or gaussian-oracle.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    /// Run seed; every stage derives its own streams from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overwrite existing stage outputs.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate training and test data.
    GenData,
    /// Train the denoiser.
    Train,
    /// Sample an ensemble of predictions.
    Ensemble,
    /// Error/variance correlation analysis of the ensemble.
    Analyze,
    /// Ensemble-size convergence sweep.
    SizeSweep,
    /// Run any missing stage and write a summary.
    Report,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<OutputExists>() || cause.is::<std::io::Error>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<deu_core::Error>() {
            return if e.is_numeric() {
                3
            } else if e.is_io() {
                4
            } else {
                2
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let doc = config::load(cli.config.as_deref())?;
    let resolved = config::resolve(
        doc,
        Overrides {
            preset: cli.preset,
            seed: cli.seed,
            out: cli.out,
            jobs: cli.jobs,
        },
    )?;
    if let Some(n) = resolved.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    log::debug!("task {} seed {} out {}", resolved.task.name(), resolved.seed, resolved.out.display());
    deu_core::io::create_dir(&resolved.out)?;
    match cli.command {
        Command::GenData => stages::gen_data(&resolved, cli.force),
        Command::Train => stages::train(&resolved, cli.force),
        Command::Ensemble => stages::ensemble(&resolved, cli.force),
        Command::Analyze => stages::analyze(&resolved, cli.force).map(|_| ()),
        Command::SizeSweep => stages::sweep(&resolved, cli.force),
        Command::Report => stages::report(&resolved, cli.force),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEU_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already carry their source in the message
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.ends_with(&text) {
                    msg.push_str(if msg.is_empty() { "" } else { ": " });
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
