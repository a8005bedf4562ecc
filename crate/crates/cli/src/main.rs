use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifacts;
mod commands;
mod plot;

#[derive(Parser, Debug)]
#[command(name = "ctxseg", version, about = "Context-aware segmentation experiments")]
struct Cli {
    /// Experiment config (flat key = value, or nested TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic small-object dataset.
    GenSynth,
    /// Train a segmenter or Seg-GLGAN on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on one part of a dataset.
    Eval(EvalArgs),
    /// Write predicted label maps.
    Predict(EvalArgs),
    /// Draw target and prediction contours over input images.
    Plot {
        /// One or more checkpoints; each gets its own contour color.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long, default_value_t = 4)]
        n_examples: usize,
    },
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = commands::load_config(cli.config.as_deref(), cli.seed, &cli.overrides)?;
    match cli.command {
        Command::GenSynth => commands::gen_synth(&cfg, &cli.out),
        Command::Train { data } => commands::train(&cfg, &data, &cli.out),
        Command::Eval(a) => commands::eval(&a.checkpoint, &a.data, &a.split, &cli.out),
        Command::Predict(a) => commands::predict(&a.checkpoint, &a.data, &a.split, &cli.out),
        Command::Plot {
            checkpoints,
            data,
            split,
            n_examples,
        } => plot::plot(&checkpoints, &data, &split, n_examples, &cli.out),
        Command::ShowConfig => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
