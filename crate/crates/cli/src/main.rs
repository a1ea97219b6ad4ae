//! `eegxfer`: preprocessing, training and transfer experiments for
//! pathology decoding from clinical EEG.
//!
//! Every subcommand reads one TOML config and writes into `--out`. The exit
//! code is 0 on success, 1 when some items failed but the run completed,
//! and 2 on a fatal error.

mod commands;
mod config;
mod data;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::output::RunOutput;

#[derive(Parser)]
#[command(name = "eegxfer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the experiment harnesses.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic two-dataset corpus.
    Synth,
    /// Preprocess the recordings of a manifest into the native container.
    Preprocess,
    /// Train a model from scratch.
    Train,
    /// Fine-tune from a checkpoint.
    Finetune,
    /// Evaluate a checkpoint on one split.
    Eval,
    /// Layer-by-layer CKA between two checkpoints.
    Cka,
    /// Test accuracy against training-set size.
    Scaling,
    /// Fine-tuning against training from scratch on a target dataset.
    Transfer,
    /// Source, target, merged and pretrain-then-fine-tune regimes.
    Merged,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Finetune => "finetune",
            Command::Eval => "eval",
            Command::Cka => "cka",
            Command::Scaling => "scaling",
            Command::Transfer => "transfer",
            Command::Merged => "merged",
        }
    }
}

fn run(cli: &Cli, out: &mut RunOutput) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    out.write("config.snapshot", cfg.snapshot()?)?;
    let ctx = Ctx {
        cfg: &cfg,
        threads: cli.threads.max(1),
    };
    match cli.command {
        Command::Synth => commands::synth(&ctx, out),
        Command::Preprocess => commands::preprocess_cmd(&ctx, out),
        Command::Train => commands::train_cmd(&ctx, out),
        Command::Finetune => commands::finetune(&ctx, out),
        Command::Eval => commands::eval(&ctx, out),
        Command::Cka => commands::cka(&ctx, out),
        Command::Scaling => commands::scaling(&ctx, out),
        Command::Transfer => commands::transfer(&ctx, out),
        Command::Merged => commands::merged(&ctx, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut out = match RunOutput::create(&cli.out, cli.command.name()) {
        Ok(o) => o,
        Err(e) => {
            log::error!("{e:#}");
            return ExitCode::from(2);
        }
    };
    let fatal = run(&cli, &mut out).err();
    if let Some(e) = &fatal {
        log::error!("{e:#}");
    }
    ExitCode::from(out.finish(fatal.as_ref()) as u8)
}
