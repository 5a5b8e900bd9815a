use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dmnet_cli::commands::{cmd_eval, cmd_infer, cmd_train, info_report};
use dmnet_cli::config::RunConfig;
use dmnet_cli::selfcheck::{all_passed, render, run_selfcheck, Fault};

#[derive(Parser)]
#[command(name = "dmnet", version, about = "Dual-domain modulation network for image super-resolution")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Upscale one PNG with a trained checkpoint.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Accepted for interface uniformity; inference is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a directory of HR PNGs.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory.
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for report.txt / report.kv (default: current).
        #[arg(long = "out")]
        output: Option<PathBuf>,
        /// Cross-check against the checkpoint's training scale.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..=4))]
        scale: Option<u64>,
        /// Accepted for interface uniformity; evaluation is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print parameter counts and FLOPs for a configuration.
    Info {
        /// Config file; omitted means the built-in reference recipe.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's scale.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..=4))]
        scale: Option<u64>,
        /// Accepted for interface uniformity; the report is static.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in invariant suite; exits nonzero on any failure.
    Selfcheck {
        /// Deliberately corrupt one computation (for testing the suite).
        #[arg(long, default_value = "none")]
        fault: Fault,
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train { config, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let ckpt = cmd_train(&cfg)?;
            println!("final checkpoint: {}", ckpt.display());
        }
        Cmd::Infer { ckpt, input, output, seed: _ } => {
            cmd_infer(&ckpt, &input, &output)?;
            println!("wrote {}", output.display());
        }
        Cmd::Eval { ckpt, input, output, scale, seed: _ } => {
            let out_dir = output.unwrap_or_else(|| PathBuf::from("."));
            let report = cmd_eval(&ckpt, &input, scale.map(|s| s as usize), &out_dir)?;
            print!("{}", report.text_table());
        }
        Cmd::Info { config, scale, seed: _ } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            if let Some(s) = scale {
                cfg.train.model.scale = s as usize;
            }
            print!("{}", info_report(&cfg.train.model));
        }
        Cmd::Selfcheck { fault, seed } => {
            let outcomes = run_selfcheck(fault, seed);
            print!("{}", render(&outcomes));
            if !all_passed(&outcomes) {
                eprintln!("error: selfcheck failed");
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
