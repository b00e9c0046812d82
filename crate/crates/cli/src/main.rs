//! `idn`: train, apply, evaluate and inspect information distillation
//! networks for single-image super-resolution.

mod commands;
mod config;
mod images;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Settings;

#[derive(Parser, Debug)]
#[command(name = "idn", version, about = "Information distillation network super-resolution")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Settings file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Random seed for initialisation and batch sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bitwise reproducible runs.
    #[arg(long, env = "IDN_THREADS", global = true)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::F32, global = true)]
    precision: Precision,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Idn,
    Bicubic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a directory of PNGs or a manifest file.
    Train(commands::TrainArgs),
    /// Upscale a PNG or every PNG in a directory.
    Sr(commands::SrArgs),
    /// PSNR/SSIM on the luminance of ground-truth images.
    Eval(commands::EvalArgs),
    /// Write unit feature maps and residual histograms for one image.
    Inspect(commands::InspectArgs),
    /// Time forward passes.
    Bench(commands::BenchArgs),
}

impl Global {
    /// File settings overlaid with `--set` pairs.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        s.overlay(&self.sets)?;
        if let Some(seed) = self.seed {
            s.set("train.seed", seed);
        }
        Ok(s)
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            anyhow::ensure!(n > 0, "--threads must be at least 1");
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker threads")?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    cli.global.init_threads()?;
    let g = &cli.global;
    match &cli.command {
        Command::Train(a) => commands::train(g, a),
        Command::Sr(a) => commands::sr(g, a),
        Command::Eval(a) => commands::eval(g, a),
        Command::Inspect(a) => commands::inspect(g, a),
        Command::Bench(a) => commands::bench(g, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn globals_after_subcommand() {
        let cli = Cli::try_parse_from(["idn", "train", "--data", "d", "--out", "o", "--seed", "7", "--threads", "1"]).unwrap();
        assert_eq!((cli.global.seed, cli.global.threads), (Some(7), Some(1)));
        let s = cli.global.settings().unwrap();
        assert_eq!(s.schedule(3).unwrap().seed, 7);
    }

    #[test]
    fn unknown_set_key_is_an_error() {
        let cli = Cli::try_parse_from(["idn", "train", "--data", "d", "--out", "o", "--set", "model.d7=1"]).unwrap();
        assert!(cli.global.settings().is_err());
    }
}
