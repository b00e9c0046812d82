use std::fs;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args;
use idn::dataset::make_pair;
use idn::model::load_checkpoint;
use idn::Scalar;

use super::by_precision;
use crate::images::{file_name, inputs, load_luma};
use crate::Global;

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Ground-truth PNG or directory; each is downscaled to form the input.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Also write the timing table here.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn bench(g: &Global, a: &BenchArgs) -> Result<()> {
    by_precision!(g, run(a))
}

fn run<T: Scalar>(a: &BenchArgs) -> Result<()> {
    let params = load_checkpoint::<T>(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let m = params.config().scale;
    if let Some(s) = a.scale {
        ensure!(s == m, "checkpoint is for scale {m}, but scale {s} was requested");
    }
    let mut images = Vec::new();
    for path in inputs(&a.data)? {
        let pair = make_pair(&load_luma(&path)?, m).with_context(|| format!("{} is too small", path.display()))?;
        images.push((file_name(&path), pair.lr));
    }
    let report = idn::metrics::bench(&params, &images, a.repeats)?;
    let table = report.to_tsv();
    print!("{table}");
    if let Some(path) = &a.report {
        fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
