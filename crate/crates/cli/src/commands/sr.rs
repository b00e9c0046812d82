use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use idn::imaging::{load_png, save_png};
use idn::Scalar;

use super::by_precision;
use crate::images::{file_name, inputs, Upscaler};
use crate::{Global, Method};

#[derive(Args, Debug)]
pub struct SrArgs {
    /// PNG file or directory of PNGs.
    #[arg(long)]
    input: PathBuf,
    /// Output file, or directory when the input is a directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long, value_enum, default_value_t = Method::Idn)]
    method: Method,
}

pub fn sr(g: &Global, a: &SrArgs) -> Result<()> {
    by_precision!(g, run(g, a))
}

fn run<T: Scalar>(g: &Global, a: &SrArgs) -> Result<()> {
    let scale = a.scale.or(g.settings()?.scale()?);
    let up = Upscaler::<T>::new(a.method, a.checkpoint.as_deref(), scale)?;
    let files = inputs(&a.input)?;
    let to_dir = a.input.is_dir() || a.output.is_dir();
    if to_dir {
        fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    }
    for path in files {
        let pic = load_png(&path).with_context(|| format!("reading {}", path.display()))?;
        let out = up.picture(&pic).with_context(|| format!("upscaling {}", path.display()))?;
        let dest = if to_dir { a.output.join(file_name(&path)) } else { a.output.clone() };
        save_png(&dest, &out)?;
        let (h, w) = out.dims();
        println!("{}\t{w}x{h}", dest.display());
    }
    Ok(())
}
