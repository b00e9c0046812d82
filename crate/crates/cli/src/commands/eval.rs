use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use idn::dataset::make_pair;
use idn::metrics::{psnr, render_report, ssim, write_report, EvalRow};
use idn::Scalar;

use super::by_precision;
use crate::images::{file_name, inputs, load_luma, Upscaler};
use crate::{Global, Method};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth PNG or directory.
    #[arg(long)]
    gt: PathBuf,
    /// LR inputs matched to ground truths by file name. Without it, LR
    /// images are made by bicubic downscaling of the ground truths.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Idn)]
    method: Method,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    scale: Option<usize>,
    /// Also write the tab-separated report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<()> {
    by_precision!(g, run(g, a))
}

fn run<T: Scalar>(g: &Global, a: &EvalArgs) -> Result<()> {
    let settings = g.settings()?;
    let up = Upscaler::<T>::new(a.method, a.checkpoint.as_deref(), a.scale.or(settings.scale()?))?;
    let m = up.scale();
    let protocol = settings.protocol(m)?;
    let gt_files = inputs(&a.gt)?;

    let lr_dir = match &a.input {
        Some(dir) => {
            let lr: BTreeSet<String> = inputs(dir)?.iter().map(|p| file_name(p)).collect();
            let gt: BTreeSet<String> = gt_files.iter().map(|p| file_name(p)).collect();
            let orphans: Vec<_> = gt.symmetric_difference(&lr).cloned().collect();
            if !orphans.is_empty() {
                bail!("unpaired files: {}", orphans.join(", "));
            }
            Some(dir)
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(gt_files.len());
    for path in &gt_files {
        let name = file_name(path);
        let full = load_luma(path)?;
        let (lr, hr) = match lr_dir {
            None => {
                let pair = make_pair(&full, m).with_context(|| format!("{name} is smaller than the scale"))?;
                (pair.lr, pair.hr)
            }
            Some(dir) => {
                let lr = load_luma(&if dir.is_dir() { dir.join(&name) } else { dir.clone() })?;
                let (h, w) = (m * lr.height(), m * lr.width());
                ensure!(
                    full.height() >= h && full.width() >= w,
                    "{name}: ground truth {:?} is smaller than {m} x LR {:?}",
                    full.dims(),
                    lr.dims()
                );
                (lr, full.crop(0, 0, h, w)?)
            }
        };
        let sr = up.luma(&lr)?;
        rows.push(EvalRow { name, psnr: psnr(&sr, &hr, &protocol)?, ssim: ssim(&sr, &hr, &protocol)? });
    }

    print!("{}", render_report(&rows)?);
    if let Some(path) = &a.report {
        write_report(path, &rows)?;
    }
    Ok(())
}
