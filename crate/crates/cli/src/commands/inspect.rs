use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use idn::dataset::make_pair;
use idn::imaging::save_plane_png;
use idn::metrics::{feature_map_summary, render_histogram, residual_histogram, write_feature_maps, Histogram, HIST_BINS};
use idn::model::load_checkpoint;
use idn::Scalar;

use super::by_precision;
use crate::images::load_luma;
use crate::Global;

/// Tolerated rise, as a fraction of the peak, when judging unimodality.
pub const UNIMODAL_TOL: f64 = 0.01;

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Ground-truth image; its bicubic downscale is fed to the network.
    #[arg(long)]
    image: PathBuf,
    /// Created if missing.
    #[arg(long)]
    out: PathBuf,
}

pub fn inspect(g: &Global, a: &InspectArgs) -> Result<()> {
    by_precision!(g, run(a))
}

fn summary(name: &str, h: &Histogram) -> String {
    format!(
        "# {name}: mode_bin={} zero_bin={} mass[-0.6,0.6]>={:.4} unimodal={}\n",
        h.mode_bin(),
        Histogram::zero_bin(),
        h.mass_within(-0.6, 0.6),
        h.is_unimodal(UNIMODAL_TOL)
    )
}

fn run<T: Scalar>(a: &InspectArgs) -> Result<()> {
    let params = load_checkpoint::<T>(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let m = params.config().scale;
    let pair = make_pair(&load_luma(&a.image)?, m).context("image is smaller than the scale")?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let maps = feature_map_summary(&params, &pair.lr)?;
    for path in write_feature_maps(&a.out, &maps)? {
        println!("{}", path.display());
    }

    let r = residual_histogram(&params, &pair.lr, &pair.hr)?;
    for (name, hist) in [("residual_gt", &r.gt_hist), ("residual_model", &r.model_hist)] {
        let path = a.out.join(format!("{name}.png"));
        save_plane_png(&path, &render_histogram(hist))?;
        println!("{}", path.display());
    }
    let mut table = summary("gt", &r.gt_hist) + &summary("model", &r.model_hist);
    writeln!(table, "# gt exact mass[-0.6,0.6]={:.6}", r.gt_mass_within(-0.6, 0.6))?;
    table.push_str("bin_lo\tbin_hi\tgt\tmodel\n");
    for b in 0..HIST_BINS {
        let (lo, hi) = Histogram::bin_range(b);
        writeln!(table, "{lo:.5}\t{hi:.5}\t{}\t{}", r.gt_hist.counts[b], r.model_hist.counts[b])?;
    }
    writeln!(table, "outside\t\t{}\t{}", r.gt_hist.outside, r.model_hist.outside)?;
    let path = a.out.join("histograms.tsv");
    fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", table.lines().take(3).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}
