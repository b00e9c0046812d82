use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Args;
use idn::dataset::{list_pngs, read_manifest, Corpus};
use idn::model::init_params;
use idn::train::{Trainer, LATEST, LOG_FILE};
use idn::Scalar;

use super::by_precision;
use crate::Global;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    scale: Option<usize>,
    /// Directory of PNGs, a single PNG, or a manifest listing one path per
    /// line.
    #[arg(long)]
    data: PathBuf,
    /// Directory for checkpoints and the loss log.
    #[arg(long)]
    out: PathBuf,
    /// Stop after this many iterations in total, shortening later phases.
    /// 0 writes the initial weights only.
    #[arg(long)]
    iters: Option<u64>,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

pub fn train(g: &Global, a: &TrainArgs) -> Result<()> {
    by_precision!(g, run(g, a))
}

fn run<T: Scalar>(g: &Global, a: &TrainArgs) -> Result<()> {
    let mut settings = g.settings()?;
    if let Some(s) = a.scale {
        settings.set("model.scale", s);
    }
    let config = settings.model()?;
    let mut schedule = settings.schedule(config.scale)?;
    if let Some(n) = a.iters {
        schedule = schedule.capped(n);
    }

    let paths = if a.data.is_dir() {
        list_pngs(&a.data)?
    } else if a.data.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        vec![a.data.clone()]
    } else {
        read_manifest(&a.data)?
    };
    let mut corpus = Corpus::from_paths(&paths, config.scale).with_context(|| format!("loading {}", a.data.display()))?;
    eprintln!("{} images, {} training pairs at scale {}", paths.len(), corpus.len(), config.scale);

    let mut trainer = if a.resume {
        let t = Trainer::<T>::resume(&a.out, schedule).context("resuming")?;
        ensure!(
            *t.params().config() == config,
            "checkpoint in {} was trained with a different model configuration",
            a.out.display()
        );
        eprintln!("resuming at iteration {}", t.iteration());
        t
    } else {
        ensure!(
            !a.out.join(LOG_FILE).exists() && !a.out.join(LATEST).exists(),
            "{} already holds a run; pass --resume or choose another directory",
            a.out.display()
        );
        Trainer::new(init_params::<T>(&config, schedule.seed)?, schedule, Some(a.out.clone()))?
    };

    while !trainer.is_done() {
        let before = trainer.log().len();
        trainer.step(&mut corpus)?;
        if let Some(entry) = trainer.log().get(before) {
            eprintln!("{entry}");
        }
    }
    trainer.run(&mut corpus)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}
