use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{AdamConfig, LossKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Pretrain,
    MaeTrain,
    MseFinetune,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Pretrain, Phase::MaeTrain, Phase::MseFinetune];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::MaeTrain => "mae_train",
            Phase::MseFinetune => "mse_finetune",
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            Phase::Pretrain | Phase::MaeTrain => LossKind::Mae,
            Phase::MseFinetune => LossKind::Mse,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown phase {s:?}")))
    }
}

/// LR/HR patch edges for training and fine-tuning at each scale.
pub fn default_patch_sizes(scale: usize) -> Result<(usize, usize)> {
    match scale {
        2 => Ok((29, 39)),
        3 => Ok((15, 26)),
        4 => Ok((11, 19)),
        m => Err(Error::config(format!("no patch sizes for scale {m}"))),
    }
}

/// Resolved settings for one phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePlan {
    pub phase: Phase,
    pub iterations: u64,
    pub lr: f64,
    pub lr_patch: usize,
}

impl PhasePlan {
    pub fn loss(&self) -> LossKind {
        self.phase.loss()
    }
}

/// Three-phase schedule. Fine-tuning always runs at a tenth of `lr`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub scale: usize,
    pub pretrain_iters: u64,
    pub train_iters: u64,
    pub finetune_iters: u64,
    pub lr: f64,
    pub train_patch: usize,
    pub finetune_patch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub adam: AdamConfig,
}

impl TrainSchedule {
    pub fn for_scale(scale: usize) -> Result<Self> {
        let (train_patch, finetune_patch) = default_patch_sizes(scale)?;
        Ok(Self {
            scale,
            pretrain_iters: 100_000,
            train_iters: 300_000,
            finetune_iters: 100_000,
            lr: 1e-4,
            train_patch,
            finetune_patch,
            batch_size: 64,
            seed: 0,
            log_every: 100,
            checkpoint_every: 10_000,
            adam: AdamConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.train_patch == 0 || self.finetune_patch == 0 {
            return Err(Error::config("batch and patch sizes must be positive"));
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::config("log and checkpoint intervals must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("invalid learning rate {}", self.lr)));
        }
        Ok(())
    }

    pub fn plans(&self) -> [PhasePlan; 3] {
        [
            PhasePlan { phase: Phase::Pretrain, iterations: self.pretrain_iters, lr: self.lr, lr_patch: self.train_patch },
            PhasePlan { phase: Phase::MaeTrain, iterations: self.train_iters, lr: self.lr, lr_patch: self.train_patch },
            PhasePlan {
                phase: Phase::MseFinetune,
                iterations: self.finetune_iters,
                lr: self.lr / 10.0,
                lr_patch: self.finetune_patch,
            },
        ]
    }

    pub fn total(&self) -> u64 {
        self.pretrain_iters + self.train_iters + self.finetune_iters
    }

    /// Plan active at global iteration `iter` and the iteration it began.
    pub fn plan_at(&self, iter: u64) -> Option<(PhasePlan, u64)> {
        let mut start = 0;
        for plan in self.plans() {
            if iter < start + plan.iterations {
                return Some((plan, start));
            }
            start += plan.iterations;
        }
        None
    }

    /// Truncates later phases so at most `total` iterations run.
    pub fn capped(&self, total: u64) -> Self {
        let mut left = total;
        let mut take = |n: u64| {
            let t = n.min(left);
            left -= t;
            t
        };
        Self {
            pretrain_iters: take(self.pretrain_iters),
            train_iters: take(self.train_iters),
            finetune_iters: take(self.finetune_iters),
            ..self.clone()
        }
    }
}
