//! Plain-text `key = value` settings with strict dotted keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use idn::metrics::EvalProtocol;
use idn::train::TrainSchedule;
use idn::IdnConfig;

/// Every key accepted in a config file or by `--set`.
pub const KEYS: &[&str] = &[
    "model.scale",
    "model.num_dblocks",
    "model.d3",
    "model.d",
    "model.s",
    "model.groups",
    "model.lrelu_slope",
    "model.rblock_kernel",
    "model.feat_channels",
    "train.pretrain_iters",
    "train.train_iters",
    "train.finetune_iters",
    "train.lr",
    "train.train_patch",
    "train.finetune_patch",
    "train.batch_size",
    "train.seed",
    "train.log_every",
    "train.checkpoint_every",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.weight_decay",
    "eval.shave",
    "eval.round8",
];

/// Raw settings in increasing precedence: file, then `--set` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn split_pair(text: &str) -> Result<(String, String)> {
    let (k, v) = text.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {text:?}"))?;
    let (k, v) = (k.trim(), v.trim());
    if !KEYS.contains(&k) {
        bail!("unknown config key {k:?}");
    }
    if v.is_empty() {
        bail!("empty value for {k}");
    }
    Ok((k.to_string(), v.to_string()))
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).with_context(|| format!("line {}", n + 1))?;
            s.values.insert(k, v);
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Applies `key=value` overrides on top of the current values.
    pub fn overlay(&mut self, pairs: &[String]) -> Result<()> {
        for p in pairs {
            let (k, v) = split_pair(p)?;
            self.values.insert(k, v);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key));
        self.values.insert(key.to_string(), value.to_string());
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}")))
            .transpose()
    }

    fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn scale(&self) -> Result<Option<usize>> {
        self.get("model.scale")
    }

    pub fn model(&self) -> Result<IdnConfig> {
        let mut c = IdnConfig::with_scale(self.scale()?.unwrap_or(IdnConfig::default().scale));
        self.apply("model.num_dblocks", &mut c.num_dblocks)?;
        self.apply("model.d3", &mut c.d3)?;
        self.apply("model.d", &mut c.d)?;
        self.apply("model.s", &mut c.s)?;
        self.apply("model.groups", &mut c.groups)?;
        self.apply("model.lrelu_slope", &mut c.lrelu_slope)?;
        self.apply("model.rblock_kernel", &mut c.rblock_kernel)?;
        self.apply("model.feat_channels", &mut c.feat_channels)?;
        c.validate()?;
        Ok(c)
    }

    /// Schedule for `scale`, with patch sizes defaulting to that scale's.
    pub fn schedule(&self, scale: usize) -> Result<TrainSchedule> {
        let mut s = TrainSchedule::for_scale(scale)?;
        self.apply("train.pretrain_iters", &mut s.pretrain_iters)?;
        self.apply("train.train_iters", &mut s.train_iters)?;
        self.apply("train.finetune_iters", &mut s.finetune_iters)?;
        self.apply("train.lr", &mut s.lr)?;
        self.apply("train.train_patch", &mut s.train_patch)?;
        self.apply("train.finetune_patch", &mut s.finetune_patch)?;
        self.apply("train.batch_size", &mut s.batch_size)?;
        self.apply("train.seed", &mut s.seed)?;
        self.apply("train.log_every", &mut s.log_every)?;
        self.apply("train.checkpoint_every", &mut s.checkpoint_every)?;
        self.apply("train.beta1", &mut s.adam.beta1)?;
        self.apply("train.beta2", &mut s.adam.beta2)?;
        self.apply("train.eps", &mut s.adam.eps)?;
        self.apply("train.weight_decay", &mut s.adam.weight_decay)?;
        s.adam.lr = s.lr;
        s.validate()?;
        Ok(s)
    }

    pub fn protocol(&self, scale: usize) -> Result<EvalProtocol> {
        let mut p = EvalProtocol::for_scale(scale);
        self.apply("eval.shave", &mut p.shave)?;
        self.apply("eval.round8", &mut p.round8)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut s = Settings::parse("# tiny\nmodel.d3 = 8\nmodel.d=4 # inline\nmodel.groups = 2\n\ntrain.lr = 0.001\n").unwrap();
        s.overlay(&["model.d3=16".into(), "model.scale=2".into(), "model.feat_channels=16".into()]).unwrap();
        let m = s.model().unwrap();
        assert_eq!((m.scale, m.d3, m.d), (2, 16, 4));
        let t = s.schedule(2).unwrap();
        assert_eq!((t.lr, t.adam.lr, t.train_patch), (0.001, 0.001, 29));
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        assert!(Settings::parse("model.d7 = 1").is_err());
        assert!(Settings::parse("model.d3").is_err());
        let mut s = Settings::default();
        assert!(s.overlay(&["train.bogus=1".into()]).is_err());
        s.overlay(&["train.batch_size=many".into()]).unwrap();
        assert!(s.schedule(3).is_err());
        s.overlay(&["model.scale=5".into()]).unwrap();
        assert!(s.model().is_err());
    }

    #[test]
    fn protocol_defaults_to_scale_shave() {
        let s = Settings::parse("eval.round8 = true").unwrap();
        let p = s.protocol(4).unwrap();
        assert_eq!((p.shave, p.round8), (4, true));
    }
}
