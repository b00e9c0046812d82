use crate::error::{Error, Result};
use crate::nn::ConvSpec;

/// Architecture hyperparameters.
///
/// Derived enhancement-unit widths follow from `d3` and `d`:
/// `D1 = D5 = d3 - d`, `D2 = d3 - 2d`, `D4 = d3`, `D6 = d3 + d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdnConfig {
    pub scale: usize,
    pub num_dblocks: usize,
    pub d3: usize,
    pub d: usize,
    pub s: usize,
    pub groups: usize,
    pub lrelu_slope: f64,
    pub rblock_kernel: usize,
    pub feat_channels: usize,
}

impl Default for IdnConfig {
    fn default() -> Self {
        Self {
            scale: 3,
            num_dblocks: 4,
            d3: 64,
            d: 16,
            s: 4,
            groups: 4,
            lrelu_slope: 0.05,
            rblock_kernel: 17,
            feat_channels: 64,
        }
    }
}

/// Position of a layer inside a distillation block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockLayer {
    Enh(usize),
    Comp,
}

impl IdnConfig {
    pub fn with_scale(scale: usize) -> Self {
        Self { scale, ..Self::default() }
    }

    pub fn d1(&self) -> usize {
        self.d3 - self.d
    }

    pub fn d2(&self) -> usize {
        self.d3 - 2 * self.d
    }

    pub fn d4(&self) -> usize {
        self.d3
    }

    pub fn d5(&self) -> usize {
        self.d3 - self.d
    }

    pub fn d6(&self) -> usize {
        self.d3 + self.d
    }

    /// Channels routed straight to the residual concat.
    pub fn sliced(&self) -> usize {
        self.d3 / self.s
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(2..=4).contains(&self.scale) {
            return fail(format!("scale must be 2, 3 or 4, got {}", self.scale));
        }
        if self.num_dblocks == 0 {
            return fail("at least one distillation block is required".into());
        }
        if self.feat_channels == 0 || self.groups == 0 {
            return fail("feature width and group count must be positive".into());
        }
        if self.d3 <= 2 * self.d {
            return fail(format!("d3 = {} leaves no channels for D2 with d = {}", self.d3, self.d));
        }
        if self.s < 2 || !self.d3.is_multiple_of(self.s) {
            return fail(format!("d3 = {} not divisible by slice divisor {}", self.d3, self.s));
        }
        if self.sliced() + self.feat_channels != self.d6() {
            return fail(format!(
                "residual widths disagree: {} sliced + {} features != D6 = {}",
                self.sliced(),
                self.feat_channels,
                self.d6()
            ));
        }
        let rest = self.d3 - self.sliced();
        for (what, c) in [("D1", self.d1()), ("D2", self.d2()), ("remaining slice", rest), ("D4", self.d4())] {
            if c % self.groups != 0 {
                return fail(format!("{what} = {c} not divisible by {} groups", self.groups));
            }
        }
        if self.rblock_kernel.is_multiple_of(2) || self.rblock_kernel < self.scale {
            return fail(format!(
                "reconstruction kernel must be odd and at least the scale, got {}",
                self.rblock_kernel
            ));
        }
        if !(self.lrelu_slope.is_finite() && self.lrelu_slope >= 0.0) {
            return fail(format!("invalid leaky ReLU slope {}", self.lrelu_slope));
        }
        Ok(())
    }

    /// Number of layers carrying weights.
    pub fn layer_count(&self) -> usize {
        2 + 7 * self.num_dblocks + 1
    }

    pub(crate) fn fblock_index(i: usize) -> usize {
        i
    }

    pub(crate) fn block_index(k: usize, layer: BlockLayer) -> usize {
        2 + 7 * k
            + match layer {
                BlockLayer::Enh(i) => i - 1,
                BlockLayer::Comp => 6,
            }
    }

    pub(crate) fn rblock_index(&self) -> usize {
        2 + 7 * self.num_dblocks
    }

    /// Enhancement-unit convolution `i` in `1..=6`.
    pub fn enh_spec(&self, i: usize) -> ConvSpec {
        let rest = self.d3 - self.sliced();
        match i {
            1 => ConvSpec::new(self.feat_channels, self.d1(), 3, 1),
            2 => ConvSpec::new(self.d1(), self.d2(), 3, 1).with_groups(self.groups),
            3 => ConvSpec::new(self.d2(), self.d3, 3, 1),
            4 => ConvSpec::new(rest, self.d4(), 3, 1).with_groups(self.groups),
            5 => ConvSpec::new(self.d4(), self.d5(), 3, 1),
            6 => ConvSpec::new(self.d5(), self.d6(), 3, 1),
            _ => panic!("enhancement unit has six convolutions, asked for {i}"),
        }
    }

    pub fn comp_spec(&self) -> ConvSpec {
        ConvSpec::new(self.d6(), self.feat_channels, 1, 0)
    }

    pub fn fblock_spec(&self, i: usize) -> ConvSpec {
        match i {
            0 => ConvSpec::new(1, self.feat_channels, 3, 1),
            1 => ConvSpec::new(self.feat_channels, self.feat_channels, 3, 1),
            _ => panic!("feature block has two convolutions, asked for {i}"),
        }
    }

    /// Reconstruction layer with padding chosen by the caller.
    pub fn rblock_spec(&self, pad: usize) -> ConvSpec {
        ConvSpec::new(self.feat_channels, 1, self.rblock_kernel, pad).with_stride(self.scale)
    }

    /// Canonical `(name, spec)` list; the order is the checkpoint order.
    pub fn layers(&self) -> Vec<(String, ConvSpec)> {
        let mut out = Vec::with_capacity(self.layer_count());
        out.push(("fblock.conv1".to_string(), self.fblock_spec(0)));
        out.push(("fblock.conv2".to_string(), self.fblock_spec(1)));
        for k in 0..self.num_dblocks {
            for i in 1..=6 {
                out.push((format!("dblock[{k}].enh.conv{i}"), self.enh_spec(i)));
            }
            out.push((format!("dblock[{k}].comp"), self.comp_spec()));
        }
        out.push(("rblock".to_string(), self.rblock_spec(0)));
        out
    }

    /// Analytic parameter total.
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(_, s)| s.param_count()).sum()
    }

    /// Label edge in training mode for an LR patch edge `lr`.
    pub fn train_output_size(&self, lr: usize) -> usize {
        self.scale * lr - self.scale + 1
    }

    /// Leading crop applied to an `m`-times grid to reach the training label.
    pub fn train_lead(&self) -> usize {
        (self.scale - 1) / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_widths() {
        let c = IdnConfig::default();
        c.validate().unwrap();
        assert_eq!((c.d1(), c.d2(), c.d3, c.d4(), c.d5(), c.d6()), (48, 32, 64, 64, 48, 80));
        assert_eq!(c.sliced(), 16);
        assert_eq!(c.layer_count(), 31);
        assert_eq!(c.layers().len(), 31);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            IdnConfig { num_dblocks: 0, ..Default::default() },
            IdnConfig { scale: 5, ..Default::default() },
            IdnConfig { d: 32, ..Default::default() },
            IdnConfig { s: 3, ..Default::default() },
            IdnConfig { feat_channels: 32, ..Default::default() },
            IdnConfig { groups: 5, ..Default::default() },
            IdnConfig { rblock_kernel: 16, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?} accepted");
        }
    }

    #[test]
    fn layer_indices_follow_names() {
        let c = IdnConfig::default();
        let layers = c.layers();
        assert_eq!(layers[IdnConfig::block_index(2, BlockLayer::Enh(4))].0, "dblock[2].enh.conv4");
        assert_eq!(layers[IdnConfig::block_index(3, BlockLayer::Comp)].0, "dblock[3].comp");
        assert_eq!(layers[c.rblock_index()].0, "rblock");
        assert_eq!(layers[IdnConfig::fblock_index(1)].0, "fblock.conv2");
    }
}
