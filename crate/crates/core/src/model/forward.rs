use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::imaging::{ResizeOptions, Resampler};
use crate::nn::{ConvSpec, Eager, Graph, LayerId};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::config::BlockLayer;
use super::{IdnConfig, ModelParams};

/// Output geometry.
///
/// `Train` yields `m*h - m + 1` pixels per side to match border-trimmed
/// labels; `Infer` yields exactly `m*h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "infer" => Ok(Mode::Infer),
            other => Err(Error::usage(format!("unknown mode {other:?}, expected train or infer"))),
        }
    }
}

/// Intermediate activations reported to a capture hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    /// Output `P` of block `k`'s enhancement unit.
    Enhancement(usize),
    /// Output `B` of block `k`'s compression unit.
    Compression(usize),
}

pub type Capture<'a, T> = &'a mut dyn FnMut(Unit, &Tensor<T>);

fn single_channel<T: Scalar, G: Graph<T>>(g: &G, x: &G::Value) -> Result<()> {
    let c = g.value(x).shape().c;
    if c != 1 {
        return Err(Error::shape(format!("expected a single-channel input, got {c} channels")));
    }
    Ok(())
}

fn conv_act<T: Scalar, G: Graph<T>>(g: &mut G, x: &G::Value, id: usize, spec: &ConvSpec, slope: T) -> Result<G::Value> {
    let y = g.conv2d(x, LayerId(id), spec)?;
    Ok(g.leaky_relu(&y, slope))
}

/// Two 3x3 convolutions lifting the luminance input to the trunk width.
pub fn fblock<T: Scalar, G: Graph<T>>(g: &mut G, config: &IdnConfig, x: &G::Value) -> Result<G::Value> {
    single_channel(g, x)?;
    let slope = T::lit(config.lrelu_slope);
    let h = conv_act(g, x, IdnConfig::fblock_index(0), &config.fblock_spec(0), slope)?;
    conv_act(g, &h, IdnConfig::fblock_index(1), &config.fblock_spec(1), slope)
}

/// Enhancement unit of block `k`: returns `P` with `D6` channels.
pub fn enhancement<T: Scalar, G: Graph<T>>(g: &mut G, config: &IdnConfig, k: usize, b_prev: &G::Value) -> Result<G::Value> {
    config.validate()?;
    let c = g.value(b_prev).shape().c;
    if c != config.feat_channels {
        return Err(Error::shape(format!("block input has {c} channels, expected {}", config.feat_channels)));
    }
    let slope = T::lit(config.lrelu_slope);
    let id = |i| IdnConfig::block_index(k, BlockLayer::Enh(i));

    let mut p = conv_act(g, b_prev, id(1), &config.enh_spec(1), slope)?;
    for i in 2..=3 {
        p = conv_act(g, &p, id(i), &config.enh_spec(i), slope)?;
    }
    let (head, rest) = g.channel_slice(&p, config.s)?;
    let r = g.channel_concat(&head, b_prev)?;
    let mut p2 = conv_act(g, &rest, id(4), &config.enh_spec(4), slope)?;
    for i in 5..=6 {
        p2 = conv_act(g, &p2, id(i), &config.enh_spec(i), slope)?;
    }
    g.add(&p2, &r)
}

/// 1x1 compression of block `k` back to the trunk width.
pub fn compression<T: Scalar, G: Graph<T>>(g: &mut G, config: &IdnConfig, k: usize, p: &G::Value) -> Result<G::Value> {
    let spec = config.comp_spec();
    let c = g.value(p).shape().c;
    if c != spec.in_channels {
        return Err(Error::shape(format!("compression input has {c} channels, expected {}", spec.in_channels)));
    }
    conv_act(g, p, IdnConfig::block_index(k, BlockLayer::Comp), &spec, T::lit(config.lrelu_slope))
}

/// Bicubic upscaler from `h x w` onto the full `m`-times grid.
pub fn skip_resampler(config: &IdnConfig, h: usize, w: usize) -> Result<Arc<Resampler>> {
    let m = config.scale;
    Ok(Arc::new(Resampler::new(h, w, m * h, m * w, ResizeOptions::default())?))
}

/// Full network: residual from the reconstruction layer plus a bicubic skip.
pub fn idn_forward<T: Scalar, G: Graph<T>>(
    g: &mut G,
    config: &IdnConfig,
    x: &G::Value,
    mode: Mode,
    mut capture: Option<Capture<'_, T>>,
) -> Result<G::Value> {
    config.validate()?;
    single_channel(g, x)?;
    let s = g.value(x).shape();
    let (m, k) = (config.scale, config.rblock_kernel);
    let half = (k - 1) / 2;
    let lead = config.train_lead();

    let mut b = fblock(g, config, x)?;
    for blk in 0..config.num_dblocks {
        let p = enhancement(g, config, blk, &b)?;
        if let Some(hook) = capture.as_mut() {
            hook(Unit::Enhancement(blk), g.value(&p));
        }
        b = compression(g, config, blk, &p)?;
        if let Some(hook) = capture.as_mut() {
            hook(Unit::Compression(blk), g.value(&b));
        }
    }

    let rid = LayerId(config.rblock_index());
    let up = g.resample(x, skip_resampler(config, s.h, s.w)?)?;
    let (residual, skip) = match mode {
        Mode::Train => {
            let (oh, ow) = (config.train_output_size(s.h), config.train_output_size(s.w));
            let residual = g.transposed_conv2d(&b, rid, &config.rblock_spec(half))?;
            let skip = g.crop(&up, lead, lead, oh, ow)?;
            (residual, skip)
        }
        Mode::Infer => {
            let full = g.transposed_conv2d(&b, rid, &config.rblock_spec(0))?;
            let top = half - lead;
            let residual = g.crop(&full, top, top, m * s.h, m * s.w)?;
            (residual, up)
        }
    };
    g.add(&residual, &skip)
}

/// Evaluates the network without recording gradients.
pub fn infer<T: Scalar>(params: &ModelParams<T>, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
    let mut g = Eager::new(params.layers());
    idn_forward(&mut g, params.config(), x, mode, None)
}

/// Like [`infer`], reporting each unit output to `capture`.
pub fn infer_with_capture<T: Scalar>(
    params: &ModelParams<T>,
    x: &Tensor<T>,
    mode: Mode,
    capture: Capture<'_, T>,
) -> Result<Tensor<T>> {
    let mut g = Eager::new(params.layers());
    idn_forward(&mut g, params.config(), x, mode, Some(capture))
}
