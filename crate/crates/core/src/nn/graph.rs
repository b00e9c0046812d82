//! Layer composition with and without gradient recording.
//!
//! Model code is written once against [`Graph`]. [`Eager`] evaluates directly
//! and drops intermediates as soon as they go out of scope; [`Tape`] records
//! every operation with its saved inputs so [`Tape::backward`] can replay them
//! in reverse.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::imaging::Resampler;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::conv::{conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvSpec, LayerParams};
use super::ops::{channel_concat, channel_range, leaky_relu, leaky_relu_backward};

/// Index of a layer in the parameter slice a graph was built over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerId(pub usize);

pub trait Graph<T: Scalar> {
    type Value;

    fn input(&mut self, x: Tensor<T>) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<T>;

    fn conv2d(&mut self, x: &Self::Value, layer: LayerId, spec: &ConvSpec) -> Result<Self::Value>;
    fn transposed_conv2d(&mut self, x: &Self::Value, layer: LayerId, spec: &ConvSpec) -> Result<Self::Value>;
    fn leaky_relu(&mut self, x: &Self::Value, slope: T) -> Self::Value;
    /// Leading `c / divisor` channels and the remainder.
    fn channel_slice(&mut self, x: &Self::Value, divisor: usize) -> Result<(Self::Value, Self::Value)>;
    fn channel_concat(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn crop(&mut self, x: &Self::Value, top: usize, left: usize, h: usize, w: usize) -> Result<Self::Value>;
    /// Per-plane bicubic resampling.
    fn resample(&mut self, x: &Self::Value, resampler: Arc<Resampler>) -> Result<Self::Value>;
}

fn layer<T>(params: &[LayerParams<T>], id: LayerId) -> Result<&LayerParams<T>> {
    params
        .get(id.0)
        .ok_or_else(|| Error::State(format!("layer {} not in parameter set of {}", id.0, params.len())))
}

fn check_channels<T: Scalar>(x: &Tensor<T>, divisor: usize) -> Result<usize> {
    let c = x.shape().c;
    if divisor < 2 || !c.is_multiple_of(divisor) {
        return Err(Error::shape(format!("cannot slice 1/{divisor} of {c} channels")));
    }
    Ok(c / divisor)
}

fn resample_tensor<T: Scalar>(x: &Tensor<T>, r: &Resampler) -> Result<Tensor<T>> {
    let s = x.shape();
    if r.in_dims() != (s.h, s.w) {
        return Err(Error::shape(format!("resampler expects {:?}, got {}", r.in_dims(), s)));
    }
    let (oh, ow) = r.out_dims();
    let mut data = Vec::with_capacity(s.n * s.c * oh * ow);
    for n in 0..s.n {
        for c in 0..s.c {
            data.extend(r.apply(x.plane(n, c)));
        }
    }
    Ok(Tensor::from_parts(Shape::new(s.n, s.c, oh, ow), data))
}

/// Direct evaluation without recording.
pub struct Eager<'p, T> {
    params: &'p [LayerParams<T>],
}

impl<'p, T: Scalar> Eager<'p, T> {
    pub fn new(params: &'p [LayerParams<T>]) -> Self {
        Self { params }
    }
}

impl<T: Scalar> Graph<T> for Eager<'_, T> {
    type Value = Tensor<T>;

    fn input(&mut self, x: Tensor<T>) -> Tensor<T> {
        x
    }

    fn value<'a>(&'a self, v: &'a Tensor<T>) -> &'a Tensor<T> {
        v
    }

    fn conv2d(&mut self, x: &Tensor<T>, id: LayerId, spec: &ConvSpec) -> Result<Tensor<T>> {
        conv2d(x, spec, layer(self.params, id)?)
    }

    fn transposed_conv2d(&mut self, x: &Tensor<T>, id: LayerId, spec: &ConvSpec) -> Result<Tensor<T>> {
        transposed_conv2d(x, spec, layer(self.params, id)?)
    }

    fn leaky_relu(&mut self, x: &Tensor<T>, slope: T) -> Tensor<T> {
        leaky_relu(x, slope)
    }

    fn channel_slice(&mut self, x: &Tensor<T>, divisor: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let first = check_channels(x, divisor)?;
        Ok((channel_range(x, 0, first)?, channel_range(x, first, x.shape().c)?))
    }

    fn channel_concat(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        channel_concat(a, b)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        a.add(b)
    }

    fn crop(&mut self, x: &Tensor<T>, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor<T>> {
        x.crop(top, left, h, w)
    }

    fn resample(&mut self, x: &Tensor<T>, resampler: Arc<Resampler>) -> Result<Tensor<T>> {
        resample_tensor(x, &resampler)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv { x: usize, layer: LayerId, spec: ConvSpec },
    ConvTranspose { x: usize, layer: LayerId, spec: ConvSpec },
    LeakyRelu { x: usize, slope: T },
    Channels { x: usize, from: usize },
    Concat { a: usize, b: usize },
    Add { a: usize, b: usize },
    Crop { x: usize, top: usize, left: usize },
    Resample { x: usize, resampler: Arc<Resampler> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Reverse-mode recorder over a fixed parameter slice.
pub struct Tape<'p, T> {
    params: &'p [LayerParams<T>],
    nodes: Vec<Node<T>>,
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    /// One entry per layer of the parameter slice; unused layers are zero.
    pub layers: Vec<LayerParams<T>>,
    leaves: Vec<(Var, Tensor<T>)>,
    /// Number of recorded operations replayed.
    pub visited: usize,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a graph input, if it influenced the output.
    pub fn input(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.iter().find(|(l, _)| *l == v).map(|(_, g)| g)
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [LayerParams<T>]) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn accumulate(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    /// Propagates `loss_grad` (the gradient of the loss with respect to
    /// `output`) back through every recorded operation, newest first.
    pub fn backward(&self, output: Var, loss_grad: &Tensor<T>) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward operation was recorded".into()));
        }
        let out = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::State(format!("unknown tape value {}", output.0)))?;
        if out.value.shape() != loss_grad.shape() {
            return Err(Error::shape(format!(
                "loss gradient {} does not match output {}",
                loss_grad.shape(),
                out.value.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(loss_grad.clone());
        let mut layers: Vec<Option<LayerParams<T>>> = vec![None; self.params.len()];
        let mut leaves = Vec::new();
        let mut visited = 0;

        for idx in (0..self.nodes.len()).rev() {
            visited += 1;
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => leaves.push((Var(idx), g)),
                Op::Conv { x, layer: id, spec } => {
                    let p = layer(self.params, *id)?;
                    let (gx, gp) = conv2d_backward(&self.nodes[*x].value, spec, p, &g)?;
                    Self::accumulate(&mut grads[*x], gx)?;
                    accumulate_layer(&mut layers[id.0], gp)?;
                }
                Op::ConvTranspose { x, layer: id, spec } => {
                    let p = layer(self.params, *id)?;
                    let (gx, gp) = transposed_conv2d_backward(&self.nodes[*x].value, spec, p, &g)?;
                    Self::accumulate(&mut grads[*x], gx)?;
                    accumulate_layer(&mut layers[id.0], gp)?;
                }
                Op::LeakyRelu { x, slope } => {
                    let gx = leaky_relu_backward(&self.nodes[*x].value, *slope, &g)?;
                    Self::accumulate(&mut grads[*x], gx)?;
                }
                Op::Channels { x, from } => {
                    let src = self.nodes[*x].value.shape();
                    let mut gx = Tensor::zeros(src)?;
                    let p = src.plane();
                    let width = g.shape().c * p;
                    for n in 0..src.n {
                        let start = n * src.sample() + from * p;
                        gx.data_mut()[start..start + width].copy_from_slice(g.sample(n));
                    }
                    Self::accumulate(&mut grads[*x], gx)?;
                }
                Op::Concat { a, b } => {
                    let ca = self.nodes[*a].value.shape().c;
                    let ga = channel_range(&g, 0, ca)?;
                    let gb = channel_range(&g, ca, g.shape().c)?;
                    Self::accumulate(&mut grads[*a], ga)?;
                    Self::accumulate(&mut grads[*b], gb)?;
                }
                Op::Add { a, b } => {
                    if a == b {
                        Self::accumulate(&mut grads[*a], g.scale(T::lit(2.0)))?;
                    } else {
                        Self::accumulate(&mut grads[*a], g.clone())?;
                        Self::accumulate(&mut grads[*b], g)?;
                    }
                }
                Op::Crop { x, top, left } => {
                    let src = self.nodes[*x].value.shape();
                    let gs = g.shape();
                    let mut gx = Tensor::zeros(src)?;
                    for n in 0..src.n {
                        for c in 0..src.c {
                            let from = g.plane(n, c);
                            let to = gx.plane_mut(n, c);
                            for y in 0..gs.h {
                                let dst = (top + y) * src.w + left;
                                to[dst..dst + gs.w].copy_from_slice(&from[y * gs.w..(y + 1) * gs.w]);
                            }
                        }
                    }
                    Self::accumulate(&mut grads[*x], gx)?;
                }
                Op::Resample { x, resampler } => {
                    let xv = &self.nodes[*x].value;
                    let s = xv.shape();
                    let mut data = Vec::with_capacity(s.len());
                    for n in 0..s.n {
                        for c in 0..s.c {
                            data.extend(resampler.adjoint(xv.plane(n, c), g.plane(n, c)));
                        }
                    }
                    Self::accumulate(&mut grads[*x], Tensor::from_parts(s, data))?;
                }
            }
        }

        let layers = layers
            .into_iter()
            .zip(self.params)
            .map(|(g, p)| {
                g.unwrap_or_else(|| LayerParams {
                    weight: Tensor::from_parts(p.weight.shape(), vec![T::zero(); p.weight.len()]),
                    bias: Tensor::from_parts(p.bias.shape(), vec![T::zero(); p.bias.len()]),
                })
            })
            .collect();
        leaves.reverse();
        Ok(Gradients { layers, leaves, visited })
    }
}

fn accumulate_layer<T: Scalar>(slot: &mut Option<LayerParams<T>>, g: LayerParams<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

impl<T: Scalar> Graph<T> for Tape<'_, T> {
    type Value = Var;

    fn input(&mut self, x: Tensor<T>) -> Var {
        self.push(x, Op::Leaf)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor<T> {
        &self.nodes[v.0].value
    }

    fn conv2d(&mut self, x: &Var, id: LayerId, spec: &ConvSpec) -> Result<Var> {
        let y = conv2d(&self.nodes[x.0].value, spec, layer(self.params, id)?)?;
        Ok(self.push(y, Op::Conv { x: x.0, layer: id, spec: *spec }))
    }

    fn transposed_conv2d(&mut self, x: &Var, id: LayerId, spec: &ConvSpec) -> Result<Var> {
        let y = transposed_conv2d(&self.nodes[x.0].value, spec, layer(self.params, id)?)?;
        Ok(self.push(y, Op::ConvTranspose { x: x.0, layer: id, spec: *spec }))
    }

    fn leaky_relu(&mut self, x: &Var, slope: T) -> Var {
        let y = leaky_relu(&self.nodes[x.0].value, slope);
        self.push(y, Op::LeakyRelu { x: x.0, slope })
    }

    fn channel_slice(&mut self, x: &Var, divisor: usize) -> Result<(Var, Var)> {
        let src = &self.nodes[x.0].value;
        let first = check_channels(src, divisor)?;
        let total = src.shape().c;
        let head = channel_range(src, 0, first)?;
        let tail = channel_range(src, first, total)?;
        let h = self.push(head, Op::Channels { x: x.0, from: 0 });
        let t = self.push(tail, Op::Channels { x: x.0, from: first });
        Ok((h, t))
    }

    fn channel_concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = channel_concat(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(y, Op::Concat { a: a.0, b: b.0 }))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(y, Op::Add { a: a.0, b: b.0 }))
    }

    fn crop(&mut self, x: &Var, top: usize, left: usize, h: usize, w: usize) -> Result<Var> {
        let y = self.nodes[x.0].value.crop(top, left, h, w)?;
        Ok(self.push(y, Op::Crop { x: x.0, top, left }))
    }

    fn resample(&mut self, x: &Var, resampler: Arc<Resampler>) -> Result<Var> {
        let y = resample_tensor(&self.nodes[x.0].value, &resampler)?;
        Ok(self.push(y, Op::Resample { x: x.0, resampler }))
    }
}
