//! Pointwise activation and channel routing.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// `x` where `x >= 0`, `slope * x` elsewhere.
pub fn leaky_relu<T: Scalar>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    input.map(|v| if v >= T::zero() { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Scalar>(input: &Tensor<T>, slope: T, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!("lrelu gradient {} vs input {}", grad_out.shape(), input.shape())));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { slope * g })
        .collect();
    Ok(Tensor::from_parts(input.shape(), data))
}

/// Copies channels `[from, to)` of every sample.
pub fn channel_range<T: Scalar>(input: &Tensor<T>, from: usize, to: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if from >= to || to > s.c {
        return Err(Error::shape(format!("channel range {from}..{to} invalid for {s}")));
    }
    let p = s.plane();
    let mut data = Vec::with_capacity(s.n * (to - from) * p);
    for n in 0..s.n {
        data.extend_from_slice(&input.sample(n)[from * p..to * p]);
    }
    Ok(Tensor::from_parts(s.with_channels(to - from), data))
}

/// Splits off the leading `c / divisor` channels; returns `(leading, rest)`.
pub fn channel_slice<T: Scalar>(input: &Tensor<T>, divisor: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = input.shape().c;
    if divisor < 2 || !c.is_multiple_of(divisor) {
        return Err(Error::shape(format!("cannot slice 1/{divisor} of {c} channels")));
    }
    let first = c / divisor;
    Ok((channel_range(input, 0, first)?, channel_range(input, first, c)?))
}

/// Joins along channels, `a` first.
pub fn channel_concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::shape(format!("concat {sa} with {sb}")));
    }
    let mut data = Vec::with_capacity(sa.len() + sb.len());
    for n in 0..sa.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Ok(Tensor::from_parts(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data))
}
