use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::usage(format!("unknown loss {other:?}"))),
        }
    }
}

impl LossKind {
    pub fn eval<T: Scalar>(self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
        match self {
            LossKind::Mae => loss_mae(pred, target),
            LossKind::Mse => loss_mse(pred, target),
        }
    }
}

fn batch_size<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<usize> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!("prediction {} vs target {}", pred.shape(), target.shape())));
    }
    Ok(pred.shape().n)
}

/// Sum of absolute errors per sample, averaged over the batch.
///
/// Returns the loss and its gradient with respect to `pred`; exact ties
/// contribute zero gradient.
pub fn loss_mae<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let n = batch_size(pred, target)?;
    let inv = T::lit(1.0 / n as f64);
    let mut total = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total += d.abs().as_f64();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((total / n as f64, Tensor::from_vec(pred.shape(), grad)?))
}

/// Sum of squared errors per sample, averaged over the batch.
pub fn loss_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let n = batch_size(pred, target)?;
    let scale = T::lit(2.0 / n as f64);
    let mut total = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total += d.as_f64() * d.as_f64();
            scale * d
        })
        .collect();
    Ok((total / n as f64, Tensor::from_vec(pred.shape(), grad)?))
}
