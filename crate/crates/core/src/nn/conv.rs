//! Grouped 2-D convolution and transposed convolution, forward and backward.
//!
//! Both layers are lowered to im2col + GEMM. The transposed layer reuses the
//! same column geometry with the roles of image and column space swapped, so
//! its forward pass is the data-gradient of an ordinary convolution.
//!
//! Work is split across batch samples; per-sample weight gradients are reduced
//! in sample order so results do not depend on the thread count.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{gemm, gemm_strided, MatRef, Scalar};
use crate::tensor::{Shape, Tensor};

/// Upper bound on im2col buffer elements; larger outputs are processed in
/// row bands.
const COL_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, single group.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, pad: usize) -> Self {
        Self { in_channels, out_channels, kernel_h: kernel, kernel_w: kernel, stride: 1, pad, groups: 1 }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.in_channels,
            self.out_channels,
            self.kernel_h,
            self.kernel_w,
            self.stride,
            self.groups,
        ];
        if all.contains(&0) {
            return Err(Error::config(format!("non-positive field in {self:?}")));
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::config(format!(
                "channels {}->{} not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    /// Weight tensor shape `(out, in/groups, kh, kw)`.
    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_per_group(), self.kernel_h, self.kernel_w)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }

    /// Scalar parameters in weight and bias.
    pub fn param_count(&self) -> usize {
        self.weight_shape().len() + self.out_channels
    }

    /// Fan-in used for He initialization.
    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel_area()
    }

    /// Spatial output size of a forward convolution.
    pub fn conv_output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let dim = |len: usize, k: usize| -> Result<usize> {
            let padded = len + 2 * self.pad;
            if padded < k {
                return Err(Error::shape(format!("padded extent {padded} smaller than kernel {k}")));
            }
            if !(padded - k).is_multiple_of(self.stride) {
                return Err(Error::shape(format!(
                    "extent {len} with pad {} and kernel {k} is not a whole number of stride-{} steps",
                    self.pad, self.stride
                )));
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok((dim(h, self.kernel_h)?, dim(w, self.kernel_w)?))
    }

    /// Spatial output size of a transposed convolution.
    pub fn transposed_output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel_h < self.stride || self.kernel_w < self.stride {
            return Err(Error::config(format!(
                "transposed kernel {}x{} smaller than stride {}",
                self.kernel_h, self.kernel_w, self.stride
            )));
        }
        let dim = |len: usize, k: usize| -> Result<usize> {
            let full = self.stride * (len - 1) + k;
            full.checked_sub(2 * self.pad)
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::shape(format!("transposed output of extent {len} is empty after pad {}", self.pad)))
        };
        Ok((dim(h, self.kernel_h)?, dim(w, self.kernel_w)?))
    }
}

/// Weight and bias of one convolutional layer. Also used for their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(spec: &ConvSpec) -> Self {
        Self {
            weight: Tensor::zeros(spec.weight_shape()).expect("validated spec"),
            bias: Tensor::zeros(spec.bias_shape()).expect("validated spec"),
        }
    }

    pub fn check(&self, spec: &ConvSpec) -> Result<()> {
        if self.weight.shape() != spec.weight_shape() || self.bias.shape() != spec.bias_shape() {
            return Err(Error::shape(format!(
                "layer params {} / {} do not match spec (weight {}, bias {})",
                self.weight.shape(),
                self.bias.shape(),
                spec.weight_shape(),
                spec.bias_shape()
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.weight.add_assign(&other.weight)?;
        self.bias.add_assign(&other.bias)
    }

    pub fn cast<U: Scalar>(&self) -> LayerParams<U> {
        LayerParams { weight: self.weight.cast(), bias: self.bias.cast() }
    }
}

/// Column geometry: `channels` image planes of `img_h x img_w` sampled by a
/// `kh x kw` window at `stride`/`pad` onto a `col_h x col_w` grid.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    img_h: usize,
    img_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    col_h: usize,
    col_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    /// Row bands over the column grid that keep the buffer under budget.
    fn bands(&self) -> impl Iterator<Item = Range<usize>> {
        let per_row = (self.col_rows() * self.col_w).max(1);
        let band = (COL_BUDGET / per_row).clamp(1, self.col_h);
        let total = self.col_h;
        (0..total).step_by(band).map(move |s| s..(s + band).min(total))
    }

    #[inline]
    fn source(&self, out: usize, k: usize, limit: usize) -> Option<usize> {
        (out * self.stride + k).checked_sub(self.pad).filter(|&i| i < limit)
    }

    /// Fills `col` (`col_rows x band_len*col_w`) from `img` for grid rows `rows`.
    fn im2col<T: Scalar>(&self, img: &[T], rows: Range<usize>, col: &mut [T]) {
        let width = rows.len() * self.col_w;
        debug_assert_eq!(col.len(), self.col_rows() * width);
        let mut r = 0;
        for c in 0..self.channels {
            let plane = &img[c * self.img_h * self.img_w..(c + 1) * self.img_h * self.img_w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst_row = &mut col[r * width..(r + 1) * width];
                    for (bi, oy) in rows.clone().enumerate() {
                        let dst = &mut dst_row[bi * self.col_w..(bi + 1) * self.col_w];
                        match self.source(oy, ky, self.img_h) {
                            None => dst.fill(T::zero()),
                            Some(iy) => {
                                let src = &plane[iy * self.img_w..(iy + 1) * self.img_w];
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    *d = match self.source(ox, kx, self.img_w) {
                                        Some(ix) => src[ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: accumulates `col` into `img`.
    fn col2im<T: Scalar>(&self, col: &[T], rows: Range<usize>, img: &mut [T]) {
        let width = rows.len() * self.col_w;
        debug_assert_eq!(col.len(), self.col_rows() * width);
        let mut r = 0;
        for c in 0..self.channels {
            let plane = &mut img[c * self.img_h * self.img_w..(c + 1) * self.img_h * self.img_w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src_row = &col[r * width..(r + 1) * width];
                    for (bi, oy) in rows.clone().enumerate() {
                        if let Some(iy) = self.source(oy, ky, self.img_h) {
                            let src = &src_row[bi * self.col_w..(bi + 1) * self.col_w];
                            let dst = &mut plane[iy * self.img_w..(iy + 1) * self.img_w];
                            for (ox, &v) in src.iter().enumerate() {
                                if let Some(ix) = self.source(ox, kx, self.img_w) {
                                    dst[ix] += v;
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

fn check_input<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec, params: &LayerParams<T>) -> Result<()> {
    spec.validate()?;
    params.check(spec)?;
    if input.shape().c != spec.in_channels {
        return Err(Error::shape(format!(
            "input has {} channels, layer expects {}",
            input.shape().c,
            spec.in_channels
        )));
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Scalar>(grad_out: &Tensor<T>) -> Vec<T> {
    let s = grad_out.shape();
    (0..s.c)
        .map(|c| {
            let mut acc = T::zero();
            for n in 0..s.n {
                for &v in grad_out.plane(n, c) {
                    acc += v;
                }
            }
            acc
        })
        .collect()
}

/// Sums per-sample partial weight gradients in sample order.
fn reduce_in_order<T: Scalar>(parts: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut total = vec![T::zero(); len];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

/// Strided `rows x cols` submatrix starting at element 0 of `data`.
fn sub<T: Scalar>(data: &[T], rows: usize, cols: usize, row_stride: usize) -> MatRef<'_, T> {
    MatRef::strided(data, rows, cols, row_stride, 1)
}

/// Cross-correlation with zero padding and channel groups.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec, params: &LayerParams<T>) -> Result<Tensor<T>> {
    check_input(input, spec, params)?;
    let s = input.shape();
    let (oh, ow) = spec.conv_output_size(s.h, s.w)?;
    let out_shape = Shape::new(s.n, spec.out_channels, oh, ow);
    let geo = Geometry {
        channels: spec.in_per_group(),
        img_h: s.h,
        img_w: s.w,
        kh: spec.kernel_h,
        kw: spec.kernel_w,
        stride: spec.stride,
        pad: spec.pad,
        col_h: oh,
        col_w: ow,
    };
    let (cin_g, cout_g, kdim) = (spec.in_per_group(), spec.out_per_group(), geo.col_rows());
    let weight = params.weight.data();
    let out_plane = oh * ow;

    let mut out = vec![T::zero(); out_shape.len()];
    out.par_chunks_mut(out_shape.sample()).enumerate().for_each(|(n, out_n)| {
        let x = input.sample(n);
        let mut col = Vec::new();
        for g in 0..spec.groups {
            let img = &x[g * cin_g * s.plane()..(g + 1) * cin_g * s.plane()];
            let w_g = MatRef::row_major(&weight[g * cout_g * kdim..(g + 1) * cout_g * kdim], cout_g, kdim);
            let out_g = &mut out_n[g * cout_g * out_plane..(g + 1) * cout_g * out_plane];
            for rows in geo.bands() {
                let width = rows.len() * ow;
                col.resize(kdim * width, T::zero());
                geo.im2col(img, rows.clone(), &mut col);
                gemm_strided(
                    T::one(),
                    w_g,
                    MatRef::row_major(&col, kdim, width),
                    T::zero(),
                    &mut out_g[rows.start * ow..],
                    out_plane,
                );
            }
        }
        add_bias(out_n, params.bias.data(), out_plane);
    });
    Ok(Tensor::from_parts(out_shape, out))
}

/// Gradients of [`conv2d`] with respect to its input and parameters.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    params: &LayerParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, LayerParams<T>)> {
    check_input(input, spec, params)?;
    let s = input.shape();
    let (oh, ow) = spec.conv_output_size(s.h, s.w)?;
    let expected = Shape::new(s.n, spec.out_channels, oh, ow);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!("output gradient {} expected {expected}", grad_out.shape())));
    }
    let geo = Geometry {
        channels: spec.in_per_group(),
        img_h: s.h,
        img_w: s.w,
        kh: spec.kernel_h,
        kw: spec.kernel_w,
        stride: spec.stride,
        pad: spec.pad,
        col_h: oh,
        col_w: ow,
    };
    let (cin_g, cout_g, kdim) = (spec.in_per_group(), spec.out_per_group(), geo.col_rows());
    let weight = params.weight.data();
    let out_plane = oh * ow;
    let wlen = weight.len();

    let mut grad_in = vec![T::zero(); s.len()];
    let partials: Vec<Vec<T>> = grad_in
        .par_chunks_mut(s.sample())
        .enumerate()
        .map(|(n, gin_n)| {
            let x = input.sample(n);
            let gy = grad_out.sample(n);
            let mut gw = vec![T::zero(); wlen];
            let mut col = Vec::new();
            for g in 0..spec.groups {
                let img = &x[g * cin_g * s.plane()..(g + 1) * cin_g * s.plane()];
                let gimg = &mut gin_n[g * cin_g * s.plane()..(g + 1) * cin_g * s.plane()];
                let w_g = &weight[g * cout_g * kdim..(g + 1) * cout_g * kdim];
                let gw_g = &mut gw[g * cout_g * kdim..(g + 1) * cout_g * kdim];
                let gy_g = &gy[g * cout_g * out_plane..(g + 1) * cout_g * out_plane];
                for rows in geo.bands() {
                    let width = rows.len() * ow;
                    let gy_band = sub(&gy_g[rows.start * ow..], cout_g, width, out_plane);
                    col.resize(kdim * width, T::zero());
                    geo.im2col(img, rows.clone(), &mut col);
                    // dW += dY * col^T
                    gemm(T::one(), gy_band, MatRef::transposed(&col, width, kdim), T::one(), gw_g);
                    // dcol = W^T * dY
                    gemm(T::one(), MatRef::transposed(w_g, kdim, cout_g), gy_band, T::zero(), &mut col);
                    geo.col2im(&col, rows, gimg);
                }
            }
            gw
        })
        .collect();

    let grads = LayerParams {
        weight: Tensor::from_parts(spec.weight_shape(), reduce_in_order(partials, wlen)),
        bias: Tensor::from_parts(spec.bias_shape(), bias_grad(grad_out)),
    };
    Ok((Tensor::from_parts(s, grad_in), grads))
}

/// Rearranges group `g` of a `(out, in/groups, kh, kw)` weight into the
/// `(cout_g*kh*kw) x cin_g` matrix that maps input channels to columns.
fn transposed_matrix<T: Scalar>(weight: &[T], spec: &ConvSpec, g: usize) -> Vec<T> {
    let (cin_g, cout_g, kk) = (spec.in_per_group(), spec.out_per_group(), spec.kernel_area());
    let mut a = vec![T::zero(); cout_g * kk * cin_g];
    for co in 0..cout_g {
        for ci in 0..cin_g {
            let src = &weight[((g * cout_g + co) * cin_g + ci) * kk..][..kk];
            for (q, &v) in src.iter().enumerate() {
                a[(co * kk + q) * cin_g + ci] = v;
            }
        }
    }
    a
}

fn transposed_geometry(spec: &ConvSpec, in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Geometry {
    Geometry {
        channels: spec.out_per_group(),
        img_h: out_h,
        img_w: out_w,
        kh: spec.kernel_h,
        kw: spec.kernel_w,
        stride: spec.stride,
        pad: spec.pad,
        col_h: in_h,
        col_w: in_w,
    }
}

/// Transposed (fractionally strided) convolution: every input site scatters a
/// weighted copy of the kernel into the output at `stride` spacing, then `pad`
/// is trimmed from each border.
pub fn transposed_conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    params: &LayerParams<T>,
) -> Result<Tensor<T>> {
    check_input(input, spec, params)?;
    let s = input.shape();
    let (oh, ow) = spec.transposed_output_size(s.h, s.w)?;
    let out_shape = Shape::new(s.n, spec.out_channels, oh, ow);
    let geo = transposed_geometry(spec, s.h, s.w, oh, ow);
    let (cin_g, cout_g, kdim) = (spec.in_per_group(), spec.out_per_group(), geo.col_rows());
    let mats: Vec<Vec<T>> = (0..spec.groups).map(|g| transposed_matrix(params.weight.data(), spec, g)).collect();
    let out_plane = oh * ow;

    let mut out = vec![T::zero(); out_shape.len()];
    out.par_chunks_mut(out_shape.sample()).enumerate().for_each(|(n, out_n)| {
        let x = input.sample(n);
        let mut col = Vec::new();
        for (g, a) in mats.iter().enumerate() {
            let x_g = &x[g * cin_g * s.plane()..(g + 1) * cin_g * s.plane()];
            let out_g = &mut out_n[g * cout_g * out_plane..(g + 1) * cout_g * out_plane];
            for rows in geo.bands() {
                let width = rows.len() * s.w;
                col.resize(kdim * width, T::zero());
                let x_band = sub(&x_g[rows.start * s.w..], cin_g, width, s.plane());
                gemm(T::one(), MatRef::row_major(a, kdim, cin_g), x_band, T::zero(), &mut col);
                geo.col2im(&col, rows, out_g);
            }
        }
        add_bias(out_n, params.bias.data(), out_plane);
    });
    Ok(Tensor::from_parts(out_shape, out))
}

/// Gradients of [`transposed_conv2d`] with respect to its input and parameters.
pub fn transposed_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    params: &LayerParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, LayerParams<T>)> {
    check_input(input, spec, params)?;
    let s = input.shape();
    let (oh, ow) = spec.transposed_output_size(s.h, s.w)?;
    let expected = Shape::new(s.n, spec.out_channels, oh, ow);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!("output gradient {} expected {expected}", grad_out.shape())));
    }
    let geo = transposed_geometry(spec, s.h, s.w, oh, ow);
    let (cin_g, cout_g, kdim) = (spec.in_per_group(), spec.out_per_group(), geo.col_rows());
    let mats: Vec<Vec<T>> = (0..spec.groups).map(|g| transposed_matrix(params.weight.data(), spec, g)).collect();
    let out_plane = oh * ow;
    let alen = kdim * cin_g;

    let mut grad_in = vec![T::zero(); s.len()];
    let partials: Vec<Vec<T>> = grad_in
        .par_chunks_mut(s.sample())
        .enumerate()
        .map(|(n, gin_n)| {
            let x = input.sample(n);
            let gy = grad_out.sample(n);
            let mut ga = vec![T::zero(); alen * spec.groups];
            let mut col = Vec::new();
            for (g, a) in mats.iter().enumerate() {
                let x_g = &x[g * cin_g * s.plane()..(g + 1) * cin_g * s.plane()];
                let gx_g = &mut gin_n[g * cin_g * s.plane()..(g + 1) * cin_g * s.plane()];
                let gy_g = &gy[g * cout_g * out_plane..(g + 1) * cout_g * out_plane];
                let ga_g = &mut ga[g * alen..(g + 1) * alen];
                for rows in geo.bands() {
                    let width = rows.len() * s.w;
                    col.resize(kdim * width, T::zero());
                    geo.im2col(gy_g, rows.clone(), &mut col);
                    let colm = MatRef::row_major(&col, kdim, width);
                    // dX = A^T * im2col(dY)
                    gemm_strided(
                        T::one(),
                        MatRef::transposed(a, cin_g, kdim),
                        colm,
                        T::zero(),
                        &mut gx_g[rows.start * s.w..],
                        s.plane(),
                    );
                    // dA += im2col(dY) * X^T
                    let x_band_t = MatRef::strided(&x_g[rows.start * s.w..], width, cin_g, 1, s.plane());
                    gemm(T::one(), colm, x_band_t, T::one(), ga_g);
                }
            }
            ga
        })
        .collect();
    let ga = reduce_in_order(partials, alen * spec.groups);

    // Undo the (co, q) x ci rearrangement.
    let kk = spec.kernel_area();
    let mut gw = vec![T::zero(); spec.weight_shape().len()];
    for g in 0..spec.groups {
        let ga_g = &ga[g * alen..(g + 1) * alen];
        for co in 0..cout_g {
            for ci in 0..cin_g {
                let dst = &mut gw[((g * cout_g + co) * cin_g + ci) * kk..][..kk];
                for (q, d) in dst.iter_mut().enumerate() {
                    *d = ga_g[(co * kk + q) * cin_g + ci];
                }
            }
        }
    }

    let grads = LayerParams {
        weight: Tensor::from_parts(spec.weight_shape(), gw),
        bias: Tensor::from_parts(spec.bias_shape(), bias_grad(grad_out)),
    };
    Ok((Tensor::from_parts(s, grad_in), grads))
}
