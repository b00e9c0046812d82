//! Separable bicubic resampling.
//!
//! Cubic convolution kernel with `a = -0.5`, half-pixel-centred coordinate
//! mapping and, when shrinking with antialiasing enabled, a kernel stretched by
//! the scale factor. This is the resampler used for LR degradation, the
//! network's global skip path and the chroma channels of colour output.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How source indices outside the image are mapped back inside.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeMode {
    /// Repeat the border sample.
    #[default]
    Clamp,
    /// Mirror about the border, repeating the edge sample (`..., 1, 0, 0, 1, ...`).
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResizeOptions {
    pub antialias: bool,
    pub edge: EdgeMode,
    /// Clamp results to `[0, 1]`.
    pub clamp_output: bool,
}

impl Default for ResizeOptions {
    fn default() -> Self {
        Self { antialias: true, edge: EdgeMode::Clamp, clamp_output: true }
    }
}

/// Cubic convolution kernel, `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Contribution table for one axis: `taps` (index, weight) pairs per output
/// sample.
#[derive(Clone, Debug)]
pub struct AxisWeights {
    in_len: usize,
    out_len: usize,
    taps: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl AxisWeights {
    pub fn new(in_len: usize, out_len: usize, antialias: bool, edge: EdgeMode) -> Self {
        let scale = out_len as f64 / in_len as f64;
        let (kscale, width) = if antialias && scale < 1.0 { (scale, 4.0 / scale) } else { (1.0, 4.0) };
        let taps = width.ceil() as usize + 2;
        let mut indices = Vec::with_capacity(out_len * taps);
        let mut weights = Vec::with_capacity(out_len * taps);
        for o in 0..out_len {
            let centre = (o as f64 + 0.5) / scale - 0.5;
            let left = (centre - width / 2.0).floor() as isize;
            let start = weights.len();
            for j in 0..taps {
                let idx = left + j as isize;
                weights.push(kscale * cubic(kscale * (centre - idx as f64)));
                indices.push(map_index(idx, in_len, edge));
            }
            let row = &mut weights[start..];
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= total);
        }
        Self { in_len, out_len, taps, indices, weights }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    /// `(source index, weight)` pairs for output sample `o`.
    pub fn row(&self, o: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = o * self.taps..(o + 1) * self.taps;
        self.indices[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    fn is_identity(&self) -> bool {
        self.in_len == self.out_len
    }
}

fn map_index(idx: isize, len: usize, edge: EdgeMode) -> usize {
    let n = len as isize;
    match edge {
        EdgeMode::Clamp => idx.clamp(0, n - 1) as usize,
        EdgeMode::Symmetric => {
            let period = 2 * n;
            let m = idx.rem_euclid(period);
            (if m < n { m } else { period - 1 - m }) as usize
        }
    }
}

/// Precomputed separable resampler for one `(in, out)` geometry.
#[derive(Clone, Debug)]
pub struct Resampler {
    rows: AxisWeights,
    cols: AxisWeights,
    clamp_output: bool,
}

impl Resampler {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize, opts: ResizeOptions) -> Result<Self> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::usage(format!("resize to {out_h}x{out_w}")));
        }
        if in_h == 0 || in_w == 0 {
            return Err(Error::usage(format!("resize from empty {in_h}x{in_w} image")));
        }
        Ok(Self {
            rows: AxisWeights::new(in_h, out_h, opts.antialias, opts.edge),
            cols: AxisWeights::new(in_w, out_w, opts.antialias, opts.edge),
            clamp_output: opts.clamp_output,
        })
    }

    pub fn out_dims(&self) -> (usize, usize) {
        (self.rows.out_len, self.cols.out_len)
    }

    pub fn in_dims(&self) -> (usize, usize) {
        (self.rows.in_len, self.cols.in_len)
    }

    pub fn rows(&self) -> &AxisWeights {
        &self.rows
    }

    pub fn cols(&self) -> &AxisWeights {
        &self.cols
    }

    /// Unclamped result in `f64`, height pass first.
    fn linear<T: Scalar>(&self, src: &[T]) -> Vec<f64> {
        let (ih, iw) = self.in_dims();
        let (oh, ow) = self.out_dims();
        assert_eq!(src.len(), ih * iw, "resampler input size");

        let mut tmp = vec![0.0f64; oh * iw];
        if self.rows.is_identity() {
            tmp.iter_mut().zip(src).for_each(|(t, &s)| *t = s.as_f64());
        } else {
            for o in 0..oh {
                let dst = &mut tmp[o * iw..(o + 1) * iw];
                for (i, w) in self.rows.row(o) {
                    if w == 0.0 {
                        continue;
                    }
                    for (d, &s) in dst.iter_mut().zip(&src[i * iw..(i + 1) * iw]) {
                        *d += w * s.as_f64();
                    }
                }
            }
        }

        if self.cols.is_identity() {
            return tmp;
        }
        let mut out = vec![0.0f64; oh * ow];
        for y in 0..oh {
            let line = &tmp[y * iw..(y + 1) * iw];
            for (o, d) in out[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *d = self.cols.row(o).map(|(i, w)| w * line[i]).sum();
            }
        }
        out
    }

    pub fn apply<T: Scalar>(&self, src: &[T]) -> Vec<T> {
        self.linear(src)
            .into_iter()
            .map(|v| T::lit(if self.clamp_output { v.clamp(0.0, 1.0) } else { v }))
            .collect()
    }

    /// Vector-Jacobian product of [`Resampler::apply`] at `src`.
    pub fn adjoint<T: Scalar>(&self, src: &[T], grad: &[T]) -> Vec<T> {
        let (ih, iw) = self.in_dims();
        let (oh, ow) = self.out_dims();
        assert_eq!(grad.len(), oh * ow, "resampler gradient size");
        let mut g: Vec<f64> = grad.iter().map(|v| v.as_f64()).collect();
        if self.clamp_output {
            for (gv, v) in g.iter_mut().zip(self.linear(src)) {
                if !(0.0..=1.0).contains(&v) {
                    *gv = 0.0;
                }
            }
        }
        // transpose of the width pass
        let mut tmp = vec![0.0f64; oh * iw];
        for y in 0..oh {
            let line = &mut tmp[y * iw..(y + 1) * iw];
            for o in 0..ow {
                let gv = g[y * ow + o];
                if self.cols.is_identity() {
                    line[o] += gv;
                } else {
                    for (i, w) in self.cols.row(o) {
                        line[i] += w * gv;
                    }
                }
            }
        }
        // transpose of the height pass
        let mut out = vec![0.0f64; ih * iw];
        for o in 0..oh {
            let src_row = &tmp[o * iw..(o + 1) * iw];
            if self.rows.is_identity() {
                out[o * iw..(o + 1) * iw].iter_mut().zip(src_row).for_each(|(d, &s)| *d += s);
                continue;
            }
            for (i, w) in self.rows.row(o) {
                for (d, &s) in out[i * iw..(i + 1) * iw].iter_mut().zip(src_row) {
                    *d += w * s;
                }
            }
        }
        out.into_iter().map(T::lit).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert_eq!(cubic(-2.5), 0.0);
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5) + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_clamped_indices() {
        assert_eq!(map_index(-1, 4, EdgeMode::Symmetric), 0);
        assert_eq!(map_index(-2, 4, EdgeMode::Symmetric), 1);
        assert_eq!(map_index(4, 4, EdgeMode::Symmetric), 3);
        assert_eq!(map_index(5, 4, EdgeMode::Symmetric), 2);
        assert_eq!(map_index(-3, 4, EdgeMode::Clamp), 0);
        assert_eq!(map_index(9, 4, EdgeMode::Clamp), 3);
    }

    #[test]
    fn upscale_by_two_uses_quarter_phase_weights() {
        // Output 4 of a 2x upscale sits at source 1.75.
        let w = AxisWeights::new(8, 16, true, EdgeMode::Clamp);
        let row: Vec<(usize, f64)> = w.row(4).filter(|&(_, w)| w != 0.0).collect();
        let expected = [cubic(1.75), cubic(0.75), cubic(0.25), cubic(1.25)];
        let got: Vec<f64> = row.iter().map(|&(_, w)| w).collect();
        assert_eq!(row.iter().map(|&(i, _)| i).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_ramp_reproduced_in_interior() {
        let n = 12;
        let src: Vec<f64> = (0..n).map(|i| 0.05 + 0.07 * i as f64).collect();
        let r = Resampler::new(1, n, 1, 2 * n, ResizeOptions::default()).unwrap();
        let out = r.apply(&src);
        for (o, &v) in out.iter().enumerate().take(2 * n - 4).skip(4) {
            let x = (o as f64 + 0.5) / 2.0 - 0.5;
            assert!((v - (0.05 + 0.07 * x)).abs() < 1e-12, "o={o}");
        }
    }

    #[test]
    fn identity_is_bitwise() {
        let src: Vec<f32> = (0..35).map(|i| (i as f32 * 0.37).sin().abs()).collect();
        let r = Resampler::new(5, 7, 5, 7, ResizeOptions::default()).unwrap();
        assert_eq!(r.apply(&src), src);
    }

    #[test]
    fn rejects_empty_output() {
        assert!(matches!(Resampler::new(4, 4, 0, 2, ResizeOptions::default()), Err(Error::Usage(_))));
    }

    proptest! {
        #[test]
        fn weight_rows_sum_to_one(inl in 1usize..60, outl in 1usize..60, aa: bool, sym: bool) {
            let edge = if sym { EdgeMode::Symmetric } else { EdgeMode::Clamp };
            let w = AxisWeights::new(inl, outl, aa, edge);
            for o in 0..outl {
                let s: f64 = w.row(o).map(|(_, w)| w).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn constant_survives_any_scale(h in 1usize..20, w in 1usize..20, oh in 1usize..40, ow in 1usize..40, v in 0.0f64..1.0) {
            let r = Resampler::new(h, w, oh, ow, ResizeOptions::default()).unwrap();
            for x in r.apply(&vec![v; h * w]) {
                prop_assert!((x - v).abs() < 1e-12);
            }
        }

        #[test]
        fn adjoint_identity(h in 2usize..12, w in 2usize..12, oh in 2usize..20, ow in 2usize..20, seed in 0u64..50) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let opts = ResizeOptions { clamp_output: false, ..ResizeOptions::default() };
            let r = Resampler::new(h, w, oh, ow, opts).unwrap();
            let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..oh * ow).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax: f64 = r.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
            let aty: f64 = r.adjoint(&x, &y).iter().zip(&x).map(|(a, b)| a * b).sum();
            prop_assert!((ax - aty).abs() <= 1e-10 * (1.0 + ax.abs()));
        }
    }
}
