//! Direct-loop reference convolutions, accumulated in f64.

use idn::nn::{ConvSpec, LayerParams};
use idn::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at<T: Scalar>(t: &Tensor<T>, n: usize, c: usize, y: usize, x: usize) -> f64 {
    let s = t.shape();
    t.data()[((n * s.c + c) * s.h + y) * s.w + x].as_f64()
}

/// `out[n,o,y,x] = b[o] + sum w[o,i,ky,kx] * in[n, g*cin_g + i, y*s - p + ky, x*s - p + kx]`.
pub fn naive_conv<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec, p: &LayerParams<T>) -> Vec<f64> {
    let s = input.shape();
    let (kh, kw, st, pad) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.pad as isize);
    let oh = (s.h + 2 * spec.pad - kh) / st + 1;
    let ow = (s.w + 2 * spec.pad - kw) / st + 1;
    let (cin_g, cout_g) = (spec.in_channels / spec.groups, spec.out_channels / spec.groups);
    let w = |o: usize, i: usize, ky: usize, kx: usize| p.weight.data()[((o * cin_g + i) * kh + ky) * kw + kx].as_f64();
    let mut out = vec![0.0; s.n * spec.out_channels * oh * ow];
    for n in 0..s.n {
        for o in 0..spec.out_channels {
            let g = o / cout_g;
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = p.bias.data()[o].as_f64();
                    for i in 0..cin_g {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * st + ky) as isize - pad;
                                let ix = (x * st + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += w(o, i, ky, kx) * at(input, n, g * cin_g + i, iy as usize, ix as usize);
                            }
                        }
                    }
                    out[((n * spec.out_channels + o) * oh + y) * ow + x] = acc;
                }
            }
        }
    }
    out
}

/// Scatter form: every input sample adds `in * w[o, i]` at
/// `(iy*s + ky - p, ix*s + kx - p)`.
pub fn naive_transposed<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec, p: &LayerParams<T>) -> Vec<f64> {
    let s = input.shape();
    let (kh, kw, st, pad) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.pad as isize);
    let oh = st * (s.h - 1) + kh - 2 * spec.pad;
    let ow = st * (s.w - 1) + kw - 2 * spec.pad;
    let (cin_g, cout_g) = (spec.in_channels / spec.groups, spec.out_channels / spec.groups);
    let mut out = vec![0.0; s.n * spec.out_channels * oh * ow];
    for n in 0..s.n {
        for o in 0..spec.out_channels {
            let plane = &mut out[(n * spec.out_channels + o) * oh * ow..][..oh * ow];
            plane.iter_mut().for_each(|v| *v = p.bias.data()[o].as_f64());
            let g = o / cout_g;
            for i in 0..cin_g {
                for iy in 0..s.h {
                    for ix in 0..s.w {
                        let v = at(input, n, g * cin_g + i, iy, ix);
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let y = (iy * st + ky) as isize - pad;
                                let x = (ix * st + kx) as isize - pad;
                                if y < 0 || x < 0 || y >= oh as isize || x >= ow as isize {
                                    continue;
                                }
                                let wv = p.weight.data()[((o * cin_g + i) * kh + ky) * kw + kx].as_f64();
                                plane[y as usize * ow + x as usize] += v * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// A random valid layer and input, with `n` samples.
pub struct Case<T> {
    pub spec: ConvSpec,
    pub params: LayerParams<T>,
    pub input: Tensor<T>,
}

pub fn random_case<T: Scalar>(rng: &mut ChaCha8Rng, transposed: bool) -> Case<T> {
    let groups = [1, 1, 2, 3, 4][rng.gen_range(0..5)];
    let cin = groups * rng.gen_range(1..=4);
    let cout = groups * rng.gen_range(1..=4);
    let k = [1, 2, 3, 5][rng.gen_range(0..4)];
    let stride = rng.gen_range(1..=3).min(if transposed { k } else { 3 });
    let pad = rng.gen_range(0..=k / 2);
    let spec = ConvSpec::new(cin, cout, k, pad).with_groups(groups).with_stride(stride);
    let dim = |rng: &mut ChaCha8Rng| {
        if transposed {
            loop {
                let h = rng.gen_range(1..=7);
                if stride * (h - 1) + k > 2 * pad {
                    break h;
                }
            }
        } else {
            // Lengths for which the strided kernel tiles the padded extent.
            loop {
                let h = k + stride * rng.gen_range(0..=5);
                if h > 2 * pad {
                    break h - 2 * pad;
                }
            }
        }
    };
    let (h, w) = (dim(rng), dim(rng));
    let n = rng.gen_range(1..=3);
    let mut params = LayerParams::zeros(&spec);
    params.weight.data_mut().iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-1.0..1.0)));
    params.bias.data_mut().iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-1.0..1.0)));
    let input = Tensor::from_fn((n, cin, h, w), |_| T::lit(rng.gen_range(-1.0..1.0))).unwrap();
    Case { spec, params, input }
}

/// `max |a - b| / max |b|`.
pub fn relative_max_error<T: Scalar>(fast: &[T], oracle: &[f64]) -> f64 {
    assert_eq!(fast.len(), oracle.len());
    let diff = fast.iter().zip(oracle).map(|(a, b)| (a.as_f64() - b).abs()).fold(0.0, f64::max);
    diff / oracle.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// Worst relative error of the fast kernels against the loops over
/// `count` random f32 layers; `(conv, transposed)`.
pub fn oracle_sweep(count: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..count {
        let c = random_case::<f32>(&mut rng, false);
        let fast = idn::nn::conv2d(&c.input, &c.spec, &c.params).unwrap();
        worst.0 = worst.0.max(relative_max_error(fast.data(), &naive_conv(&c.input, &c.spec, &c.params)));
        let c = random_case::<f32>(&mut rng, true);
        let fast = idn::nn::transposed_conv2d(&c.input, &c.spec, &c.params).unwrap();
        worst.1 = worst.1.max(relative_max_error(fast.data(), &naive_transposed(&c.input, &c.spec, &c.params)));
    }
    worst
}

/// Dense equivalent of a grouped layer: zero weights outside each group's
/// diagonal block.
pub fn block_diagonal<T: Scalar>(spec: &ConvSpec, p: &LayerParams<T>) -> (ConvSpec, LayerParams<T>) {
    let dense = ConvSpec { groups: 1, ..*spec };
    let mut out = LayerParams::zeros(&dense);
    let (cin_g, cout_g, kk) = (spec.in_channels / spec.groups, spec.out_channels / spec.groups, spec.kernel_h * spec.kernel_w);
    for o in 0..spec.out_channels {
        let g = o / cout_g;
        for i in 0..cin_g {
            let src = &p.weight.data()[(o * cin_g + i) * kk..][..kk];
            let dst = (o * spec.in_channels + g * cin_g + i) * kk;
            out.weight.data_mut()[dst..dst + kk].copy_from_slice(src);
        }
    }
    out.bias = p.bias.clone();
    (dense, out)
}

/// Reduction depth that fits a single f64 GEMM depth block.
pub const EXACT_DEPTH: usize = 256;

#[derive(Debug, Default)]
pub struct GroupedSweep {
    /// Cases whose dense reduction depth is at most [`EXACT_DEPTH`].
    pub shallow: usize,
    /// Shallow cases differing in any bit.
    pub shallow_mismatches: usize,
    pub deep: usize,
    /// Largest `max |a - b| / max |b|` over the deep cases.
    pub deep_error: f64,
}

impl GroupedSweep {
    fn record(&mut self, depth: usize, grouped: &Tensor<f64>, dense: &Tensor<f64>) {
        if depth <= EXACT_DEPTH {
            self.shallow += 1;
            self.shallow_mismatches += usize::from(grouped != dense);
        } else {
            self.deep += 1;
            self.deep_error = self.deep_error.max(relative_max_error(grouped.data(), dense.data()));
        }
    }
}

/// Grouped layers against their block-diagonal dense form in f64, over
/// `count` random grouped convolutions and as many transposed ones.
pub fn grouped_sweep(count: usize, seed: u64) -> GroupedSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = GroupedSweep::default();
    for transposed in [false, true] {
        let mut done = 0;
        while done < count {
            let c = random_case::<f64>(&mut rng, transposed);
            if c.spec.groups == 1 {
                continue;
            }
            done += 1;
            let (ds, dp) = block_diagonal(&c.spec, &c.params);
            let fwd = if transposed { idn::nn::transposed_conv2d } else { idn::nn::conv2d };
            // Forward layers reduce over input channels and taps; transposed
            // ones over input channels only.
            let depth = if transposed { c.spec.in_channels } else { c.spec.in_channels * c.spec.kernel_h * c.spec.kernel_w };
            sweep.record(depth, &fwd(&c.input, &c.spec, &c.params).unwrap(), &fwd(&c.input, &ds, &dp).unwrap());
        }
    }
    sweep
}

/// Grouped layers against their dense form with small-integer weights,
/// biases and inputs, where every f64 partial sum is exact and the result
/// cannot depend on summation order. Covers random cases of any depth and
/// the network's own grouped shapes; returns `(cases, mismatches)`.
pub fn integer_grouped_sweep(count: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let integral = |c: &mut Case<f64>, rng: &mut ChaCha8Rng| {
        let mut ints = |t: &mut [f64]| t.iter_mut().for_each(|v| *v = rng.gen_range(-8..=8) as f64);
        ints(c.params.weight.data_mut());
        ints(c.params.bias.data_mut());
        ints(c.input.data_mut());
    };
    let mut cases = Vec::new();
    for transposed in [false, true] {
        while cases.iter().filter(|(_, t)| *t == transposed).count() < count {
            let mut c = random_case::<f64>(&mut rng, transposed);
            if c.spec.groups > 1 {
                integral(&mut c, &mut rng);
                cases.push((c, transposed));
            }
        }
    }
    for spec in [ConvSpec::new(48, 32, 3, 1).with_groups(4), ConvSpec::new(48, 64, 3, 1).with_groups(4)] {
        let mut c = Case {
            spec,
            params: LayerParams::zeros(&spec),
            input: Tensor::zeros((2, spec.in_channels, 9, 7)).unwrap(),
        };
        integral(&mut c, &mut rng);
        cases.push((c, false));
    }
    let mismatches = cases
        .iter()
        .filter(|(c, transposed)| {
            let (ds, dp) = block_diagonal(&c.spec, &c.params);
            let fwd = if *transposed { idn::nn::transposed_conv2d } else { idn::nn::conv2d };
            fwd(&c.input, &c.spec, &c.params).unwrap() != fwd(&c.input, &ds, &dp).unwrap()
        })
        .count();
    (cases.len(), mismatches)
}
