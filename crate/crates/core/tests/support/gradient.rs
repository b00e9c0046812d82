//! Finite-difference gradient checking over the autodiff tape.

use std::sync::Arc;

use idn::imaging::{ResizeOptions, Resampler};
use idn::model::{idn_forward, init_params, IdnConfig, Mode};
use idn::nn::{ConvSpec, Graph, LayerId, LayerParams, Tape, Var};
use idn::{Result, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub fn random(shape: (usize, usize, usize, usize), lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor64 {
    Tensor64::from_fn(shape, |_| rng.gen_range(lo..hi)).unwrap()
}

pub fn random_layer(spec: &ConvSpec, rng: &mut ChaCha8Rng) -> LayerParams<f64> {
    let mut p = LayerParams::zeros(spec);
    p.weight.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    p.bias.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
    p
}

/// `|a - n| / max(|a|, |n|, 1e-5)`. The floor sits above the cancellation
/// noise of a central difference on an O(1) loss, about `1e-16 / EPS`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

/// Tape wrapper recording the sign of every leaky ReLU input, so a finite
/// difference whose step crosses a kink can be recognised.
pub struct Signs<'p> {
    tape: Tape<'p, f64>,
    signs: Vec<bool>,
}

impl Graph<f64> for Signs<'_> {
    type Value = Var;

    fn input(&mut self, x: Tensor64) -> Var {
        self.tape.input(x)
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor64 {
        self.tape.value(v)
    }
    fn conv2d(&mut self, x: &Var, layer: LayerId, spec: &ConvSpec) -> Result<Var> {
        self.tape.conv2d(x, layer, spec)
    }
    fn transposed_conv2d(&mut self, x: &Var, layer: LayerId, spec: &ConvSpec) -> Result<Var> {
        self.tape.transposed_conv2d(x, layer, spec)
    }
    fn leaky_relu(&mut self, x: &Var, slope: f64) -> Var {
        self.signs.extend(self.tape.value(x).data().iter().map(|&v| v > 0.0));
        self.tape.leaky_relu(x, slope)
    }
    fn channel_slice(&mut self, x: &Var, divisor: usize) -> Result<(Var, Var)> {
        self.tape.channel_slice(x, divisor)
    }
    fn channel_concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.channel_concat(a, b)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.add(a, b)
    }
    fn crop(&mut self, x: &Var, top: usize, left: usize, h: usize, w: usize) -> Result<Var> {
        self.tape.crop(x, top, left, h, w)
    }
    fn resample(&mut self, x: &Var, r: Arc<Resampler>) -> Result<Var> {
        self.tape.resample(x, r)
    }
}

pub type Build = dyn Fn(&mut Signs<'_>, &Var) -> Result<Var>;

pub fn loss(params: &[LayerParams<f64>], x: &Tensor64, proj: &Tensor64, build: &Build) -> (f64, Vec<bool>) {
    let mut g = Signs { tape: Tape::new(params), signs: Vec::new() };
    let xv = g.input(x.clone());
    let y = build(&mut g, &xv).unwrap();
    (g.value(&y).dot(proj).unwrap(), g.signs)
}

#[derive(Debug, Default)]
pub struct Report {
    pub worst: f64,
    pub checked: usize,
    /// Elements whose step flipped a leaky ReLU input.
    pub skipped: usize,
}

impl Report {
    fn add(&mut self, analytic: f64, up: (f64, Vec<bool>), down: (f64, Vec<bool>), base: &[bool]) {
        if up.1 != base || down.1 != base {
            self.skipped += 1;
            return;
        }
        self.checked += 1;
        let n = (up.0 - down.0) / (2.0 * EPS);
        self.worst = self.worst.max(rel_err(analytic, n));
    }
}

/// Compares every parameter and input element for the scalar loss
/// `sum(proj * f(x))`.
pub fn compare(mut params: Vec<LayerParams<f64>>, mut x: Tensor64, build: &Build, rng: &mut ChaCha8Rng) -> Report {
    let (grads, input_grad, proj, base) = {
        let mut g = Signs { tape: Tape::new(&params), signs: Vec::new() };
        let xv = g.input(x.clone());
        let y = build(&mut g, &xv).unwrap();
        let proj = Tensor64::from_fn(g.value(&y).shape(), |_| rng.gen_range(-1.0..1.0)).unwrap();
        let grads = g.tape.backward(y, &proj).unwrap();
        let gi = grads.input(xv).cloned().unwrap_or_else(|| Tensor64::zeros(x.shape()).unwrap());
        (grads.layers, gi, proj, g.signs)
    };
    let mut report = Report::default();
    for l in 0..params.len() {
        for bias in [false, true] {
            let n = if bias { params[l].bias.len() } else { params[l].weight.len() };
            for i in 0..n {
                let at = |p: &mut [LayerParams<f64>], v: Option<f64>| {
                    let t = if bias { &mut p[l].bias } else { &mut p[l].weight };
                    let old = t.data()[i];
                    if let Some(v) = v {
                        t.data_mut()[i] = v;
                    }
                    old
                };
                let orig = at(&mut params, None);
                at(&mut params, Some(orig + EPS));
                let up = loss(&params, &x, &proj, build);
                at(&mut params, Some(orig - EPS));
                let down = loss(&params, &x, &proj, build);
                at(&mut params, Some(orig));
                let analytic = if bias { grads[l].bias.data()[i] } else { grads[l].weight.data()[i] };
                report.add(analytic, up, down, &base);
            }
        }
    }
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + EPS;
        let up = loss(&params, &x, &proj, build);
        x.data_mut()[i] = orig - EPS;
        let down = loss(&params, &x, &proj, build);
        x.data_mut()[i] = orig;
        report.add(input_grad.data()[i], up, down, &base);
    }
    report
}

impl Report {
    /// Within tolerance, with kink crossings kept under a tenth of elements.
    pub fn passes(&self) -> bool {
        self.worst < TOL && self.skipped * 10 <= self.checked + self.skipped
    }
}

pub fn assert_report(what: &str, r: &Report) {
    assert!(r.passes(), "{what}: {r:?}");
}

/// One report per seed for a graph over randomly initialised layers.
pub fn layer_reports(specs: &[ConvSpec], shape: (usize, usize, usize, usize), build: &Build) -> Vec<(u64, Report)> {
    SEEDS
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = specs.iter().map(|s| random_layer(s, &mut rng)).collect();
            let x = random(shape, -1.0, 1.0, &mut rng);
            (seed, compare(params, x, build, &mut rng))
        })
        .collect()
}

type Cases = Vec<(String, Report)>;

fn named(name: &str, reports: Vec<(u64, Report)>) -> Cases {
    reports.into_iter().map(|(seed, r)| (format!("{name} seed {seed}"), r)).collect()
}

pub fn conv_cases() -> Cases {
    let spec = ConvSpec::new(3, 4, 3, 1);
    let mut out = named("conv 3x3", layer_reports(&[spec], (2, 3, 5, 4), &move |g, x| g.conv2d(x, LayerId(0), &spec)));
    let spec = ConvSpec::new(2, 3, 3, 1).with_stride(2);
    out.extend(named("conv strided", layer_reports(&[spec], (1, 2, 7, 5), &move |g, x| g.conv2d(x, LayerId(0), &spec))));
    out
}

pub fn grouped_cases() -> Cases {
    let spec = ConvSpec::new(4, 6, 1, 0).with_groups(2);
    let mut out = named("grouped 1x1", layer_reports(&[spec], (1, 4, 4, 5), &move |g, x| g.conv2d(x, LayerId(0), &spec)));
    let spec = ConvSpec::new(8, 4, 3, 1).with_groups(4);
    out.extend(named("grouped 3x3", layer_reports(&[spec], (2, 8, 4, 4), &move |g, x| g.conv2d(x, LayerId(0), &spec))));
    out
}

pub fn transposed_cases() -> Cases {
    let spec = ConvSpec::new(3, 1, 5, 2).with_stride(3);
    let build = move |g: &mut Signs<'_>, x: &Var| g.transposed_conv2d(x, LayerId(0), &spec);
    let mut out = named("transposed", layer_reports(&[spec], (2, 3, 3, 4), &build));
    let spec = ConvSpec::new(4, 2, 4, 0).with_stride(2).with_groups(2);
    let build = move |g: &mut Signs<'_>, x: &Var| g.transposed_conv2d(x, LayerId(0), &spec);
    out.extend(named("transposed grouped", layer_reports(&[spec], (1, 4, 3, 3), &build)));
    out
}

pub fn leaky_relu_cases() -> Cases {
    SEEDS
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Samples at least 1e-2 from zero, so no step crosses the kink.
            let x = Tensor64::from_fn((2, 3, 4, 4), |_| {
                let v: f64 = rng.gen_range(0.01..1.0);
                if rng.gen() {
                    v
                } else {
                    -v
                }
            })
            .unwrap();
            let r = compare(Vec::new(), x, &|g, x| Ok(g.leaky_relu(x, 0.05)), &mut rng);
            (format!("leaky relu seed {seed}"), r)
        })
        .collect()
}

pub fn routing_cases() -> Cases {
    let spec = ConvSpec::new(4, 4, 1, 0);
    let build = move |g: &mut Signs<'_>, x: &Var| {
        let y = g.conv2d(x, LayerId(0), &spec)?;
        let (head, tail) = g.channel_slice(&y, 4)?;
        let cat = g.channel_concat(&tail, &head)?;
        let sum = g.add(&cat, x)?;
        let twice = g.add(&sum, &sum)?;
        g.crop(&twice, 1, 2, 3, 3)
    };
    named("slice/concat/add/crop", layer_reports(&[spec], (2, 4, 5, 6), &build))
}

pub fn resample_cases() -> Cases {
    let mut out = Vec::new();
    for (h, w, oh, ow) in [(4, 5, 8, 10), (4, 4, 12, 12), (9, 7, 5, 4)] {
        let r = Arc::new(Resampler::new(h, w, oh, ow, ResizeOptions::default()).unwrap());
        for &seed in &SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Mid-range values keep the output clamp inactive.
            let x = random((2, 1, h, w), 0.3, 0.7, &mut rng);
            let rr = r.clone();
            let rep = compare(Vec::new(), x, &move |g, x| g.resample(x, rr.clone()), &mut rng);
            out.push((format!("bicubic {h}x{w}->{oh}x{ow} seed {seed}"), rep));
        }
    }
    out
}

/// One block, `D3 = 8`, `d = 2`, `s = 4`.
pub fn tiny_config(scale: usize) -> IdnConfig {
    IdnConfig { scale, num_dblocks: 1, d3: 8, d: 2, s: 4, groups: 2, feat_channels: 8, ..Default::default() }
}

pub fn tiny_idn_cases() -> Cases {
    let mut out = Vec::new();
    for (scale, mode) in [(2, Mode::Train), (3, Mode::Train), (2, Mode::Infer)] {
        let config = tiny_config(scale);
        for &seed in &SEEDS {
            let params = init_params::<f64>(&config, seed).unwrap().layers().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = random((2, 1, 5, 4), 0.3, 0.7, &mut rng);
            let r = compare(params, x, &move |g, x| idn_forward(g, &config, x, mode, None), &mut rng);
            out.push((format!("tiny IDN x{scale} {mode:?} seed {seed}"), r));
        }
    }
    out
}

pub fn assert_cases(cases: Cases) {
    for (name, r) in cases {
        assert_report(&name, &r);
    }
}
