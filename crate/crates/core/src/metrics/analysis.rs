use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{save_plane_png, Channel, ImagePlane};
use crate::model::{infer, infer_with_capture, skip_resampler, Mode, ModelParams, Unit};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Channel-mean activation of one unit for a single input.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitMap {
    pub unit: Unit,
    /// Raw channel mean, same size as the LR input.
    pub mean: ImagePlane,
    pub min: f64,
    pub max: f64,
}

impl UnitMap {
    fn new<T: Scalar>(unit: Unit, t: &Tensor<T>) -> Self {
        let s = t.shape();
        let avg = t.channel_mean();
        let data: Vec<f64> = avg.plane(0, 0).iter().map(|v| v.as_f64()).collect();
        let min = data.iter().copied().fold(f64::INFINITY, f64::min);
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = ImagePlane::new(s.h, s.w, Channel::Gray, data).expect("activation plane is non-empty");
        Self { unit, mean, min, max }
    }

    /// Min-max normalised to `[0, 1]`; a constant map becomes all zeros.
    pub fn normalized(&self) -> ImagePlane {
        let span = self.max - self.min;
        let mut out = self.mean.clone();
        for v in out.data_mut() {
            *v = if span > 0.0 { (*v - self.min) / span } else { 0.0 };
        }
        out
    }

    /// `enh{k}` or `comp{k}`, counting blocks from 1.
    pub fn name(&self) -> String {
        match self.unit {
            Unit::Enhancement(k) => format!("enh{}", k + 1),
            Unit::Compression(k) => format!("comp{}", k + 1),
        }
    }
}

/// Channel means of every enhancement and compression unit output, in
/// forward order.
pub fn feature_map_summary<T: Scalar>(params: &ModelParams<T>, lr: &ImagePlane) -> Result<Vec<UnitMap>> {
    let mut maps = Vec::new();
    let mut hook = |unit: Unit, t: &Tensor<T>| maps.push(UnitMap::new(unit, t));
    infer_with_capture(params, &lr.to_tensor(), Mode::Infer, &mut hook)?;
    Ok(maps)
}

/// Writes one normalised PNG per map plus `maps.tsv` with each map's range.
pub fn write_feature_maps(dir: impl AsRef<Path>, maps: &[UnitMap]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sidecar = String::from("map\tmin\tmax\n");
    let mut written = Vec::with_capacity(maps.len());
    for map in maps {
        let path = dir.join(format!("{}.png", map.name()));
        save_plane_png(&path, &map.normalized())?;
        writeln!(sidecar, "{}\t{:e}\t{:e}", map.name(), map.min, map.max).expect("string write");
        written.push(path);
    }
    let path = dir.join("maps.tsv");
    fs::write(&path, sidecar).map_err(|e| Error::io(&path, e))?;
    Ok(written)
}

pub const HIST_BINS: usize = 64;

/// Fixed 64-bin histogram over `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    pub counts: [u64; HIST_BINS],
    /// Samples outside `[-1, 1]`.
    pub outside: u64,
}

impl Histogram {
    pub const LO: f64 = -1.0;
    pub const HI: f64 = 1.0;

    pub fn bin_width() -> f64 {
        (Self::HI - Self::LO) / HIST_BINS as f64
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = [0; HIST_BINS];
        let mut outside = 0;
        for v in values {
            if !(Self::LO..=Self::HI).contains(&v) {
                outside += 1;
                continue;
            }
            let b = (((v - Self::LO) / Self::bin_width()) as usize).min(HIST_BINS - 1);
            counts[b] += 1;
        }
        Self { counts, outside }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    /// The bin `[0, 1/32)` holding exact zeros.
    pub fn zero_bin() -> usize {
        HIST_BINS / 2
    }

    /// `[lo, hi)` range of bin `b`.
    pub fn bin_range(b: usize) -> (f64, f64) {
        let w = Self::bin_width();
        (Self::LO + b as f64 * w, Self::LO + (b + 1) as f64 * w)
    }

    /// First bin with the largest count.
    pub fn mode_bin(&self) -> usize {
        let peak = *self.counts.iter().max().expect("non-empty");
        self.counts.iter().position(|&c| c == peak).expect("peak exists")
    }

    /// Fraction of all samples lying in bins entirely inside `[lo, hi]`.
    /// Partially covered bins are excluded, so this never overstates.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let inside: u64 = (0..HIST_BINS)
            .filter(|&b| {
                let (a, z) = Self::bin_range(b);
                a >= lo && z <= hi
            })
            .map(|b| self.counts[b])
            .sum();
        inside as f64 / total as f64
    }

    /// Counts never rise, walking outwards from the mode, by more than
    /// `tol` times the peak count.
    pub fn is_unimodal(&self, tol: f64) -> bool {
        let mode = self.mode_bin();
        let slack = tol * self.counts[mode] as f64;
        let monotone = |bins: Vec<usize>| {
            let mut low = self.counts[mode] as f64;
            bins.into_iter().all(|b| {
                let c = self.counts[b] as f64;
                low = low.min(c);
                c <= low + slack
            })
        };
        monotone((0..mode).rev().collect()) && monotone((mode + 1..HIST_BINS).collect())
    }
}

/// Ground-truth and model residuals of one LR/HR pair.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    /// `hr - bicubic(lr)`.
    pub gt: ImagePlane,
    /// Network output minus its bicubic skip.
    pub model: ImagePlane,
    pub gt_hist: Histogram,
    pub model_hist: Histogram,
}

impl ResidualReport {
    /// Exact fraction of ground-truth residual samples in `[lo, hi]`.
    pub fn gt_mass_within(&self, lo: f64, hi: f64) -> f64 {
        let d = self.gt.data();
        d.iter().filter(|v| (lo..=hi).contains(*v)).count() as f64 / d.len() as f64
    }
}

pub fn residual_histogram<T: Scalar>(params: &ModelParams<T>, lr: &ImagePlane, hr: &ImagePlane) -> Result<ResidualReport> {
    let m = params.config().scale;
    let (h, w) = lr.dims();
    if hr.dims() != (m * h, m * w) {
        return Err(Error::shape(format!("HR {:?} is not {m} times LR {:?}", hr.dims(), lr.dims())));
    }
    let x = lr.to_tensor::<T>();
    let skip = skip_resampler(params.config(), h, w)?.apply(x.data());
    let out = infer(params, &x, Mode::Infer)?;

    let gt: Vec<f64> = hr.data().iter().zip(&skip).map(|(t, s)| t - s.as_f64()).collect();
    let model: Vec<f64> = out.data().iter().zip(&skip).map(|(&o, &s)| (o - s).as_f64()).collect();
    let gt_hist = Histogram::from_values(gt.iter().copied());
    let model_hist = Histogram::from_values(model.iter().copied());
    Ok(ResidualReport {
        gt: ImagePlane::new(m * h, m * w, Channel::Gray, gt)?,
        model: ImagePlane::new(m * h, m * w, Channel::Gray, model)?,
        gt_hist,
        model_hist,
    })
}

/// Bar chart of `hist`: dark bars on white, 4 pixels per bin, with the
/// zero bin's left edge marked in gray along the baseline.
pub fn render_histogram(hist: &Histogram) -> ImagePlane {
    const BAR: usize = 4;
    const HEIGHT: usize = 128;
    let peak = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let zero_x = Histogram::zero_bin() * BAR;
    ImagePlane::from_fn(HEIGHT, HIST_BINS * BAR, Channel::Gray, |y, x| {
        let bar = (hist.counts[x / BAR] as f64 / peak * (HEIGHT - 1) as f64).round() as usize;
        if HEIGHT - 1 - y < bar && x % BAR != BAR - 1 {
            0.0
        } else if x == zero_x && y >= HEIGHT - 4 {
            0.5
        } else {
            1.0
        }
    })
    .expect("fixed non-zero size")
}
