//! Fidelity metrics, evaluation reports, network diagnostics and timing.

mod analysis;
mod bench;
mod report;

pub use analysis::{
    feature_map_summary, render_histogram, residual_histogram, write_feature_maps, Histogram, ResidualReport, UnitMap,
    HIST_BINS,
};
pub use bench::{bench, TimingReport};
pub use report::{format_db, render_report, write_report, EvalRow};

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

/// How SR output is compared against ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalProtocol {
    /// Pixels removed from each side before measuring.
    pub shave: usize,
    /// Round the first image to the 8-bit grid before measuring.
    pub round8: bool,
}

impl EvalProtocol {
    pub fn for_scale(scale: usize) -> Self {
        Self { shave: scale, round8: false }
    }

    fn prepare(&self, a: &ImagePlane, b: &ImagePlane) -> Result<(ImagePlane, ImagePlane)> {
        if a.dims() != b.dims() {
            return Err(Error::shape(format!("comparing {:?} with {:?}", a.dims(), b.dims())));
        }
        let a = if self.round8 { a.quantized() } else { a.clone() };
        if self.shave == 0 {
            return Ok((a, b.clone()));
        }
        Ok((a.shave(self.shave)?, b.shave(self.shave)?))
    }
}

/// Peak signal-to-noise ratio in dB for data in `[0, 1]`; identical
/// inputs give `f64::INFINITY`.
pub fn psnr(a: &ImagePlane, b: &ImagePlane, protocol: &EvalProtocol) -> Result<f64> {
    let (a, b) = protocol.prepare(a, b)?;
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(data: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = win.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win.iter().enumerate().map(|(k, c)| c * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over the valid windows.
fn ssim_terms(a: &ImagePlane, b: &ImagePlane) -> Result<(f64, f64)> {
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::usage(format!("SSIM needs at least 11x11 pixels, got {h}x{w}")));
    }
    let win = gaussian_window();
    let prod = |f: fn(f64, f64) -> f64| a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a.data(), h, w, &win);
    let mu_b = filter_valid(b.data(), h, w, &win);
    let aa = filter_valid(&prod(|x, _| x * x), h, w, &win);
    let bb = filter_valid(&prod(|_, y| y * y), h, w, &win);
    let ab = filter_valid(&prod(|x, y| x * y), h, w, &win);
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let (mut total, mut total_cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        total_cs += cs;
        total += cs * (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    }
    let n = mu_a.len() as f64;
    Ok((total / n, total_cs / n))
}

/// Mean single-scale SSIM over every valid 11x11 Gaussian window
/// (sigma 1.5, K1 0.01, K2 0.03, peak 1).
pub fn ssim(a: &ImagePlane, b: &ImagePlane, protocol: &EvalProtocol) -> Result<f64> {
    let (a, b) = protocol.prepare(a, b)?;
    Ok(ssim_terms(&a, &b)?.0)
}
