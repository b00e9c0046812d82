//! Training data: augmentation, LR/HR pairs and patch sampling.

mod corpus;

pub use corpus::{list_pngs, read_manifest, Corpus};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{bicubic_resize, ImagePlane};

/// Downscale factors applied before rotation and flipping.
pub const RESCALES: [f64; 5] = [1.0, 0.9, 0.8, 0.7, 0.6];

/// One of the 40 variants of a source image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    /// Counter-clockwise quarter turns, `0..4`.
    pub rotation: usize,
    pub hflip: bool,
    pub rescale: f64,
}

impl Augmentation {
    /// All variants in a fixed order: rescale, then rotation, then flip.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::with_capacity(40);
        for &rescale in &RESCALES {
            for rotation in 0..4 {
                for hflip in [false, true] {
                    out.push(Self { rotation, hflip, rescale });
                }
            }
        }
        out
    }

    /// Rotation followed by the optional flip.
    pub fn orient(&self, plane: &ImagePlane) -> ImagePlane {
        let r = plane.rotate90(self.rotation);
        if self.hflip {
            r.flip_horizontal()
        } else {
            r
        }
    }
}

/// Size of an image after downscaling by `factor`.
pub fn rescaled_dims(h: usize, w: usize, factor: f64) -> (usize, usize) {
    let f = |v: usize| ((v as f64 * factor).round() as usize).max(1);
    (f(h), f(w))
}

/// Antialiased bicubic downscale; the identity factor returns the input.
pub fn rescale(plane: &ImagePlane, factor: f64) -> ImagePlane {
    if factor == 1.0 {
        return plane.clone();
    }
    let (h, w) = rescaled_dims(plane.height(), plane.width(), factor);
    bicubic_resize(plane, h, w, true).expect("rescaled dims are non-zero")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedImage {
    pub source: usize,
    pub augmentation: Augmentation,
    pub plane: ImagePlane,
}

/// The 40 augmented variants of `image`, identity first.
pub fn augment(source: usize, image: &ImagePlane) -> Vec<AugmentedImage> {
    let mut out = Vec::with_capacity(40);
    for &factor in &RESCALES {
        let scaled = rescale(image, factor);
        for augmentation in Augmentation::all().into_iter().filter(|a| a.rescale == factor) {
            out.push(AugmentedImage { source, augmentation, plane: augmentation.orient(&scaled) });
        }
    }
    out
}

/// An HR plane trimmed to a multiple of `scale` and its bicubic LR version.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub scale: usize,
    pub lr: ImagePlane,
    pub hr: ImagePlane,
}

/// Trims the bottom and right of `hr` to a multiple of `scale` and
/// downscales it. `None` if the image is smaller than `scale` either way.
pub fn make_pair(hr: &ImagePlane, scale: usize) -> Option<Pair> {
    let (h, w) = hr.dims();
    if scale == 0 || h < scale || w < scale {
        return None;
    }
    let (th, tw) = (h - h % scale, w - w % scale);
    let hr = if (th, tw) == (h, w) { hr.clone() } else { hr.crop(0, 0, th, tw).ok()? };
    let lr = bicubic_resize(&hr, th / scale, tw / scale, true).ok()?;
    Some(Pair { scale, lr, hr })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchPhase {
    Training,
    FineTuning,
}

/// LR patch edge and the matching border-trimmed HR label edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    pub scale: usize,
    pub lr_size: usize,
    pub hr_size: usize,
    /// Step of [`sliding_patches`].
    pub stride: usize,
    pub phase: PatchPhase,
}

impl PatchSpec {
    pub fn new(scale: usize, lr_size: usize, phase: PatchPhase) -> Result<Self> {
        if scale == 0 || lr_size == 0 {
            return Err(Error::config("scale and patch size must be positive"));
        }
        let hr_size = scale * lr_size - scale + 1;
        Ok(Self { scale, lr_size, hr_size, stride: lr_size, phase })
    }

    /// Default sizes for each scale.
    pub fn standard(scale: usize, phase: PatchPhase) -> Result<Self> {
        let (train, tune) = crate::train::default_patch_sizes(scale)?;
        Self::new(scale, if phase == PatchPhase::Training { train } else { tune }, phase)
    }

    pub fn with_stride(self, stride: usize) -> Self {
        Self { stride: stride.max(1), ..self }
    }

    /// Leading HR rows/columns dropped from a full `m * l` patch.
    pub fn hr_lead(&self) -> usize {
        (self.scale - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.hr_size != self.scale * self.lr_size - self.scale + 1 {
            return Err(Error::config(format!(
                "label edge {} does not match {}x{} - {} + 1",
                self.hr_size, self.scale, self.lr_size, self.scale
            )));
        }
        Ok(())
    }
}

fn check_pair(pair: &Pair, spec: &PatchSpec) -> Result<()> {
    spec.validate()?;
    if pair.scale != spec.scale {
        return Err(Error::usage(format!("pair scale {} but patch spec scale {}", pair.scale, spec.scale)));
    }
    Ok(())
}

/// LR patch with top-left `(r, c)` and its trimmed HR label.
pub fn patch_at(pair: &Pair, spec: &PatchSpec, r: usize, c: usize) -> Result<(ImagePlane, ImagePlane)> {
    check_pair(pair, spec)?;
    let (l, m) = (spec.lr_size, spec.scale);
    let lr = pair.lr.crop(r, c, l, l)?;
    let lead = spec.hr_lead();
    let hr = pair.hr.crop(m * r + lead, m * c + lead, spec.hr_size, spec.hr_size)?;
    Ok((lr, hr))
}

/// Endless stream of patches at uniformly random positions.
pub struct PatchStream<'a> {
    pair: &'a Pair,
    spec: PatchSpec,
    rng: ChaCha8Rng,
}

impl Iterator for PatchStream<'_> {
    type Item = (ImagePlane, ImagePlane);

    fn next(&mut self) -> Option<Self::Item> {
        let (h, w) = self.pair.lr.dims();
        let r = self.rng.gen_range(0..=h - self.spec.lr_size);
        let c = self.rng.gen_range(0..=w - self.spec.lr_size);
        patch_at(self.pair, &self.spec, r, c).ok()
    }
}

pub fn extract_patches<'a>(pair: &'a Pair, spec: &PatchSpec, seed: u64) -> Result<PatchStream<'a>> {
    check_pair(pair, spec)?;
    let (h, w) = pair.lr.dims();
    if h < spec.lr_size || w < spec.lr_size {
        return Err(Error::usage(format!("{h}x{w} LR image is smaller than {} patches", spec.lr_size)));
    }
    Ok(PatchStream { pair, spec: *spec, rng: ChaCha8Rng::seed_from_u64(seed) })
}

/// Every patch on a `stride` grid, row-major.
pub fn sliding_patches(pair: &Pair, spec: &PatchSpec) -> Result<Vec<(ImagePlane, ImagePlane)>> {
    check_pair(pair, spec)?;
    let (h, w) = pair.lr.dims();
    if h < spec.lr_size || w < spec.lr_size {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for r in (0..=h - spec.lr_size).step_by(spec.stride) {
        for c in (0..=w - spec.lr_size).step_by(spec.stride) {
            out.push(patch_at(pair, spec, r, c)?);
        }
    }
    Ok(out)
}
