use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use idn::imaging::{bicubic_resize, load_png, rgb_to_ycbcr, ycbcr_to_rgb, Channel, ImagePlane, Picture};
use idn::model::{infer, load_checkpoint, skip_resampler, Mode};
use idn::{IdnConfig, ModelParams, Scalar};

use crate::Method;

/// Luminance upscaler.
pub enum Upscaler<T> {
    Bicubic(usize),
    Idn(ModelParams<T>),
}

impl<T: Scalar> Upscaler<T> {
    /// Loads the checkpoint for [`Method::Idn`], checking it against `scale`
    /// when one was requested.
    pub fn new(method: Method, checkpoint: Option<&Path>, scale: Option<usize>) -> Result<Self> {
        match method {
            Method::Bicubic => {
                let scale = match (scale, checkpoint) {
                    (Some(s), _) => s,
                    (None, Some(c)) => load_checkpoint::<T>(c)?.config().scale,
                    (None, None) => bail!("--scale is required for bicubic upscaling"),
                };
                ensure!((2..=4).contains(&scale), "scale must be 2, 3 or 4, got {scale}");
                Ok(Self::Bicubic(scale))
            }
            Method::Idn => {
                let path = checkpoint.context("--checkpoint is required for the idn method")?;
                let params = load_checkpoint::<T>(path).with_context(|| format!("loading {}", path.display()))?;
                if let Some(s) = scale {
                    ensure!(
                        s == params.config().scale,
                        "checkpoint {} is for scale {}, but scale {s} was requested",
                        path.display(),
                        params.config().scale
                    );
                }
                Ok(Self::Idn(params))
            }
        }
    }

    pub fn scale(&self) -> usize {
        match self {
            Self::Bicubic(s) => *s,
            Self::Idn(p) => p.config().scale,
        }
    }

    /// `scale` times larger luminance, clamped to `[0, 1]`. The bicubic path
    /// goes through the network's own skip at the working precision, so a
    /// zero residual reproduces it exactly.
    pub fn luma(&self, plane: &ImagePlane) -> Result<ImagePlane> {
        let x = plane.to_tensor::<T>();
        let out = match self {
            Self::Bicubic(m) => {
                let (h, w) = plane.dims();
                let r = skip_resampler(&IdnConfig::with_scale(*m), h, w)?;
                idn::Tensor::from_vec((1, 1, m * h, m * w), r.apply(x.data()))?
            }
            Self::Idn(p) => infer(p, &x, Mode::Infer)?,
        };
        Ok(ImagePlane::from_tensor(&out, 0, 0, plane.channel()))
    }

    /// Gray images pass straight through; colour images are upscaled on Y
    /// with Cb and Cr enlarged by bicubic interpolation.
    pub fn picture(&self, picture: &Picture) -> Result<Picture> {
        let m = self.scale();
        match picture {
            Picture::Gray(p) => Ok(Picture::Gray(self.luma(p)?)),
            Picture::Rgb(im) => {
                let [y, cb, cr] = rgb_to_ycbcr(im);
                let (h, w) = y.dims();
                let y = self.luma(&y)?;
                let cb = bicubic_resize(&cb, m * h, m * w, true)?;
                let cr = bicubic_resize(&cr, m * h, m * w, true)?;
                Ok(Picture::Rgb(ycbcr_to_rgb(&y, &cb, &cr)?))
            }
        }
    }
}

/// A PNG file, or the PNGs directly inside a directory.
pub fn inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let files = idn::dataset::list_pngs(path)?;
        ensure!(!files.is_empty(), "no PNG files in {}", path.display());
        Ok(files)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        bail!("{} does not exist", path.display())
    }
}

pub fn load_luma(path: &Path) -> Result<ImagePlane> {
    let pic = load_png(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(pic.luma().with_channel(Channel::Y))
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
