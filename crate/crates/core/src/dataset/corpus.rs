use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{load_png, Channel, ImagePlane};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::train::BatchSource;

use super::{make_pair, rescale, Augmentation, RESCALES};

/// PNG files directly inside `dir`, sorted by file name.
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    out.sort();
    Ok(out)
}

/// One path per line; blank lines and `#` comments are skipped, relative
/// paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

/// Compact single-precision plane.
#[derive(Clone, Debug)]
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Plane {
    fn from(p: &ImagePlane) -> Self {
        Self { h: p.height(), w: p.width(), data: p.data().iter().map(|&v| v as f32).collect() }
    }

    fn window(&self, top: usize, left: usize, edge: usize) -> ImagePlane {
        ImagePlane::from_fn(edge, edge, Channel::Y, |y, x| self.data[(top + y) * self.w + left + x] as f64)
            .expect("non-empty window")
    }
}

/// One rescaled source image and its LR version.
#[derive(Clone, Debug)]
struct Entry {
    source: usize,
    rescale: f64,
    lr: Plane,
    hr: Plane,
}

/// Luminance training corpus for one scale.
///
/// Each source contributes one LR/HR pair per rescale factor. Rotations and
/// flips are applied to sampled patch pairs, which is equivalent to
/// orienting the image before cutting and avoids storing eight copies.
pub struct Corpus {
    scale: usize,
    sources: Vec<PathBuf>,
    entries: Vec<Entry>,
}

impl Corpus {
    pub fn from_planes(planes: &[ImagePlane], scale: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for (source, plane) in planes.iter().enumerate() {
            for &factor in &RESCALES {
                if let Some(pair) = make_pair(&rescale(plane, factor), scale) {
                    entries.push(Entry { source, rescale: factor, lr: Plane::from(&pair.lr), hr: Plane::from(&pair.hr) });
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::usage("no training image is large enough for the requested scale"));
        }
        Ok(Self { scale, sources: Vec::new(), entries })
    }

    pub fn from_paths(paths: &[PathBuf], scale: usize) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::usage("training corpus is empty"));
        }
        let planes = paths.iter().map(|p| load_png(p).map(|pic| pic.luma())).collect::<Result<Vec<_>>>()?;
        let mut corpus = Self::from_planes(&planes, scale)?;
        corpus.sources = paths.to_vec();
        Ok(corpus)
    }

    pub fn from_dir(dir: impl AsRef<Path>, scale: usize) -> Result<Self> {
        Self::from_paths(&list_pngs(dir)?, scale)
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn sources(&self) -> &[PathBuf] {
        &self.sources
    }

    /// Stored `(source, rescale)` pairs.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn eligible(&self, lr_size: usize) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].lr.h >= lr_size && self.entries[i].lr.w >= lr_size)
            .collect()
    }

    /// One patch pair from a random entry, orientation and position.
    fn draw(&self, eligible: &[usize], lr_size: usize, rng: &mut ChaCha8Rng) -> (ImagePlane, ImagePlane, usize) {
        let e = &self.entries[eligible[rng.gen_range(0..eligible.len())]];
        let orient = Augmentation { rotation: rng.gen_range(0..4), hflip: rng.gen(), rescale: e.rescale };
        let r = rng.gen_range(0..=e.lr.h - lr_size);
        let c = rng.gen_range(0..=e.lr.w - lr_size);
        let m = self.scale;
        let lr = orient.orient(&e.lr.window(r, c, lr_size));
        let hr = orient.orient(&e.hr.window(m * r, m * c, m * lr_size));
        let lead = (m - 1) / 2;
        let label = m * lr_size - m + 1;
        let hr = hr.crop(lead, lead, label, label).expect("label fits inside the full patch");
        (lr, hr, e.source)
    }
}

impl<T: Scalar> BatchSource<T> for Corpus {
    fn sample(&mut self, lr_size: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor<T>, Tensor<T>)> {
        let eligible = self.eligible(lr_size);
        if eligible.is_empty() {
            return Err(Error::usage(format!("no training image yields {lr_size}x{lr_size} LR patches")));
        }
        let label = self.scale * lr_size - self.scale + 1;
        let mut xs = Vec::with_capacity(batch * lr_size * lr_size);
        let mut ys = Vec::with_capacity(batch * label * label);
        for _ in 0..batch {
            let (lr, hr, _) = self.draw(&eligible, lr_size, rng);
            xs.extend(lr.data().iter().map(|&v| T::lit(v)));
            ys.extend(hr.data().iter().map(|&v| T::lit(v)));
        }
        Ok((
            Tensor::from_vec(Shape::new(batch, 1, lr_size, lr_size), xs)?,
            Tensor::from_vec(Shape::new(batch, 1, label, label), ys)?,
        ))
    }
}
