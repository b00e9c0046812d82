//! Image containers, PNG I/O, colour conversion and bicubic resizing.

mod color;
mod resize;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use resize::{cubic, AxisWeights, EdgeMode, ResizeOptions, Resampler};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which signal a plane carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Y,
    Cb,
    Cr,
    Gray,
}

/// 8-bit interleaved RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("image with zero dimension"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "{} bytes for a {height}x{width} RGB image",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Single-channel floating image with samples nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    channel: Channel,
    data: Vec<f64>,
}

impl ImagePlane {
    /// Wraps samples as-is; values are not clamped.
    pub fn new(height: usize, width: usize, channel: Channel, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("plane with zero dimension"));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!("{} samples for a {height}x{width} plane", data.len())));
        }
        Ok(Self { height, width, channel, data })
    }

    pub fn from_fn(height: usize, width: usize, channel: Channel, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width.max(1), i % width.max(1))).collect();
        Self::new(height, width, channel, data)
    }

    pub fn from_u8(height: usize, width: usize, channel: Channel, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, channel, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn filled(height: usize, width: usize, channel: Channel, value: f64) -> Result<Self> {
        Self::new(height, width, channel, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn clamped(&self) -> Self {
        let data = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self { data, ..self.clone() }
    }

    /// Clamps and rounds every sample to the nearest `k / 255`.
    pub fn quantized(&self) -> Self {
        let data = self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect();
        Self { data, ..self.clone() }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    /// `[top, top+h) x [left, left+w)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(Error::shape(format!(
                "crop {h}x{w} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for y in top..top + h {
            data.extend_from_slice(&self.data[y * self.width + left..y * self.width + left + w]);
        }
        Self::new(h, w, self.channel, data)
    }

    /// Removes `border` samples from every side.
    pub fn shave(&self, border: usize) -> Result<Self> {
        if 2 * border >= self.height || 2 * border >= self.width {
            return Err(Error::usage(format!(
                "border {border} leaves nothing of a {}x{} plane",
                self.height, self.width
            )));
        }
        self.crop(border, border, self.height - 2 * border, self.width - 2 * border)
    }

    /// `1 x 1 x h x w` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec((1, 1, self.height, self.width), self.data.iter().map(|&v| T::lit(v)).collect())
            .expect("plane dimensions are non-zero")
    }

    /// Plane `(n, c)` of a tensor, clamped to `[0, 1]`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, n: usize, c: usize, channel: Channel) -> Self {
        let s = t.shape();
        let data = t.plane(n, c).iter().map(|v| v.as_f64().clamp(0.0, 1.0)).collect();
        Self { height: s.h, width: s.w, channel, data }
    }

    /// Rotation by a multiple of 90 degrees counter-clockwise.
    pub fn rotate90(&self, quarter_turns: usize) -> Self {
        let mut cur = self.clone();
        for _ in 0..quarter_turns % 4 {
            let (h, w) = (cur.height, cur.width);
            let mut data = vec![0.0; h * w];
            // new[y'][x'] with y' = w-1-x, x' = y
            for y in 0..h {
                for x in 0..w {
                    data[(w - 1 - x) * h + y] = cur.data[y * w + x];
                }
            }
            cur = Self { height: w, width: h, channel: cur.channel, data };
        }
        cur
    }

    /// Mirror about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width) {
            row.reverse();
        }
        Self { data, ..self.clone() }
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Bicubic resize of a plane; see [`Resampler`] for the kernel definition.
pub fn bicubic_resize(plane: &ImagePlane, out_h: usize, out_w: usize, antialias: bool) -> Result<ImagePlane> {
    let opts = ResizeOptions { antialias, ..ResizeOptions::default() };
    resize_with(plane, out_h, out_w, opts)
}

pub fn resize_with(plane: &ImagePlane, out_h: usize, out_w: usize, opts: ResizeOptions) -> Result<ImagePlane> {
    let r = Resampler::new(plane.height, plane.width, out_h, out_w, opts)?;
    ImagePlane::new(out_h, out_w, plane.channel, r.apply(&plane.data))
}

/// A decoded PNG.
#[derive(Clone, Debug, PartialEq)]
pub enum Picture {
    Gray(ImagePlane),
    Rgb(ImageRgb),
}

impl Picture {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Picture::Gray(p) => p.dims(),
            Picture::Rgb(im) => (im.height, im.width),
        }
    }

    /// Luminance: the Y plane for colour images, the plane itself for gray.
    pub fn luma(&self) -> ImagePlane {
        match self {
            Picture::Gray(p) => p.clone(),
            Picture::Rgb(im) => {
                let [y, _, _] = rgb_to_ycbcr(im);
                y
            }
        }
    }
}

/// Reads an 8-bit grayscale or RGB PNG. Alpha is dropped and palettes are
/// expanded; 16-bit images are rejected.
pub fn load_png(path: impl AsRef<Path>) -> Result<Picture> {
    let path = path.as_ref();
    let unsupported = |reason: String| Error::UnsupportedImage { path: path.to_path_buf(), reason };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| unsupported(e.to_string()))?;
    if reader.info().bit_depth == png::BitDepth::Sixteen {
        return Err(unsupported("16-bit samples are not supported".into()));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| unsupported(e.to_string()))?;
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(unsupported(format!("bit depth {:?}", frame.bit_depth)));
    }
    let (w, h) = (frame.width as usize, frame.height as usize);
    let line = frame.line_size;
    let channels = frame.color_type.samples();
    let mut gray = Vec::new();
    let mut rgb = Vec::new();
    for y in 0..h {
        let row = &buf[y * line..y * line + w * channels];
        for px in row.chunks(channels) {
            match frame.color_type {
                png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => gray.push(px[0]),
                png::ColorType::Rgb | png::ColorType::Rgba => rgb.extend_from_slice(&px[..3]),
                other => return Err(unsupported(format!("colour type {other:?}"))),
            }
        }
    }
    if rgb.is_empty() {
        Ok(Picture::Gray(ImagePlane::from_u8(h, w, Channel::Gray, &gray)?))
    } else {
        Ok(Picture::Rgb(ImageRgb::new(h, w, rgb)?))
    }
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// Writes a plane as a single-channel 8-bit PNG.
pub fn save_plane_png(path: impl AsRef<Path>, plane: &ImagePlane) -> Result<()> {
    write_png(path.as_ref(), plane.width, plane.height, png::ColorType::Grayscale, &plane.to_u8())
}

pub fn save_rgb_png(path: impl AsRef<Path>, image: &ImageRgb) -> Result<()> {
    write_png(path.as_ref(), image.width, image.height, png::ColorType::Rgb, &image.data)
}

pub fn save_png(path: impl AsRef<Path>, picture: &Picture) -> Result<()> {
    match picture {
        Picture::Gray(p) => save_plane_png(path, p),
        Picture::Rgb(im) => save_rgb_png(path, im),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(h: usize, w: usize, seed: u64) -> ImagePlane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        ImagePlane::new(h, w, Channel::Gray, data).unwrap()
    }

    #[test]
    fn rgb_png_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<u8> = (0..17 * 23 * 3).map(|_| rng.gen()).collect();
        let im = ImageRgb::new(17, 23, data).unwrap();
        let path = dir.path().join("rgb.png");
        save_rgb_png(&path, &im).unwrap();
        assert_eq!(load_png(&path).unwrap(), Picture::Rgb(im));
    }

    #[test]
    fn gray_plane_saves_single_channel() {
        let dir = tempfile::tempdir().unwrap();
        let plane = random_plane(9, 5, 1).quantized();
        let path = dir.path().join("g.png");
        save_plane_png(&path, &plane).unwrap();
        let decoder = png::Decoder::new(File::open(&path).unwrap());
        let reader = decoder.read_info().unwrap();
        assert_eq!(reader.info().color_type, png::ColorType::Grayscale);
        assert_eq!(load_png(&path).unwrap(), Picture::Gray(plane));
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let file = File::create(&path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), 2, 2);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&[0u8; 8]).unwrap();
        w.finish().unwrap();
        assert!(matches!(load_png(&path), Err(Error::UnsupportedImage { .. })));
    }

    #[test]
    fn missing_and_non_png_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_png(dir.path().join("nope.png")), Err(Error::Io { .. })));
        let bogus = dir.path().join("text.png");
        std::fs::write(&bogus, b"not an image").unwrap();
        assert!(matches!(load_png(&bogus), Err(Error::UnsupportedImage { .. })));
    }

    #[test]
    fn rotations_and_flips() {
        let p = random_plane(3, 5, 2);
        assert_eq!(p.rotate90(1).dims(), (5, 3));
        assert_eq!(p.rotate90(1).rotate90(1), p.rotate90(2));
        assert_eq!(p.rotate90(4), p);
        assert_eq!(p.flip_horizontal().flip_horizontal(), p);
        // top-left goes to bottom-left under one counter-clockwise turn
        assert_eq!(p.rotate90(1).get(4, 0), p.get(0, 0));
    }

    #[test]
    fn resize_identity_and_constant() {
        let p = random_plane(11, 13, 4);
        assert_eq!(bicubic_resize(&p, 11, 13, true).unwrap(), p);
        let c = ImagePlane::filled(12, 12, Channel::Y, 0.37).unwrap();
        let down = bicubic_resize(&c, 4, 4, true).unwrap();
        let up = bicubic_resize(&down, 12, 12, true).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
        assert!(matches!(bicubic_resize(&p, 0, 3, true), Err(Error::Usage(_))));
    }

    #[test]
    fn resize_is_separable() {
        let p = random_plane(20, 17, 5);
        let unclamped = ResizeOptions { clamp_output: false, ..ResizeOptions::default() };
        let a = resize_with(&resize_with(&p, 9, 17, unclamped).unwrap(), 9, 31, unclamped).unwrap();
        let b = resize_with(&resize_with(&p, 20, 31, unclamped).unwrap(), 9, 31, unclamped).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
