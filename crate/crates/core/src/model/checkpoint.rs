//! Little-endian binary weight files.
//!
//! Layout: magic `IDNW`, version `u32`, config block (scale, blocks, d3, d,
//! s, groups, feature width as `u32`, slope as `f32`), then one record per
//! tensor in canonical order: name length `u32`, UTF-8 name, shape as four
//! `u32`, raw `f32` values. Each layer contributes `<name>.weight` then
//! `<name>.bias`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::LayerParams;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::{IdnConfig, ModelParams};

pub const MAGIC: &[u8; 4] = b"IDNW";
pub const VERSION: u32 = 1;

/// Sanity bound on a single record name.
const MAX_NAME: u32 = 4096;

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f32(r: &mut impl Read) -> std::io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

pub(crate) fn write_tensor<T: Scalar>(w: &mut impl Write, name: &str, t: &Tensor<T>) -> Result<()> {
    let io = |e| Error::Format(format!("write failed: {e}"));
    put_u32(w, to_u32(name.len(), "name length")?).map_err(io)?;
    w.write_all(name.as_bytes()).map_err(io)?;
    for d in t.shape().dims() {
        put_u32(w, to_u32(d, "dimension")?).map_err(io)?;
    }
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(io)
}

pub(crate) fn read_tensor<T: Scalar>(r: &mut impl Read) -> Result<(String, Tensor<T>)> {
    let eof = |e: std::io::Error| Error::Format(format!("truncated record: {e}"));
    let len = get_u32(r).map_err(eof)?;
    if len > MAX_NAME {
        return Err(Error::Format(format!("record name length {len} is implausible")));
    }
    let mut name = vec![0u8; len as usize];
    r.read_exact(&mut name).map_err(eof)?;
    let name = String::from_utf8(name).map_err(|_| Error::Format("record name is not UTF-8".into()))?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = get_u32(r).map_err(eof)? as usize;
    }
    let shape = Shape::from(dims);
    shape.validate().map_err(|e| Error::Format(format!("{name}: {e}")))?;
    let mut raw = vec![0u8; shape.len() * 4];
    r.read_exact(&mut raw).map_err(eof)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Ok((name, Tensor::from_vec(shape, data)?))
}

pub fn write_checkpoint<T: Scalar>(w: &mut impl Write, params: &ModelParams<T>) -> Result<()> {
    let io = |e| Error::Format(format!("write failed: {e}"));
    let c = params.config();
    w.write_all(MAGIC).map_err(io)?;
    put_u32(w, VERSION).map_err(io)?;
    for v in [c.scale, c.num_dblocks, c.d3, c.d, c.s, c.groups, c.feat_channels] {
        put_u32(w, to_u32(v, "config value")?).map_err(io)?;
    }
    w.write_all(&(c.lrelu_slope as f32).to_le_bytes()).map_err(io)?;
    for (name, layer) in params.names().iter().zip(params.layers()) {
        write_tensor(w, &format!("{name}.weight"), &layer.weight)?;
        write_tensor(w, &format!("{name}.bias"), &layer.bias)?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(r: &mut impl Read) -> Result<ModelParams<T>> {
    let eof = |e: std::io::Error| Error::Format(format!("truncated header: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, not a weight file")));
    }
    let version = get_u32(r).map_err(eof)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let mut v = [0usize; 7];
    for x in &mut v {
        *x = get_u32(r).map_err(eof)? as usize;
    }
    // Widen through the shortest decimal so `0.05` reads back as `0.05`.
    let slope: f64 = get_f32(r).map_err(eof)?.to_string().parse().expect("f32 display is valid f64");
    let mut config = IdnConfig {
        scale: v[0],
        num_dblocks: v[1],
        d3: v[2],
        d: v[3],
        s: v[4],
        groups: v[5],
        feat_channels: v[6],
        lrelu_slope: slope,
        ..IdnConfig::default()
    };
    if config.num_dblocks == 0 || config.num_dblocks > 4096 {
        return Err(Error::Format(format!("implausible block count {}", config.num_dblocks)));
    }

    let expected = 2 + 7 * config.num_dblocks + 1;
    let mut layers = Vec::with_capacity(expected);
    let mut names = Vec::with_capacity(expected);
    for _ in 0..expected {
        let (wname, weight) = read_tensor::<T>(r)?;
        let (bname, bias) = read_tensor::<T>(r)?;
        let base = wname
            .strip_suffix(".weight")
            .ok_or_else(|| Error::Format(format!("expected a weight record, found {wname}")))?;
        if bname != format!("{base}.bias") {
            return Err(Error::Format(format!("expected {base}.bias, found {bname}")));
        }
        names.push(base.to_string());
        layers.push(LayerParams { weight, bias });
    }
    // The reconstruction kernel size is carried by the last layer's shape.
    config.rblock_kernel = layers.last().map(|l| l.weight.shape().h).unwrap_or(config.rblock_kernel);
    config.validate()?;

    let canonical: Vec<String> = config.layers().into_iter().map(|(n, _)| n).collect();
    if names != canonical {
        let bad = names.iter().zip(&canonical).find(|(a, b)| a != b);
        return Err(Error::Format(format!("layer order mismatch: {bad:?}")));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    ModelParams::from_layers(config, layers)
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, params: &ModelParams<T>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}
