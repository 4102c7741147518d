//! PNG images, heatmaps, masks and attribution files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{Attribution, Method};
use crate::scalar::Scalar;
use crate::tensor::{BinaryMask, Shape, Tensor};

fn decode_png(path: &Path) -> Result<(Shape, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::io(path, e))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::io(path, format!("unsupported bit depth {depth:?}")));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::io(path, format!("unsupported color type {other:?}"))),
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::io(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::io(path, e))?;
    buf.truncate(info.buffer_size());
    let shape = Shape::new(info.height as usize, info.width as usize, channels);
    if buf.len() != shape.len() {
        return Err(Error::io(path, "decoded size does not match header"));
    }
    Ok((shape, buf))
}

/// Reads an 8-bit grayscale or RGB PNG into `[0, 1]` values.
pub fn read_png<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let (shape, bytes) = decode_png(path.as_ref())?;
    let scale = T::of(255.0);
    Tensor::new(shape, bytes.into_iter().map(|b| T::of(b as f64) / scale).collect())
}

fn encode_png(path: &Path, height: usize, width: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::io(path, e))?;
    writer.write_image_data(bytes).map_err(|e| Error::io(path, e))?;
    writer.finish().map_err(|e| Error::io(path, e))
}

/// Writes a 1- or 3-channel tensor as an 8-bit PNG (values clamped to `[0, 1]`).
pub fn write_png<T: Scalar>(x: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let s = x.shape();
    let color = match s.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::invalid(format!("cannot write a {c}-channel PNG"))),
    };
    if s.is_empty() {
        return Err(Error::invalid("cannot write an empty image"));
    }
    encode_png(path.as_ref(), s.height, s.width, color, &x.to_u8())
}

/// Per-pixel heatmap intensities: `|Σ_c a|`, min-max scaled to `[0, 1]`; a constant
/// map becomes 0.5 everywhere.
pub fn heatmap_intensity<T: Scalar>(a: &Attribution<T>) -> Result<Tensor<T>> {
    let s = a.values.shape();
    if s.is_empty() {
        return Err(Error::invalid("cannot render an empty attribution"));
    }
    let mag = Tensor::from_fn(Shape::new(s.height, s.width, 1), |r, c, _| {
        (0..s.channels)
            .fold(T::zero(), |acc, ch| acc + a.values.get(r, c, ch))
            .abs()
    });
    let lo = mag.as_slice().iter().copied().fold(T::infinity(), T::min);
    let hi = mag.as_slice().iter().copied().fold(T::neg_infinity(), T::max);
    if hi == lo {
        return Ok(Tensor::filled(mag.shape(), T::of(0.5)));
    }
    Ok(mag.map(|v| (v - lo) / (hi - lo)))
}

/// Grayscale PNG of per-pixel importance.
pub fn render_heatmap<T: Scalar>(a: &Attribution<T>, path: impl AsRef<Path>) -> Result<()> {
    write_png(&heatmap_intensity(a)?, path)
}

/// Binary mask from a PNG: a pixel is positive when any channel is nonzero.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let (shape, bytes) = decode_png(path.as_ref())?;
    let values = bytes
        .chunks(shape.channels)
        .map(|px| px.iter().any(|&b| b != 0))
        .collect();
    BinaryMask::new(shape.height, shape.width, values)
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.values().iter().map(|&v| if v { 255 } else { 0 }).collect();
    encode_png(path.as_ref(), mask.height(), mask.width(), png::ColorType::Grayscale, &bytes)
}

pub const ATTRIBUTION_FORMAT: &str = "pathattr-attribution";
pub const ATTRIBUTION_VERSION: u32 = 1;

/// JSON sidecar describing a raw attribution tensor (`<name>.bin`, little-endian f64
/// in row-major channel-last order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionSidecar {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub shape: Shape,
    pub method: Method,
    pub idgi: bool,
    pub steps: usize,
    pub baseline: String,
    pub class: usize,
    pub degenerate_steps: usize,
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_attribution<T: Scalar>(a: &Attribution<T>, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let bytes: Vec<u8> = a
        .values
        .as_slice()
        .iter()
        .flat_map(|v| v.as_f64().to_le_bytes())
        .collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let sidecar = AttributionSidecar {
        format: ATTRIBUTION_FORMAT.into(),
        version: ATTRIBUTION_VERSION,
        dtype: "f64-le".into(),
        shape: a.values.shape(),
        method: a.method,
        idgi: a.idgi,
        steps: a.steps,
        baseline: a.baseline.clone(),
        class: a.class,
        degenerate_steps: a.degenerate_steps,
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&json, text).map_err(|e| Error::io(&json, e))
}

pub fn read_attribution<T: Scalar>(dir: impl AsRef<Path>, stem: &str) -> Result<Attribution<T>> {
    let dir = dir.as_ref();
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let side: AttributionSidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", json.display())))?;
    if side.format != ATTRIBUTION_FORMAT || side.version != ATTRIBUTION_VERSION || side.dtype != "f64-le" {
        return Err(Error::Format(format!(
            "{}: unsupported attribution format {} v{} ({})",
            json.display(),
            side.format,
            side.version,
            side.dtype
        )));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != side.shape.len() * 8 {
        return Err(Error::Format(format!("{}: length does not match shape", bin.display())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| T::of(f64::from_le_bytes(b.try_into().unwrap())))
        .collect();
    Ok(Attribution {
        values: Tensor::new(side.shape, values).map_err(|e| Error::Format(e.to_string()))?,
        method: side.method,
        idgi: side.idgi,
        steps: side.steps,
        baseline: side.baseline,
        class: side.class,
        degenerate_steps: side.degenerate_steps,
    })
}
