//! 8-bit PNG ingestion and emission. Samples map to `[0, 1]` by `/255` on
//! read and back by round-half-up of `x * 255` (clamped) on write.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use thiserror::Error;

use crate::image::ImageBuffer;

#[derive(Debug, Error)]
pub enum PngError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Decode { path: String, source: png::DecodingError },
    #[error("{path}: {source}")]
    Encode { path: String, source: png::EncodingError },
    #[error("{path}: unsupported PNG layout ({what})")]
    Unsupported { path: String, what: String },
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer, PngError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| PngError::Io { path: name.clone(), source })?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|source| PngError::Decode { path: name.clone(), source })?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|source| PngError::Decode { path: name.clone(), source })?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (src_ch, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => {
            return Err(PngError::Unsupported { path: name, what: format!("{other:?}") });
        }
    };
    let bytes = &buf[..info.buffer_size()];
    let mut data = Vec::with_capacity(h * w * keep);
    for px in bytes.chunks_exact(src_ch).take(h * w) {
        data.extend(px[..keep].iter().map(|&b| b as f64 / 255.0));
    }
    ImageBuffer::new(h, w, keep, data).map_err(|e| PngError::Unsupported { path: name, what: e.to_string() })
}

/// Round-half-up quantization of a `[0, 1]` sample.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn write_png(path: impl AsRef<Path>, image: &ImageBuffer) -> Result<(), PngError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let (h, w, ch) = image.shape();
    let color = match ch {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        n => return Err(PngError::Unsupported { path: name, what: format!("{n} channels") }),
    };
    let file = File::create(path).map_err(|source| PngError::Io { path: name.clone(), source })?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|source| PngError::Encode { path: name.clone(), source })?;
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    writer.write_image_data(&bytes).map_err(|source| PngError::Encode { path: name, source })?;
    Ok(())
}
