//! File I/O: the PMLT latent container and 8-bit PNG / PGM / PPM images.
//!
//! PMLT layout (little-endian):
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | magic `PMLT`                              |
//! | 4      | version = 1                               |
//! | 5      | dtype = 1 (IEEE-754 binary32)             |
//! | 6      | ndim = 3                                  |
//! | 7      | reserved = 0                              |
//! | 8..20  | H, W, C as `u32`                          |
//! | 20..   | H·W·C `f32`, channel-planar row-major     |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::tensor::{ImageBuffer, LatentTensor};

pub const PMLT_MAGIC: &[u8; 4] = b"PMLT";
pub const PMLT_VERSION: u8 = 1;
pub const PMLT_DTYPE_F32: u8 = 1;
pub const PMLT_HEADER_LEN: usize = 20;

pub fn encode_latent(t: &LatentTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(PMLT_HEADER_LEN + 4 * t.data().len());
    out.extend_from_slice(PMLT_MAGIC);
    out.extend_from_slice(&[PMLT_VERSION, PMLT_DTYPE_F32, 3, 0]);
    for dim in [t.height(), t.width(), t.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse a PMLT byte stream. A short payload is reported as an
/// `UnexpectedEof` I/O error attributed to `origin`.
pub fn decode_latent(bytes: &[u8], origin: &Path) -> Result<LatentTensor> {
    let eof = |what: &str| {
        Error::io(
            origin,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, what.to_string()),
        )
    };
    if bytes.len() < 8 {
        return Err(eof("truncated PMLT header"));
    }
    if &bytes[0..4] != PMLT_MAGIC {
        return Err(Error::Format(format!("bad PMLT magic {:?}", &bytes[0..4])));
    }
    if bytes[4] != PMLT_VERSION {
        return Err(Error::Format(format!(
            "unsupported PMLT version {}",
            bytes[4]
        )));
    }
    if bytes[5] != PMLT_DTYPE_F32 {
        return Err(Error::Format(format!(
            "unsupported PMLT dtype {}",
            bytes[5]
        )));
    }
    if bytes[6] != 3 {
        return Err(Error::Format(format!(
            "PMLT ndim must be 3, got {}",
            bytes[6]
        )));
    }
    if bytes[7] != 0 {
        return Err(Error::Format("PMLT reserved byte must be 0".into()));
    }
    if bytes.len() < PMLT_HEADER_LEN {
        return Err(eof("truncated PMLT dims"));
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Format(format!("zero PMLT dimension {h}x{w}x{c}")));
    }
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::Format("PMLT dimensions overflow".into()))?;
    let payload = &bytes[PMLT_HEADER_LEN..];
    if payload.len() < count * 4 {
        return Err(eof("truncated PMLT payload"));
    }
    if payload.len() > count * 4 {
        return Err(Error::Format(format!(
            "{} trailing bytes after PMLT payload",
            payload.len() - count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    LatentTensor::new(h, w, c, data)
}

pub fn save_latent(t: &LatentTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_latent(t)).map_err(|e| Error::io(path, e))
}

pub fn load_latent(path: impl AsRef<Path>) -> Result<LatentTensor> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_latent(&bytes, path)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        other => {
            return Err(Error::Format(format!(
                "unsupported sample layout {:?}; only 8-bit gray, RGB and RGBA are accepted",
                other.color()
            )))
        }
    };
    let mut data = vec![0f32; raw.len()];
    for (i, v) in raw.iter().enumerate() {
        let (pixel, ch) = (i / channels, i % channels);
        data[ch * h * w + pixel] = *v as f32 / 255.0;
    }
    ImageBuffer::new(h, w, channels, data)
}

fn quantize(v: f32) -> u8 {
    (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Save as PNG, PGM or PPM (chosen by extension). Samples are stored as
/// `round(v * 255)`.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut raw = vec![0u8; h * w * c];
    for ch in 0..c {
        for (pixel, v) in img.plane(ch).iter().enumerate() {
            raw[pixel * c + ch] = quantize(*v);
        }
    }
    let color = match c {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => ExtendedColorType::Rgba8,
    };
    let format = ImageFormat::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let result = match format {
        ImageFormat::Png => image::codecs::png::PngEncoder::new(&mut writer)
            .write_image(&raw, w as u32, h as u32, color),
        ImageFormat::Pnm => {
            let subtype = match c {
                1 => PnmSubtype::Graymap(SampleEncoding::Binary),
                3 => PnmSubtype::Pixmap(SampleEncoding::Binary),
                _ => {
                    return Err(Error::Format(
                        "PGM/PPM cannot store 4-channel images; use PNG".into(),
                    ))
                }
            };
            PnmEncoder::new(&mut writer)
                .with_subtype(subtype)
                .write_image(&raw, w as u32, h as u32, color)
        }
        other => {
            return Err(Error::Format(format!("unsupported image format {other:?}")));
        }
    };
    result.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Dispatch on extension: `.pmlt` is a latent, anything else an image.
pub fn is_latent_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pmlt"))
}
