//! Image <-> latent transforms that stand in for a learned autoencoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ImageBuffer, LatentTensor};

pub const DEFAULT_FACTOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodecSpec {
    /// Latents are read and written directly; there is no image stage.
    #[default]
    Identity,
    /// Grayscale `H x W` to `(H/f) x (W/f) x f^2` by pixel rearrangement.
    SpaceToDepth {
        #[serde(default = "default_factor")]
        factor: usize,
    },
    /// `f x f` block means per channel; decode is nearest-neighbour upsampling.
    BlockMean {
        #[serde(default = "default_factor")]
        factor: usize,
    },
}

fn default_factor() -> usize {
    DEFAULT_FACTOR
}

/// Image produced by [`CodecSpec::decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub image: ImageBuffer,
    /// Samples that fell outside [0, 1] and were clamped.
    pub clipped: usize,
}

impl Decoded {
    pub fn clip_fraction(&self) -> f64 {
        self.clipped as f64 / self.image.data().len() as f64
    }
}

impl CodecSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CodecSpec::Identity => "identity",
            CodecSpec::SpaceToDepth { .. } => "s2d",
            CodecSpec::BlockMean { .. } => "blockmean",
        }
    }

    /// Parse a CLI name; image codecs take `factor`.
    pub fn from_name(name: &str, factor: usize) -> Result<Self> {
        let spec = match name {
            "identity" => CodecSpec::Identity,
            "s2d" | "space_to_depth" => CodecSpec::SpaceToDepth { factor },
            "blockmean" | "block_mean" => CodecSpec::BlockMean { factor },
            other => return Err(Error::Config(format!("unknown codec '{other}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.factor() {
            Some(0) => Err(Error::Config("codec factor must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn factor(&self) -> Option<usize> {
        match *self {
            CodecSpec::Identity => None,
            CodecSpec::SpaceToDepth { factor } | CodecSpec::BlockMean { factor } => Some(factor),
        }
    }

    /// Spatial alignment an image must satisfy (1 for identity).
    pub fn align(&self) -> usize {
        self.factor().unwrap_or(1)
    }

    pub fn has_image_stage(&self) -> bool {
        !matches!(self, CodecSpec::Identity)
    }

    /// Latent channel count for an image with `image_channels` channels.
    pub fn latent_channels(&self, image_channels: usize) -> usize {
        match *self {
            CodecSpec::Identity | CodecSpec::BlockMean { .. } => image_channels,
            CodecSpec::SpaceToDepth { factor } => factor * factor,
        }
    }

    fn check_dims(&self, h: usize, w: usize, f: usize) -> Result<()> {
        if h == 0 || w == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
            return Err(Error::Shape(format!(
                "{h}x{w} image is not divisible by the {} factor {f}",
                self.name()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, img: &ImageBuffer) -> Result<LatentTensor> {
        let (h, w, c) = (img.height(), img.width(), img.channels());
        match *self {
            CodecSpec::Identity => Err(Error::Config(
                "identity codec has no image stage; use latent files".into(),
            )),
            CodecSpec::SpaceToDepth { factor: f } => {
                if c != 1 {
                    return Err(Error::Shape(format!(
                        "space-to-depth expects a grayscale image, got {c} channels"
                    )));
                }
                self.check_dims(h, w, f)?;
                let (lh, lw) = (h / f, w / f);
                let src = img.plane(0);
                let mut data = vec![0.0f32; lh * lw * f * f];
                for dy in 0..f {
                    for dx in 0..f {
                        let plane = &mut data[(dy * f + dx) * lh * lw..][..lh * lw];
                        for i in 0..lh {
                            for j in 0..lw {
                                plane[i * lw + j] = src[(i * f + dy) * w + j * f + dx];
                            }
                        }
                    }
                }
                LatentTensor::new(lh, lw, f * f, data)
            }
            CodecSpec::BlockMean { factor: f } => {
                self.check_dims(h, w, f)?;
                let (lh, lw) = (h / f, w / f);
                let mut data = vec![0.0f32; lh * lw * c];
                let norm = (f * f) as f64;
                for ch in 0..c {
                    let src = img.plane(ch);
                    let dst = &mut data[ch * lh * lw..][..lh * lw];
                    for i in 0..lh {
                        for j in 0..lw {
                            let mut sum = 0.0f64;
                            for y in i * f..(i + 1) * f {
                                for &v in &src[y * w + j * f..y * w + (j + 1) * f] {
                                    sum += v as f64;
                                }
                            }
                            dst[i * lw + j] = (sum / norm) as f32;
                        }
                    }
                }
                LatentTensor::new(lh, lw, c, data)
            }
        }
    }

    pub fn decode(&self, lat: &LatentTensor) -> Result<Decoded> {
        let (lh, lw, lc) = (lat.height(), lat.width(), lat.channels());
        let (h, w, c, data) = match *self {
            CodecSpec::Identity => {
                return Err(Error::Config(
                    "identity codec has no image stage; use latent files".into(),
                ))
            }
            CodecSpec::SpaceToDepth { factor: f } => {
                if lc != f * f {
                    return Err(Error::Shape(format!(
                        "space-to-depth f={f} expects {} latent channels, got {lc}",
                        f * f
                    )));
                }
                let (h, w) = (lh * f, lw * f);
                let mut data = vec![0.0f32; h * w];
                for dy in 0..f {
                    for dx in 0..f {
                        let plane = lat.plane(dy * f + dx);
                        for i in 0..lh {
                            for j in 0..lw {
                                data[(i * f + dy) * w + j * f + dx] = plane[i * lw + j];
                            }
                        }
                    }
                }
                (h, w, 1, data)
            }
            CodecSpec::BlockMean { factor: f } => {
                if !ImageBuffer::CHANNEL_COUNTS.contains(&lc) {
                    return Err(Error::Shape(format!(
                        "block-mean latent has {lc} channels; images carry 1, 3 or 4"
                    )));
                }
                let (h, w) = (lh * f, lw * f);
                let mut data = vec![0.0f32; h * w * lc];
                for ch in 0..lc {
                    let plane = lat.plane(ch);
                    let dst = &mut data[ch * h * w..][..h * w];
                    for y in 0..h {
                        let row = &plane[(y / f) * lw..][..lw];
                        for (x, v) in dst[y * w..(y + 1) * w].iter_mut().enumerate() {
                            *v = row[x / f];
                        }
                    }
                }
                (h, w, lc, data)
            }
        };
        let (image, clipped) = ImageBuffer::from_clamped(h, w, c, data)?;
        Ok(Decoded { image, clipped })
    }
}
