//! Seeded distortions for robustness benchmarks.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_image, load_latent};
use crate::pipeline::Carrier;
use crate::rng::derive_seed;
use crate::tensor::{ImageBuffer, LatentTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    /// `p' = clamp(0.5 + factor * (p - 0.5))`.
    Contrast {
        #[serde(default = "half")]
        factor: f64,
    },
    /// Separable Gaussian, `sigma = radius / 2`, truncated at `3 sigma`,
    /// reflect padding.
    GaussianBlur {
        #[serde(default = "five")]
        radius: f64,
    },
    AdditiveNoise {
        sigma: f64,
    },
    Quantize8,
    CenterCrop {
        scale: f64,
    },
    RandomCrop {
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Centered `size x size` latent window, offset `ceil((H - size) / 2)`.
    LatentCenterCrop {
        size: usize,
    },
    /// Replace the carrier with `<dir>/<trial_id>.png` (or `.pmlt`).
    External {
        dir: PathBuf,
    },
}

fn half() -> f64 {
    0.5
}

fn five() -> f64 {
    5.0
}

/// Per-application inputs beyond the spec itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackContext {
    pub seed: u64,
    /// Crop dimensions snap down to multiples of this (the codec factor).
    pub align: usize,
    pub trial_id: String,
}

impl Default for AttackContext {
    fn default() -> Self {
        Self {
            seed: 0,
            align: 1,
            trial_id: "0".into(),
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            AttackSpec::Contrast { factor } if !factor.is_finite() => {
                bad(format!("contrast factor {factor}"))
            }
            AttackSpec::GaussianBlur { radius } if !(radius >= 0.0 && radius.is_finite()) => {
                bad(format!("blur radius {radius} must be >= 0"))
            }
            AttackSpec::AdditiveNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("noise sigma {sigma} must be >= 0"))
            }
            AttackSpec::CenterCrop { scale } | AttackSpec::RandomCrop { scale, .. }
                if !(scale > 0.0 && scale <= 1.0) =>
            {
                bad(format!("crop scale {scale} outside (0, 1]"))
            }
            AttackSpec::LatentCenterCrop { size: 0 } => bad("latent crop size 0".into()),
            _ => Ok(()),
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::Contrast { factor } => format!("contrast({factor})"),
            AttackSpec::GaussianBlur { radius } => format!("blur({radius})"),
            AttackSpec::AdditiveNoise { sigma } => format!("noise({sigma})"),
            AttackSpec::Quantize8 => "quant8".into(),
            AttackSpec::CenterCrop { scale } => format!("center_crop({scale})"),
            AttackSpec::RandomCrop { scale, .. } => format!("random_crop({scale})"),
            AttackSpec::LatentCenterCrop { size } => format!("latent_crop({size})"),
            AttackSpec::External { .. } => "external".into(),
        }
    }
}

pub fn chain_label(chain: &[AttackSpec]) -> String {
    if chain.is_empty() {
        return "none".into();
    }
    chain
        .iter()
        .map(AttackSpec::label)
        .collect::<Vec<_>>()
        .join("+")
}

fn mismatch(spec: &AttackSpec, kind: &'static str) -> Error {
    Error::KindMismatch {
        attack: spec.label(),
        kind,
    }
}

/// Apply one attack. Deterministic in `(input, spec, ctx)`.
pub fn apply(input: &Carrier, spec: &AttackSpec, ctx: &AttackContext) -> Result<Carrier> {
    spec.validate()?;
    match (spec, input) {
        (AttackSpec::Contrast { factor }, Carrier::Image(img)) => {
            let f = *factor;
            map_image(img, |p| (0.5 + f * (p as f64 - 0.5)) as f32)
        }
        (AttackSpec::Quantize8, Carrier::Image(img)) => {
            map_image(img, |p| ((p as f64 * 255.0).round() / 255.0) as f32)
        }
        (AttackSpec::GaussianBlur { radius }, _) => {
            let kernel = gaussian_kernel(*radius / 2.0);
            Ok(map_planes(input, |plane, h, w| {
                blur_plane(plane, h, w, &kernel)
            })?)
        }
        (AttackSpec::AdditiveNoise { sigma }, _) => {
            let sigma = *sigma;
            if sigma == 0.0 {
                return Ok(input.clone());
            }
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            match input {
                Carrier::Image(img) => {
                    map_image(img, |p| (p as f64 + normal.sample(&mut rng)) as f32)
                }
                Carrier::Latent(lat) => {
                    let data = lat
                        .data()
                        .iter()
                        .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
                        .collect();
                    Ok(Carrier::Latent(LatentTensor::new(
                        lat.height(),
                        lat.width(),
                        lat.channels(),
                        data,
                    )?))
                }
            }
        }
        (AttackSpec::CenterCrop { scale }, _) => {
            let (h, w) = dims(input);
            let align = align_for(input, ctx);
            let (ch, cw) = (snap(h, *scale, align)?, snap(w, *scale, align)?);
            window(input, (h - ch) / 2, (w - cw) / 2, ch, cw)
        }
        (AttackSpec::RandomCrop { scale, seed }, _) => {
            let (h, w) = dims(input);
            let align = align_for(input, ctx);
            let (ch, cw) = (snap(h, *scale, align)?, snap(w, *scale, align)?);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*seed, &[ctx.seed]));
            let top = Uniform::new_inclusive(0, h - ch)
                .expect("range")
                .sample(&mut rng);
            let left = Uniform::new_inclusive(0, w - cw)
                .expect("range")
                .sample(&mut rng);
            window(input, top, left, ch, cw)
        }
        (AttackSpec::LatentCenterCrop { size }, Carrier::Latent(lat)) => {
            let s = *size;
            let (h, w) = (lat.height(), lat.width());
            if s > h || s > w {
                return Err(Error::Shape(format!("latent crop {s} exceeds {h}x{w}")));
            }
            Ok(Carrier::Latent(lat.window(
                (h - s).div_ceil(2),
                (w - s).div_ceil(2),
                s,
                s,
            )?))
        }
        (AttackSpec::External { dir }, _) => {
            let (ext, kind) = match input {
                Carrier::Image(_) => ("png", "image"),
                Carrier::Latent(_) => ("pmlt", "latent"),
            };
            let path = dir.join(format!("{}.{ext}", ctx.trial_id));
            Ok(match kind {
                "image" => Carrier::Image(load_image(&path)?),
                _ => Carrier::Latent(load_latent(&path)?),
            })
        }
        (AttackSpec::Contrast { .. } | AttackSpec::Quantize8, Carrier::Latent(_)) => {
            Err(mismatch(spec, "latent"))
        }
        (AttackSpec::LatentCenterCrop { .. }, Carrier::Image(_)) => Err(mismatch(spec, "image")),
    }
}

/// Apply attacks in order; step `i` sees seed `derive_seed(ctx.seed, [i])`.
pub fn apply_chain(input: &Carrier, chain: &[AttackSpec], ctx: &AttackContext) -> Result<Carrier> {
    let mut cur = input.clone();
    for (i, spec) in chain.iter().enumerate() {
        let step = AttackContext {
            seed: derive_seed(ctx.seed, &[i as u64]),
            ..ctx.clone()
        };
        cur = apply(&cur, spec, &step)?;
    }
    Ok(cur)
}

fn dims(c: &Carrier) -> (usize, usize) {
    match c {
        Carrier::Image(i) => (i.height(), i.width()),
        Carrier::Latent(l) => (l.height(), l.width()),
    }
}

fn align_for(c: &Carrier, ctx: &AttackContext) -> usize {
    match c {
        Carrier::Image(_) => ctx.align.max(1),
        Carrier::Latent(_) => 1,
    }
}

fn snap(n: usize, scale: f64, align: usize) -> Result<usize> {
    let raw = (scale * n as f64).floor() as usize;
    let s = raw / align * align;
    if s == 0 {
        return Err(Error::Shape(format!(
            "crop of {n} at scale {scale} is below the alignment {align}"
        )));
    }
    Ok(s)
}

fn window(c: &Carrier, top: usize, left: usize, h: usize, w: usize) -> Result<Carrier> {
    Ok(match c {
        Carrier::Image(i) => Carrier::Image(i.window(top, left, h, w)?),
        Carrier::Latent(l) => Carrier::Latent(l.window(top, left, h, w)?),
    })
}

fn map_image(img: &ImageBuffer, mut f: impl FnMut(f32) -> f32) -> Result<Carrier> {
    let data = img.data().iter().map(|&p| f(p)).collect();
    let (out, _) = ImageBuffer::from_clamped(img.height(), img.width(), img.channels(), data)?;
    Ok(Carrier::Image(out))
}

fn map_planes(c: &Carrier, f: impl Fn(&[f32], usize, usize) -> Vec<f32>) -> Result<Carrier> {
    let (h, w) = dims(c);
    Ok(match c {
        Carrier::Image(img) => {
            let data = (0..img.channels())
                .flat_map(|ch| f(img.plane(ch), h, w))
                .collect();
            Carrier::Image(ImageBuffer::from_clamped(h, w, img.channels(), data)?.0)
        }
        Carrier::Latent(lat) => {
            let data = (0..lat.channels())
                .flat_map(|ch| f(lat.plane(ch), h, w))
                .collect();
            Carrier::Latent(LatentTensor::new(h, w, lat.channels(), data)?)
        }
    })
}

/// Normalized taps `k[-r..=r]` stored from index 0.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Mirror without repeating the edge sample: -1 -> 1, n -> n-2.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

fn blur_plane(plane: &[f32], h: usize, w: usize, kernel: &[f64]) -> Vec<f32> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0f64; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &t)| t * row[reflect(x as i64 + k as i64 - r, w)] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, &t)| t * tmp[reflect(y as i64 + k as i64 - r, h) * w + x])
                .sum();
            out[y * w + x] = v as f32;
        }
    }
    out
}
