//! Real-valued containers for latents and images plus fidelity metrics.
//!
//! Both containers store samples channel-planar, row-major: all of channel 0,
//! then channel 1, and so on. This is also the PMLT on-disk order.

use crate::error::{Error, Result};

/// A real H×W×C tensor; the watermark carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl LatentTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_len(height, width, channels, data.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite latent value at index {pos}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    /// Copy out the `h`×`w` spatial window at (`top`, `left`), all channels.
    pub fn window(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::Shape(format!(
                "window {h}x{w} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Vec::with_capacity(h * w * self.channels);
        for ch in 0..self.channels {
            let plane = self.plane(ch);
            for r in top..top + h {
                out.extend_from_slice(&plane[r * self.width + left..r * self.width + left + w]);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            channels: self.channels,
            data: out,
        })
    }
}

/// An image with samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    /// Supported channel counts: gray, RGB, RGBA.
    pub const CHANNEL_COUNTS: [usize; 3] = [1, 3, 4];

    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if !Self::CHANNEL_COUNTS.contains(&channels) {
            return Err(Error::Shape(format!(
                "unsupported image channel count {channels}"
            )));
        }
        check_len(height, width, channels, data.len())?;
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format(format!(
                "pixel {} at index {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Build from arbitrary reals, clamping into [0, 1]. Returns the image and
    /// the number of samples that had to be clamped (NaN counts as clamped to 0).
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Result<(Self, usize)> {
        let mut clipped = 0;
        for v in &mut data {
            if !(0.0..=1.0).contains(v) {
                clipped += 1;
                *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            }
        }
        Ok((Self::new(height, width, channels, data)?, clipped))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn window(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::Shape(format!(
                "window {h}x{w} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut out = Vec::with_capacity(h * w * self.channels);
        for ch in 0..self.channels {
            let plane = self.plane(ch);
            for r in top..top + h {
                out.extend_from_slice(&plane[r * self.width + left..r * self.width + left + w]);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            channels: self.channels,
            data: out,
        })
    }
}

fn check_len(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Shape(format!(
            "zero-sized tensor {height}x{width}x{channels}"
        )));
    }
    if height * width * channels != len {
        return Err(Error::Shape(format!(
            "{height}x{width}x{channels} needs {} values, got {len}",
            height * width * channels
        )));
    }
    Ok(())
}

fn mean_squared_error(a: &[f32], b: &[f32]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / a.len() as f64
}

/// Peak signal-to-noise ratio in dB for [0, 1] images; `+inf` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(Error::Shape(format!(
            "psnr of {}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    let mse = mean_squared_error(&a.data, &b.data);
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

pub fn latent_mse(a: &LatentTensor, b: &LatentTensor) -> Result<f64> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(Error::Shape(format!(
            "mse of {}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    Ok(mean_squared_error(&a.data, &b.data))
}
