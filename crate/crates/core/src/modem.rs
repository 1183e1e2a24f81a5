//! Phase modulation of 2×2 blocks and the matching detectors.
//!
//! Block elements are row-major `[c1, c2, c3, c4]`; the left column (`c1`,
//! `c3`) holds the anchors for the relative-phase variants, the right column
//! (`c2`, `c4`) is modulated.
//!
//! | variant | embed                                             | detect (bit = score > 0)           |
//! |---------|---------------------------------------------------|------------------------------------|
//! | APM     | every phase forced to `+pi/2` (m=1) / `-pi/2`     | sum of the four phases             |
//! | PCQ     | every phase snapped to nearest point of `P_m`     | `D0 - D1`, total distance to sets  |
//! | IPS     | `∠c2 = ∠c1 + (1-m)pi`, `∠c4 = ∠c3 + (1-m)pi`        | `cos(∠c1-∠c2) + cos(∠c3-∠c4)`       |
//! | SPS     | `c_k = (1-γ)c_k + γ|c_k|e^{i(∠c_{k-1}+(1-m)pi)}`     | as IPS                             |
//!
//! A score of exactly zero decodes to bit 0. Zero-magnitude elements have
//! no phase: they are left at zero and read as phase 0, and both cases are
//! counted in the returned diagnostics.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::BlockPlan;
use crate::message::Message;
use crate::spectrum::ChannelSpectrum;

pub type BlockValues = [Complex64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Apm,
    Pcq,
    Ips,
    Sps,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Apm, Variant::Pcq, Variant::Ips, Variant::Sps];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Apm => "apm",
            Variant::Pcq => "pcq",
            Variant::Ips => "ips",
            Variant::Sps => "sps",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "apm" => Ok(Variant::Apm),
            "pcq" => Ok(Variant::Pcq),
            "ips" => Ok(Variant::Ips),
            "sps" => Ok(Variant::Sps),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Phase sets for PCQ. Each set is kept sorted ascending so that
/// equidistant ties resolve to the smaller phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstellations")]
pub struct PcqConstellations {
    p0: Vec<f64>,
    p1: Vec<f64>,
}

#[derive(Deserialize)]
struct RawConstellations {
    p0: Vec<f64>,
    p1: Vec<f64>,
}

impl TryFrom<RawConstellations> for PcqConstellations {
    type Error = Error;

    fn try_from(r: RawConstellations) -> Result<Self> {
        PcqConstellations::new(r.p0, r.p1)
    }
}

/// Smallest admissible distance between a `P0` and a `P1` point.
pub const MIN_CONSTELLATION_SEPARATION: f64 = FRAC_PI_4;

impl PcqConstellations {
    pub fn new(mut p0: Vec<f64>, mut p1: Vec<f64>) -> Result<Self> {
        if p0.is_empty() || p1.is_empty() {
            return Err(Error::Config("constellation sets must be non-empty".into()));
        }
        for p in p0.iter().chain(&p1) {
            if !(*p > -PI && *p <= PI) {
                return Err(Error::Config(format!(
                    "constellation phase {p} outside (-pi, pi]"
                )));
            }
        }
        for a in &p0 {
            for b in &p1 {
                // Allow one ulp of slack so that exact multiples of pi/4 pass.
                if angular_distance(*a, *b) < MIN_CONSTELLATION_SEPARATION * (1.0 - 1e-12) {
                    return Err(Error::Config(format!(
                        "constellation points {a} and {b} closer than pi/4"
                    )));
                }
            }
        }
        p0.sort_by(f64::total_cmp);
        p1.sort_by(f64::total_cmp);
        Ok(Self { p0, p1 })
    }

    pub fn set(&self, bit: bool) -> &[f64] {
        if bit {
            &self.p1
        } else {
            &self.p0
        }
    }
}

impl Default for PcqConstellations {
    /// Interleaved 8-PSK: `P1 = {±pi/4, ±3pi/4}`, `P0 = {0, ±pi/2, pi}`.
    fn default() -> Self {
        Self::new(
            vec![-FRAC_PI_2, 0.0, FRAC_PI_2, PI],
            vec![-3.0 * FRAC_PI_4, -FRAC_PI_4, FRAC_PI_4, 3.0 * FRAC_PI_4],
        )
        .expect("default constellations are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SpsParams {
    gamma: f64,
}

impl SpsParams {
    pub const DEFAULT_GAMMA: f64 = 0.8;

    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("SPS gamma {gamma} outside [0, 1]")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for SpsParams {
    fn default() -> Self {
        Self {
            gamma: Self::DEFAULT_GAMMA,
        }
    }
}

impl TryFrom<f64> for SpsParams {
    type Error = Error;

    fn try_from(g: f64) -> Result<Self> {
        SpsParams::new(g)
    }
}

impl From<SpsParams> for f64 {
    fn from(p: SpsParams) -> f64 {
        p.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModemParams {
    pub pcq: PcqConstellations,
    pub gamma: SpsParams,
}

/// Minimum angular distance between two phases, in `[0, pi]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Phase in `(-pi, pi]`; zero maps to 0.
#[inline]
pub fn phase(c: Complex64) -> f64 {
    let p = c.im.atan2(c.re);
    if p == -PI {
        PI
    } else {
        p
    }
}

#[inline]
fn is_zero(c: Complex64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

/// Per-block embedding diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockEmbed {
    /// The block could not carry its bit (zero anchor under IPS/SPS).
    pub skipped: bool,
    /// Elements without a phase that were left at zero.
    pub zero_elements: u32,
    /// Which of `c1..c4` were written.
    pub written: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDetect {
    pub bit: bool,
    pub score: f64,
    pub zero_elements: u32,
}

/// `|c| · e^{i(∠anchor + (1-m)pi)}`, computed without trigonometry.
#[inline]
fn sync_target(anchor: Complex64, c: Complex64, bit: bool) -> Complex64 {
    let unit = anchor / anchor.norm();
    let t = unit * c.norm();
    if bit {
        t
    } else {
        -t
    }
}

fn snap(phase_in: f64, set: &[f64]) -> f64 {
    let mut best = set[0];
    let mut best_d = angular_distance(phase_in, best);
    for &p in &set[1..] {
        let d = angular_distance(phase_in, p);
        if d < best_d {
            best = p;
            best_d = d;
        }
    }
    best
}

pub fn embed_block(
    block: &BlockValues,
    bit: bool,
    variant: Variant,
    params: &ModemParams,
) -> (BlockValues, BlockEmbed) {
    let mut out = *block;
    let mut info = BlockEmbed::default();
    match variant {
        Variant::Apm | Variant::Pcq => {
            for (k, c) in out.iter_mut().enumerate() {
                if is_zero(*c) {
                    info.zero_elements += 1;
                    continue;
                }
                let mag = c.norm();
                *c = match variant {
                    // ±pi/2 exactly: purely imaginary.
                    Variant::Apm => Complex64::new(0.0, if bit { mag } else { -mag }),
                    _ => Complex64::from_polar(mag, snap(phase(*c), params.pcq.set(bit))),
                };
                info.written[k] = true;
            }
        }
        Variant::Ips | Variant::Sps => {
            if is_zero(block[0]) || is_zero(block[2]) {
                info.skipped = true;
                info.zero_elements += u32::from(is_zero(block[0])) + u32::from(is_zero(block[2]));
                return (out, info);
            }
            let gamma = params.gamma.gamma();
            for (k, anchor) in [(1, 0), (3, 2)] {
                let target = sync_target(block[anchor], block[k], bit);
                out[k] = if variant == Variant::Ips || gamma == 1.0 {
                    target
                } else {
                    block[k] * (1.0 - gamma) + target * gamma
                };
                if is_zero(block[k]) {
                    info.zero_elements += 1;
                } else {
                    info.written[k] = true;
                }
            }
        }
    }
    (out, info)
}

pub fn detect_block(block: &BlockValues, variant: Variant, params: &ModemParams) -> BlockDetect {
    let zero_elements = block.iter().filter(|c| is_zero(**c)).count() as u32;
    let phases = block.map(phase);
    let score = match variant {
        Variant::Apm => phases.iter().sum(),
        Variant::Pcq => {
            let total = |set: &[f64]| -> f64 {
                phases
                    .iter()
                    .map(|&p| {
                        set.iter()
                            .map(|&q| angular_distance(p, q))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum()
            };
            total(params.pcq.set(false)) - total(params.pcq.set(true))
        }
        Variant::Ips | Variant::Sps => {
            (phases[0] - phases[1]).cos() + (phases[2] - phases[3]).cos()
        }
    };
    BlockDetect {
        bit: score > 0.0,
        score,
        zero_elements,
    }
}

/// Aggregate diagnostics for a message-level embed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageEmbed {
    /// Per channel, the unshifted bins that were written.
    pub touched: Vec<Vec<(usize, usize)>>,
    pub skipped_blocks: usize,
    pub zero_elements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub message: Message,
    /// Raw detector score per bit, in message order.
    pub scores: Vec<f64>,
    pub zero_elements: usize,
}

fn check_spectra(spectra: &[ChannelSpectrum], plan: &BlockPlan) -> Result<()> {
    if spectra.len() < plan.n_channels() {
        return Err(Error::Shape(format!(
            "plan needs {} channels, got {} spectra",
            plan.n_channels(),
            spectra.len()
        )));
    }
    let n = plan.crop_size();
    if let Some(s) = spectra.iter().find(|s| s.height() != n || s.width() != n) {
        return Err(Error::Shape(format!(
            "{}x{} spectrum for a {n}x{n} plan",
            s.height(),
            s.width()
        )));
    }
    Ok(())
}

fn read_block(s: &ChannelSpectrum, bins: &[(usize, usize); 4]) -> BlockValues {
    bins.map(|(r, c)| s.get(r, c))
}

pub fn embed_message(
    spectra: &mut [ChannelSpectrum],
    plan: &BlockPlan,
    message: &Message,
    variant: Variant,
    params: &ModemParams,
) -> Result<MessageEmbed> {
    if message.len() != plan.capacity() {
        return Err(Error::Length {
            expected: plan.capacity(),
            actual: message.len(),
        });
    }
    check_spectra(spectra, plan)?;
    let n = plan.crop_size();
    let mut out = MessageEmbed {
        touched: vec![Vec::new(); plan.n_channels()],
        ..Default::default()
    };
    for (ch, spec) in spectra.iter_mut().enumerate().take(plan.n_channels()) {
        for (i, pos) in plan.blocks(ch).iter().enumerate() {
            let bins = pos.bins(n);
            let bit = message.get(plan.bit_index(ch, i));
            let (values, info) = embed_block(&read_block(spec, &bins), bit, variant, params);
            out.skipped_blocks += usize::from(info.skipped);
            out.zero_elements += info.zero_elements as usize;
            for (k, &(r, c)) in bins.iter().enumerate() {
                if info.written[k] {
                    spec.set(r, c, values[k]);
                    out.touched[ch].push((r, c));
                }
            }
        }
    }
    Ok(out)
}

pub fn extract_message(
    spectra: &[ChannelSpectrum],
    plan: &BlockPlan,
    variant: Variant,
    params: &ModemParams,
) -> Result<Extraction> {
    check_spectra(spectra, plan)?;
    let n = plan.crop_size();
    let mut message = Message::zeros(plan.capacity());
    let mut scores = vec![0.0; plan.capacity()];
    let mut zero_elements = 0;
    for (ch, spec) in spectra.iter().enumerate().take(plan.n_channels()) {
        for (i, pos) in plan.blocks(ch).iter().enumerate() {
            let d = detect_block(&read_block(spec, &pos.bins(n)), variant, params);
            let idx = plan.bit_index(ch, i);
            message.set(idx, d.bit);
            scores[idx] = d.score;
            zero_elements += d.zero_elements as usize;
        }
    }
    Ok(Extraction {
        message,
        scores,
        zero_elements,
    })
}
