//! End-to-end embedding and blind detection.
//!
//! Embed: codec encode, centered crop, per-channel DFT, block modulation,
//! Hermitian restore, inverse DFT, realize, paste back, codec decode.
//! Detection runs the same path up to the DFT and demodulates; the block plan
//! is rebuilt from the configuration, nothing travels with the carrier.

use serde::{Deserialize, Serialize};

use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::layout::{BandConfig, BlockPlan};
use crate::message::Message;
use crate::modem::{embed_message, extract_message, Extraction, ModemParams, Variant};
use crate::spectrum::{enforce_hermitian, realize, ChannelSpectrum, Fft2, RealizeMode};
use crate::stats::{bonferroni_threshold, threshold, Codebook, ThresholdSpec};
use crate::tensor::{ImageBuffer, LatentTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub band: BandConfig,
    pub variant: Variant,
    pub modem: ModemParams,
    pub codec: CodecSpec,
    pub realize: RealizeMode,
    /// Exhaustive shift search radius in latent bins; 0 disables it.
    pub translation_search: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            band: BandConfig::default(),
            variant: Variant::Ips,
            modem: ModemParams::default(),
            codec: CodecSpec::Identity,
            realize: RealizeMode::Restored,
            translation_search: 0,
        }
    }
}

/// Where a crop came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

pub fn center_offset(h: usize, w: usize, s: usize) -> Result<(usize, usize)> {
    if s == 0 || s > h || s > w {
        return Err(Error::Shape(format!(
            "crop {s} does not fit a {h}x{w} latent"
        )));
    }
    Ok(((h - s) / 2, (w - s) / 2))
}

pub fn crop_center(lat: &LatentTensor, s: usize) -> Result<(LatentTensor, Placement)> {
    let (top, left) = center_offset(lat.height(), lat.width(), s)?;
    Ok((
        lat.window(top, left, s, s)?,
        Placement { top, left, size: s },
    ))
}

pub fn paste_center(
    lat: &LatentTensor,
    crop: &LatentTensor,
    at: Placement,
) -> Result<LatentTensor> {
    let s = at.size;
    if crop.height() != s || crop.width() != s || crop.channels() != lat.channels() {
        return Err(Error::Shape(format!(
            "{}x{}x{} crop for a {s}x{s}x{} placement",
            crop.height(),
            crop.width(),
            crop.channels(),
            lat.channels()
        )));
    }
    if at.top + s > lat.height() || at.left + s > lat.width() {
        return Err(Error::Shape("placement outside the latent".into()));
    }
    let mut out = lat.clone();
    let w = lat.width();
    for ch in 0..lat.channels() {
        let src = crop.plane(ch);
        let dst = out.plane_mut(ch);
        for r in 0..s {
            dst[(at.top + r) * w + at.left..][..s].copy_from_slice(&src[r * s..(r + 1) * s]);
        }
    }
    Ok(out)
}

/// Input or output of the pipeline: images go through the codec, latents
/// are used as they are.
#[derive(Debug, Clone, PartialEq)]
pub enum Carrier {
    Latent(LatentTensor),
    Image(ImageBuffer),
}

impl Carrier {
    pub fn kind(&self) -> &'static str {
        match self {
            Carrier::Latent(_) => "latent",
            Carrier::Image(_) => "image",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbedDiagnostics {
    /// Largest `|Im|` of the inverse transform over all carrier channels.
    pub max_imag_residual: f64,
    /// Largest `|Re|` of the same.
    pub max_real: f64,
    pub clipped: usize,
    pub clip_fraction: f64,
    pub skipped_blocks: usize,
    pub zero_elements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub output: Carrier,
    /// Watermarked latent before any decode.
    pub latent: LatentTensor,
    pub diagnostics: EmbedDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Verify,
    Identify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectDiagnostics {
    pub zero_elements: usize,
    /// Latent shift `(rows, cols)` of the best window relative to center.
    pub shift: [i64; 2],
    /// Number of windows tried; 1 without translation search.
    pub candidate_shifts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub task: Task,
    pub variant: Variant,
    pub bits: usize,
    /// Extracted message, hex MSB-first.
    pub message: String,
    pub scores: Vec<f64>,
    pub matches: usize,
    pub bit_accuracy: f64,
    /// Best codebook entry (identification only).
    pub user: Option<usize>,
    pub decision: bool,
    pub threshold: ThresholdSpec,
    pub diagnostics: DetectDiagnostics,
}

struct ShiftSearch<T> {
    extraction: Extraction,
    matches: usize,
    extra: T,
    shift: (i64, i64),
    tried: usize,
}

/// A configured pipeline with its block plan and FFT plans prepared.
#[derive(Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    plan: BlockPlan,
    fft: Fft2,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.codec.validate()?;
        let plan = BlockPlan::build(&cfg.band)?;
        let n = cfg.band.crop_size();
        Ok(Self {
            fft: Fft2::new(n, n)?,
            plan,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &BlockPlan {
        &self.plan
    }

    pub fn message_bits(&self) -> usize {
        self.plan.capacity()
    }

    fn check_latent(&self, lat: &LatentTensor) -> Result<()> {
        let s = self.plan.crop_size();
        if lat.height() < s || lat.width() < s {
            return Err(Error::Shape(format!(
                "{}x{} latent is smaller than the {s}x{s} crop",
                lat.height(),
                lat.width()
            )));
        }
        if lat.channels() < self.plan.n_channels() {
            return Err(Error::Shape(format!(
                "latent has {} channels, the plan modulates {}",
                lat.channels(),
                self.plan.n_channels()
            )));
        }
        Ok(())
    }

    fn spectra_at(
        &self,
        lat: &LatentTensor,
        top: usize,
        left: usize,
    ) -> Result<Vec<ChannelSpectrum>> {
        let s = self.plan.crop_size();
        let w = lat.width();
        (0..self.plan.n_channels())
            .map(|ch| {
                let plane = lat.plane(ch);
                let mut window = Vec::with_capacity(s * s);
                for r in 0..s {
                    window.extend_from_slice(&plane[(top + r) * w + left..][..s]);
                }
                self.fft.forward(&window)
            })
            .collect()
    }

    /// The watermark transform on a latent (no codec).
    pub fn embed_latent(
        &self,
        lat: &LatentTensor,
        message: &Message,
    ) -> Result<(LatentTensor, EmbedDiagnostics)> {
        self.check_latent(lat)?;
        if message.len() != self.plan.capacity() {
            return Err(Error::Length {
                expected: self.plan.capacity(),
                actual: message.len(),
            });
        }
        let s = self.plan.crop_size();
        let (top, left) = center_offset(lat.height(), lat.width(), s)?;
        let mut spectra = self.spectra_at(lat, top, left)?;
        let info = embed_message(
            &mut spectra,
            &self.plan,
            message,
            self.cfg.variant,
            &self.cfg.modem,
        )?;
        let mut out = lat.clone();
        let w = lat.width();
        let mut diag = EmbedDiagnostics {
            skipped_blocks: info.skipped_blocks,
            zero_elements: info.zero_elements,
            ..Default::default()
        };
        for (ch, spec) in spectra.iter_mut().enumerate() {
            if self.cfg.realize == RealizeMode::Restored {
                enforce_hermitian(spec, &info.touched[ch])?;
            }
            let grid = self.fft.inverse(spec)?;
            diag.max_imag_residual = diag.max_imag_residual.max(grid.max_imag());
            diag.max_real = diag.max_real.max(grid.max_real());
            let real = realize(&grid, self.cfg.realize)?;
            let dst = out.plane_mut(ch);
            for r in 0..s {
                for (d, &v) in dst[(top + r) * w + left..][..s]
                    .iter_mut()
                    .zip(&real[r * s..(r + 1) * s])
                {
                    *d = v as f32;
                }
            }
        }
        if let Some(bad) = out.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "embedding produced non-finite value {bad}"
            )));
        }
        Ok((out, diag))
    }

    pub fn embed(&self, input: &Carrier, message: &Message) -> Result<Embedded> {
        match input {
            Carrier::Latent(lat) => {
                let (latent, diagnostics) = self.embed_latent(lat, message)?;
                Ok(Embedded {
                    output: Carrier::Latent(latent.clone()),
                    latent,
                    diagnostics,
                })
            }
            Carrier::Image(img) => {
                let lat = self.cfg.codec.encode(img)?;
                let (latent, mut diagnostics) = self.embed_latent(&lat, message)?;
                let decoded = self.cfg.codec.decode(&latent)?;
                diagnostics.clipped = decoded.clipped;
                diagnostics.clip_fraction = decoded.clip_fraction();
                Ok(Embedded {
                    output: Carrier::Image(decoded.image),
                    latent,
                    diagnostics,
                })
            }
        }
    }

    pub fn to_latent(&self, input: &Carrier) -> Result<LatentTensor> {
        let lat = match input {
            Carrier::Latent(lat) => lat.clone(),
            Carrier::Image(img) => self.cfg.codec.encode(img)?,
        };
        self.check_latent(&lat)?;
        Ok(lat)
    }

    /// Demodulate the centered window shifted by `(dy, dx)` latent bins.
    pub fn extract_shifted(&self, lat: &LatentTensor, dy: i64, dx: i64) -> Result<Extraction> {
        self.check_latent(lat)?;
        let s = self.plan.crop_size();
        let (top, left) = center_offset(lat.height(), lat.width(), s)?;
        let top = top as i64 + dy;
        let left = left as i64 + dx;
        if top < 0 || left < 0 || top as usize + s > lat.height() || left as usize + s > lat.width()
        {
            return Err(Error::Shape(format!(
                "shift ({dy}, {dx}) leaves the latent"
            )));
        }
        let spectra = self.spectra_at(lat, top as usize, left as usize)?;
        extract_message(&spectra, &self.plan, self.cfg.variant, &self.cfg.modem)
    }

    pub fn extract(&self, lat: &LatentTensor) -> Result<Extraction> {
        self.extract_shifted(lat, 0, 0)
    }

    /// Admissible shifts, center first, then row-major.
    fn shifts(&self, lat: &LatentTensor) -> Result<Vec<(i64, i64)>> {
        let s = self.plan.crop_size();
        let (top, left) = center_offset(lat.height(), lat.width(), s)?;
        let rad = self.cfg.translation_search as i64;
        let mut out = vec![(0, 0)];
        for dy in -rad..=rad {
            for dx in -rad..=rad {
                let (t, l) = (top as i64 + dy, left as i64 + dx);
                let fits = t >= 0
                    && l >= 0
                    && t as usize + s <= lat.height()
                    && l as usize + s <= lat.width();
                if fits && (dy, dx) != (0, 0) {
                    out.push((dy, dx));
                }
            }
        }
        Ok(out)
    }

    /// Search shifts for the extraction maximizing `score`; ties keep the
    /// earliest shift.
    fn best_over_shifts<T>(
        &self,
        lat: &LatentTensor,
        score: impl Fn(&Extraction) -> Result<(usize, T)>,
    ) -> Result<ShiftSearch<T>> {
        let shifts = self.shifts(lat)?;
        let mut best: Option<ShiftSearch<T>> = None;
        for &(dy, dx) in &shifts {
            let ex = self.extract_shifted(lat, dy, dx)?;
            let (matches, extra) = score(&ex)?;
            if best.as_ref().is_none_or(|b| matches > b.matches) {
                best = Some(ShiftSearch {
                    extraction: ex,
                    matches,
                    extra,
                    shift: (dy, dx),
                    tried: shifts.len(),
                });
            }
        }
        Ok(best.expect("center shift always present"))
    }

    pub fn verify(
        &self,
        input: &Carrier,
        reference: &Message,
        alpha: f64,
    ) -> Result<DetectionReport> {
        let bits = self.plan.capacity();
        if reference.len() != bits {
            return Err(Error::Length {
                expected: bits,
                actual: reference.len(),
            });
        }
        let spec = threshold(bits, alpha)?;
        let lat = self.to_latent(input)?;
        let best = self.best_over_shifts(&lat, |ex| Ok((ex.message.matches(reference)?, ())))?;
        Ok(self.report(
            Task::Verify,
            best.extraction,
            best.matches,
            None,
            spec,
            best.shift,
            best.tried,
        ))
    }

    pub fn identify(
        &self,
        input: &Carrier,
        codebook: &Codebook,
        alpha: f64,
        population: u64,
    ) -> Result<DetectionReport> {
        let bits = self.plan.capacity();
        if codebook.bits() != bits {
            return Err(Error::Length {
                expected: bits,
                actual: codebook.bits(),
            });
        }
        if codebook.is_empty() {
            return Err(Error::Config("empty codebook".into()));
        }
        let spec = bonferroni_threshold(bits, alpha, population)?;
        let lat = self.to_latent(input)?;
        let best = self.best_over_shifts(&lat, |ex| {
            let m = codebook.best_match(&ex.message)?;
            Ok((m.matches, m.index))
        })?;
        Ok(self.report(
            Task::Identify,
            best.extraction,
            best.matches,
            Some(best.extra),
            spec,
            best.shift,
            best.tried,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        task: Task,
        ex: Extraction,
        matches: usize,
        user: Option<usize>,
        threshold: ThresholdSpec,
        shift: (i64, i64),
        candidate_shifts: usize,
    ) -> DetectionReport {
        let bits = ex.message.len();
        DetectionReport {
            task,
            variant: self.cfg.variant,
            bits,
            message: ex.message.to_hex(),
            scores: ex.scores,
            matches,
            bit_accuracy: matches as f64 / bits as f64,
            user,
            decision: threshold.accepts(matches),
            threshold,
            diagnostics: DetectDiagnostics {
                zero_elements: ex.zero_elements,
                shift: [shift.0, shift.1],
                candidate_shifts,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_latent(h: usize, w: usize, c: usize, seed: u64) -> LatentTensor {
        let mut g = SplitMix64::new(seed);
        let data = (0..h * w * c)
            .map(|_| ((g.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32)
            .collect();
        LatentTensor::new(h, w, c, data).unwrap()
    }

    fn random_message(bits: usize, seed: u64) -> Message {
        let mut g = SplitMix64::new(seed);
        Message::from_bits((0..bits).map(|_| g.next_u64() >> 63 == 1))
    }

    #[test]
    fn crop_offsets() {
        let z = random_latent(64, 64, 2, 1);
        let (c, at) = crop_center(&z, 44).unwrap();
        assert_eq!((at.top, at.left), (10, 10));
        assert_eq!(c.get(0, 0, 1), z.get(10, 10, 1));
        assert_eq!(paste_center(&z, &c, at).unwrap(), z);
        let (full, at) = crop_center(&z, 64).unwrap();
        assert_eq!(full, z);
        assert_eq!(paste_center(&z, &full, at).unwrap(), z);
        assert_eq!(center_offset(64, 64, 45).unwrap(), (9, 9));
        assert!(crop_center(&z, 65).is_err());
    }

    #[test]
    fn round_trip_all_variants() {
        for v in Variant::ALL {
            for mode in [RealizeMode::Restored, RealizeMode::Cutoff] {
                let p = Pipeline::new(PipelineConfig {
                    variant: v,
                    realize: mode,
                    ..Default::default()
                })
                .unwrap();
                let z = random_latent(64, 64, 4, 7);
                let m = random_message(128, 9);
                let e = p.embed(&Carrier::Latent(z.clone()), &m).unwrap();
                let rep = p.verify(&e.output, &m, 0.01).unwrap();
                if mode == RealizeMode::Restored {
                    assert_eq!(rep.bit_accuracy, 1.0, "{v}");
                    assert!(rep.decision);
                    assert!(
                        e.diagnostics.max_imag_residual < 1e-6 * (1.0 + e.diagnostics.max_real)
                    );
                } else {
                    assert!(e.diagnostics.max_imag_residual > 1e-6);
                }
            }
        }
    }

    #[test]
    fn embedding_is_local_and_deterministic() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        let z = random_latent(64, 72, 5, 3);
        let m = random_message(128, 4);
        let (a, _) = p.embed_latent(&z, &m).unwrap();
        let (b, _) = p.embed_latent(&z, &m).unwrap();
        assert_eq!(a, b);
        let (top, left) = center_offset(64, 72, 44).unwrap();
        for ch in 0..5 {
            for r in 0..64 {
                for c in 0..72 {
                    let inside =
                        ch < 4 && (top..top + 44).contains(&r) && (left..left + 44).contains(&c);
                    if !inside {
                        assert_eq!(a.get(r, c, ch), z.get(r, c, ch));
                    }
                }
            }
        }
        assert_ne!(a, z);
    }

    #[test]
    fn shape_and_length_errors() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        let m = random_message(128, 1);
        assert!(p.embed_latent(&random_latent(40, 64, 4, 1), &m).is_err());
        assert!(p.embed_latent(&random_latent(64, 64, 3, 1), &m).is_err());
        assert!(matches!(
            p.embed_latent(&random_latent(64, 64, 4, 1), &random_message(64, 1)),
            Err(Error::Length { .. })
        ));
        let z = Carrier::Latent(random_latent(64, 64, 4, 1));
        assert!(p.verify(&z, &random_message(96, 1), 0.01).is_err());
        let img = Carrier::Image(ImageBuffer::new(8, 8, 1, vec![0.5; 64]).unwrap());
        assert!(p.embed(&img, &m).is_err());
    }

    #[test]
    fn identify_finds_the_user() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        let cb = Codebook::generate(500, 128, 11).unwrap();
        let m = cb.entry(321);
        let z = Carrier::Latent(random_latent(64, 64, 4, 5));
        let e = p.embed(&z, &m).unwrap();
        let rep = p.identify(&e.output, &cb, 0.01, 1_000_000).unwrap();
        assert_eq!(rep.user, Some(321));
        assert_eq!(rep.bit_accuracy, 1.0);
        assert!(rep.decision);
        assert_eq!(rep.threshold.k, 96);
        let single = Codebook::from_messages(std::slice::from_ref(&m)).unwrap();
        let a = p.identify(&e.output, &single, 0.01, 1).unwrap();
        let b = p.verify(&e.output, &m, 0.01).unwrap();
        assert_eq!(a.threshold.k, b.threshold.k);
        assert_eq!(a.decision, b.decision);
    }

    #[test]
    fn translation_search_recovers_shift() {
        let p0 = Pipeline::new(PipelineConfig::default()).unwrap();
        let p = Pipeline::new(PipelineConfig {
            translation_search: 3,
            ..Default::default()
        })
        .unwrap();
        let z = random_latent(64, 64, 4, 21);
        let m = random_message(128, 22);
        let (wm, _) = p0.embed_latent(&z, &m).unwrap();
        // 62x63 frame: centered offset (9, 9), watermark window at (8, 9).
        let shifted = wm.window(2, 1, 62, 63).unwrap();
        let plain = p0
            .verify(&Carrier::Latent(shifted.clone()), &m, 0.01)
            .unwrap();
        let rep = p.verify(&Carrier::Latent(shifted), &m, 0.01).unwrap();
        assert!(plain.bit_accuracy < 1.0);
        assert_eq!(rep.bit_accuracy, 1.0);
        assert_eq!(rep.diagnostics.candidate_shifts, 49);
        let s = rep.diagnostics.shift;
        assert_eq!(s, [-1, 0]);
    }

    #[test]
    fn image_codecs_round_trip() {
        let z = random_latent(8, 8, 64, 2);
        let z =
            LatentTensor::new(8, 8, 64, z.data().iter().map(|v| 0.5 + 0.1 * v).collect()).unwrap();
        let cfg = PipelineConfig {
            band: BandConfig::default()
                .with(|b| {
                    b.crop_size = 8;
                    b.r_lo = 1.5;
                    b.r_hi = 3.0;
                    b.axis_offset = false;
                    b.bits_per_channel = 2;
                })
                .unwrap(),
            codec: CodecSpec::SpaceToDepth { factor: 8 },
            ..Default::default()
        };
        let p = Pipeline::new(cfg).unwrap();
        let img = p.config().codec.decode(&z).unwrap().image;
        let m = random_message(8, 1);
        let e = p.embed(&Carrier::Image(img), &m).unwrap();
        assert_eq!(e.diagnostics.clipped, 0);
        assert_eq!(p.verify(&e.output, &m, 0.5).unwrap().bit_accuracy, 1.0);
    }

    #[test]
    fn report_serializes_with_stable_keys() {
        let p = Pipeline::new(PipelineConfig::default()).unwrap();
        let m = random_message(128, 3);
        let z = Carrier::Latent(random_latent(64, 64, 4, 3));
        let rep = p.verify(&z, &m, 0.01).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        for key in [
            "task",
            "variant",
            "bits",
            "message",
            "scores",
            "matches",
            "bit_accuracy",
            "user",
            "decision",
            "threshold",
            "diagnostics",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["task"], "verify");
        assert_eq!(rep.decision, rep.bit_accuracy >= rep.threshold.tau);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"variant":"sps","realize":"cutoff"}"#).unwrap();
        assert_eq!(cfg.variant, Variant::Sps);
        assert_eq!(cfg.realize, RealizeMode::Cutoff);
        assert_eq!(cfg.band, BandConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus":1}"#).is_err());
    }
}
