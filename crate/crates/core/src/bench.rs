//! Benchmark runner: a grid of pipeline configurations evaluated over a
//! corpus and a list of attack chains.
//!
//! Seeding: the input, the codebook user and the band key of trial `t` come
//! from `(seed, t)` only; attack noise of chain `a` from `(seed, a, t)`. Cells
//! that differ only in their configuration therefore see identical inputs
//! and identical noise.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{apply_chain, chain_label, AttackContext, AttackSpec};
use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::io::{is_latent_path, load_image, load_latent};
use crate::layout::{BandConfig, BandParams};
use crate::message::Message;
use crate::modem::{ModemParams, Variant};
use crate::pipeline::{Carrier, Pipeline, PipelineConfig};
use crate::rng::derive_seed;
use crate::spectrum::{ComplexGrid, Fft2, RealizeMode};
use crate::stats::{bonferroni_threshold, threshold, Codebook};
use crate::tensor::{latent_mse, psnr, LatentTensor};

pub const CSV_HEADER: &str =
    "plan_hash,variant,n_channels,axis_offset,realize_mode,attack,trial,ba,psnr,latent_mse,embed_us,detect_us";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Corpus {
    /// i.i.d. standard normal latents.
    Gaussian {
        #[serde(default = "default_size")]
        size: usize,
        #[serde(default = "default_channels")]
        channels: usize,
    },
    /// Power-law random field latents (`|F| ~ 1/f^beta`) around 0.5 with
    /// standard deviation `contrast`, clipped to [0, 1]. With an image codec
    /// the carrier is the decoded image.
    PowerLaw {
        #[serde(default = "default_size")]
        size: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_contrast")]
        contrast: f64,
    },
    /// `.pmlt`, `.png`, `.pgm`, `.ppm` files, sorted by name; trial `t` uses
    /// file `t mod count`.
    Directory { path: PathBuf },
}

fn default_size() -> usize {
    64
}
fn default_channels() -> usize {
    4
}
fn default_beta() -> f64 {
    1.5
}
fn default_contrast() -> f64 {
    0.08
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus::Gaussian {
            size: default_size(),
            channels: default_channels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub variants: Vec<Variant>,
    pub axis_offset: Vec<bool>,
    pub n_channels: Vec<usize>,
    pub realize: Vec<RealizeMode>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            axis_offset: vec![true],
            n_channels: vec![4],
            realize: vec![RealizeMode::Restored],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyPlan {
    pub runs: usize,
    pub warmup: usize,
}

impl Default for LatencyPlan {
    fn default() -> Self {
        Self {
            runs: 200,
            warmup: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPlan {
    pub seed: u64,
    pub corpus: Corpus,
    pub trials: usize,
    pub codec: CodecSpec,
    /// Base band; `n_channels` and `axis_offset` come from the grid and the
    /// key from the trial.
    pub band: BandParams,
    pub modem: ModemParams,
    pub grid: Grid,
    /// Attack chains; an empty chain is the clean channel.
    pub attacks: Vec<Vec<AttackSpec>>,
    pub alpha: f64,
    /// Population `N` for the identification threshold.
    pub population: u64,
    /// Entries in the generated codebook; defaults to `population`.
    pub codebook_size: Option<usize>,
    pub translation_search: usize,
    pub latency: Option<LatencyPlan>,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: Corpus::default(),
            trials: 100,
            codec: CodecSpec::Identity,
            band: BandParams::default(),
            modem: ModemParams::default(),
            grid: Grid::default(),
            attacks: vec![Vec::new()],
            alpha: crate::stats::DEFAULT_ALPHA,
            population: crate::stats::DEFAULT_POPULATION,
            codebook_size: None,
            translation_search: 0,
            latency: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: Variant,
    pub n_channels: usize,
    pub axis_offset: bool,
    pub realize_mode: RealizeMode,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let g = &self.grid;
        if g.variants.is_empty()
            || g.axis_offset.is_empty()
            || g.n_channels.is_empty()
            || g.realize.is_empty()
        {
            return Err(Error::Config("benchmark grid is empty".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config(
                "attack list is empty; use [[]] for the clean channel".into(),
            ));
        }
        for spec in self.attacks.iter().flatten() {
            spec.validate()?;
        }
        if self.codebook_size == Some(0) {
            return Err(Error::Config("codebook_size must be at least 1".into()));
        }
        if let Some(l) = &self.latency {
            if l.runs < 100 {
                return Err(Error::Config(format!(
                    "latency needs at least 100 runs, got {}",
                    l.runs
                )));
            }
        }
        self.codec.validate()?;
        for cell in self.cells() {
            self.band_for(&cell, 0)?;
        }
        Ok(())
    }

    /// Grid cells in `variant x axis_offset x n_channels x realize` order.
    pub fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &variant in &g.variants {
            for &axis_offset in &g.axis_offset {
                for &n_channels in &g.n_channels {
                    for &realize_mode in &g.realize {
                        out.push(Cell {
                            variant,
                            n_channels,
                            axis_offset,
                            realize_mode,
                        });
                    }
                }
            }
        }
        out
    }

    fn band_for(&self, cell: &Cell, key: u64) -> Result<BandConfig> {
        BandConfig::new(BandParams {
            n_channels: cell.n_channels,
            axis_offset: cell.axis_offset,
            key,
            ..self.band.clone()
        })
    }

    pub fn pipeline_config(&self, cell: &Cell, key: u64) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            band: self.band_for(cell, key)?,
            variant: cell.variant,
            modem: self.modem.clone(),
            codec: self.codec,
            realize: cell.realize_mode,
            translation_search: self.translation_search,
        })
    }

    /// First 16 hex digits of SHA-256 over the canonical plan JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Power-law random field, generated on a `2n` periodic grid and windowed to
/// `n x n` so the result is not periodic. Zero mean, unit variance.
pub fn power_law_field(n: usize, beta: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let big = 2 * n;
    let freq = |k: usize| {
        let k = if k < big.div_ceil(2) {
            k as f64
        } else {
            k as f64 - big as f64
        };
        k / big as f64
    };
    let mut spec = Vec::with_capacity(big * big);
    for r in 0..big {
        for c in 0..big {
            let f = (freq(r).powi(2) + freq(c).powi(2)).sqrt();
            let amp = if r == 0 && c == 0 { 0.0 } else { f.powf(-beta) };
            let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let g: f64 = rng.sample(StandardNormal);
            spec.push(Complex64::from_polar(amp * g, phi));
        }
    }
    let grid = Fft2::new(big, big)?.inverse(&ComplexGrid::new(big, big, spec)?)?;
    let mut out: Vec<f64> = (0..n)
        .flat_map(|r| {
            grid.data()[r * big..r * big + n]
                .iter()
                .map(|c| c.re)
                .collect::<Vec<_>>()
        })
        .collect();
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64;
    let sd = var.sqrt().max(f64::MIN_POSITIVE);
    for v in &mut out {
        *v = (*v - mean) / sd;
    }
    Ok(out)
}

enum CorpusSource {
    Synthetic(Corpus),
    Files(Vec<PathBuf>),
}

impl CorpusSource {
    fn open(corpus: &Corpus) -> Result<Self> {
        match corpus {
            Corpus::Directory { path } => {
                let rd = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
                let mut files: Vec<PathBuf> = rd
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
                        matches!(
                            ext.to_ascii_lowercase().as_str(),
                            "pmlt" | "png" | "pgm" | "ppm"
                        )
                    })
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(Error::Config(format!(
                        "empty corpus directory {}",
                        path.display()
                    )));
                }
                Ok(CorpusSource::Files(files))
            }
            other => Ok(CorpusSource::Synthetic(other.clone())),
        }
    }

    fn item(&self, codec: &CodecSpec, seed: u64) -> Result<Carrier> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            CorpusSource::Files(files) => {
                let path = &files[(seed % files.len() as u64) as usize];
                if is_latent_path(path) {
                    Ok(Carrier::Latent(load_latent(path)?))
                } else {
                    Ok(Carrier::Image(load_image(path)?))
                }
            }
            CorpusSource::Synthetic(Corpus::Gaussian { size, channels }) => {
                let n = size * size * channels;
                let data = (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                    .collect();
                let lat = LatentTensor::new(*size, *size, *channels, data)?;
                if codec.has_image_stage() {
                    return Err(Error::Config(
                        "gaussian corpus latents are not images; use power_law with image codecs"
                            .into(),
                    ));
                }
                Ok(Carrier::Latent(lat))
            }
            CorpusSource::Synthetic(Corpus::PowerLaw {
                size,
                channels,
                beta,
                contrast,
            }) => {
                let channels = match codec {
                    CodecSpec::SpaceToDepth { factor } => factor * factor,
                    _ => *channels,
                };
                let mut data = Vec::with_capacity(size * size * channels);
                for _ in 0..channels {
                    let field = power_law_field(*size, *beta, &mut rng)?;
                    data.extend(
                        field
                            .iter()
                            .map(|v| (0.5 + contrast * v).clamp(0.0, 1.0) as f32),
                    );
                }
                let lat = LatentTensor::new(*size, *size, channels, data)?;
                if codec.has_image_stage() {
                    Ok(Carrier::Image(codec.decode(&lat)?.image))
                } else {
                    Ok(Carrier::Latent(lat))
                }
            }
            CorpusSource::Synthetic(Corpus::Directory { .. }) => unreachable!("opened as files"),
        }
    }
}

/// One CSV row. `ba` and `psnr` are `None` for failed trials and latent
/// carriers respectively.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub attack: usize,
    pub trial: usize,
    pub ba: Option<f64>,
    pub psnr: Option<f64>,
    pub latent_mse: f64,
    pub embed_us: f64,
    pub detect_us: f64,
    /// Correct user at `matches >= k_idf`.
    pub identified: bool,
    pub verified: bool,
    pub clip_fraction: f64,
    pub skipped_blocks: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub cell: Cell,
    pub attack: String,
    pub trials: usize,
    pub failures: usize,
    pub bits: usize,
    pub k_vrf: usize,
    pub k_idf: usize,
    pub ba_mean: f64,
    pub ba_se: f64,
    pub tpr_vrf: f64,
    pub tpr_idf: f64,
    pub psnr_mean: Option<f64>,
    pub psnr_se: Option<f64>,
    pub latent_mse_mean: f64,
    pub clip_fraction_mean: f64,
    pub skipped_blocks: usize,
    pub embed_us_median: f64,
    pub detect_us_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRecord {
    pub variant: Variant,
    pub runs: usize,
    pub embed_us_median: f64,
    pub detect_us_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOutcome {
    pub plan_hash: String,
    pub cells: Vec<Cell>,
    pub attack_labels: Vec<String>,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<CellSummary>,
    pub latency: Vec<LatencyRecord>,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn micros(start: Instant) -> f64 {
    (start.elapsed().as_secs_f64() * 1e6).max(1e-3)
}

fn random_message(bits: usize, seed: u64) -> Message {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Message::from_bits((0..bits).map(|_| rng.random::<bool>()))
}

/// Median embed/detect transform time on `64 x 64 x 4` latents.
pub fn measure_latency(variant: Variant, plan: &LatencyPlan, seed: u64) -> Result<LatencyRecord> {
    let p = Pipeline::new(PipelineConfig {
        variant,
        ..Default::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..64 * 64 * 4)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    let lat = LatentTensor::new(64, 64, 4, data)?;
    let msg = random_message(p.message_bits(), seed);
    let (wm, _) = p.embed_latent(&lat, &msg)?;
    for _ in 0..plan.warmup {
        std::hint::black_box(p.embed_latent(&lat, &msg)?);
        std::hint::black_box(p.extract(&wm)?);
    }
    let mut embed = Vec::with_capacity(plan.runs);
    let mut detect = Vec::with_capacity(plan.runs);
    for _ in 0..plan.runs {
        let t = Instant::now();
        std::hint::black_box(p.embed_latent(std::hint::black_box(&lat), &msg)?);
        embed.push(micros(t));
        let t = Instant::now();
        std::hint::black_box(p.extract(std::hint::black_box(&wm))?);
        detect.push(micros(t));
    }
    Ok(LatencyRecord {
        variant,
        runs: plan.runs,
        embed_us_median: median(&mut embed),
        detect_us_median: median(&mut detect),
    })
}

pub fn run_benchmark(plan: &BenchPlan) -> Result<BenchOutcome> {
    plan.validate()?;
    let source = CorpusSource::open(&plan.corpus)?;
    let cells = plan.cells();
    let attack_labels: Vec<String> = plan.attacks.iter().map(|c| chain_label(c)).collect();
    let codebook_size = plan
        .codebook_size
        .unwrap_or_else(|| plan.population.min(usize::MAX as u64) as usize);

    // One codebook per message length.
    let mut lengths: Vec<usize> = plan
        .grid
        .n_channels
        .iter()
        .map(|&c| c * plan.band.bits_per_channel)
        .collect();
    lengths.sort_unstable();
    lengths.dedup();
    let mut codebooks = Vec::new();
    for &bits in &lengths {
        let cb = Codebook::generate(
            codebook_size,
            bits,
            derive_seed(plan.seed, &[3, bits as u64]),
        )?;
        codebooks.push((bits, cb));
    }
    let codebook = |bits: usize| {
        &codebooks
            .iter()
            .find(|(b, _)| *b == bits)
            .expect("generated")
            .1
    };

    let mut records = Vec::with_capacity(cells.len() * plan.attacks.len() * plan.trials);
    for trial in 0..plan.trials {
        let t = trial as u64;
        let input = source.item(&plan.codec, derive_seed(plan.seed, &[0, t]))?;
        let user = (derive_seed(plan.seed, &[1, t]) % codebook_size as u64) as usize;
        let key = derive_seed(plan.seed, &[2, t]);
        for (ci, cell) in cells.iter().enumerate() {
            let p = Pipeline::new(plan.pipeline_config(cell, key)?)?;
            let bits = p.message_bits();
            let cb = codebook(bits);
            let msg = cb.entry(user);
            let start = Instant::now();
            let embedded = p.embed(&input, &msg);
            let embed_us = micros(start);
            let embedded = match embedded {
                Ok(e) => e,
                Err(e) => {
                    for ai in 0..plan.attacks.len() {
                        records.push(failed(ci, ai, trial, embed_us, e.to_string()));
                    }
                    continue;
                }
            };
            let original_latent = p.to_latent(&input)?;
            let mse = latent_mse(&original_latent, &embedded.latent)?;
            let quality = match (&input, &embedded.output) {
                (Carrier::Image(a), Carrier::Image(b)) => Some(psnr(a, b)?),
                _ => None,
            };
            for (ai, chain) in plan.attacks.iter().enumerate() {
                let ctx = AttackContext {
                    seed: derive_seed(plan.seed, &[4, ai as u64, t]),
                    align: plan.codec.align(),
                    trial_id: format!("{trial}"),
                };
                let result = apply_chain(&embedded.output, chain, &ctx).and_then(|attacked| {
                    let start = Instant::now();
                    let v = p.verify(&attacked, &msg, plan.alpha)?;
                    let detect_us = micros(start);
                    let id = p.identify(&attacked, cb, plan.alpha, plan.population)?;
                    Ok((v, id, detect_us))
                });
                records.push(match result {
                    Ok((v, id, detect_us)) => TrialRecord {
                        cell: ci,
                        attack: ai,
                        trial,
                        ba: Some(v.bit_accuracy),
                        psnr: quality,
                        latent_mse: mse,
                        embed_us,
                        detect_us,
                        identified: id.decision && id.user == Some(user),
                        verified: v.decision,
                        clip_fraction: embedded.diagnostics.clip_fraction,
                        skipped_blocks: embedded.diagnostics.skipped_blocks,
                        error: None,
                    },
                    Err(e) => TrialRecord {
                        psnr: quality,
                        latent_mse: mse,
                        ..failed(ci, ai, trial, embed_us, e.to_string())
                    },
                });
            }
        }
    }
    records.sort_by_key(|r| (r.cell, r.attack, r.trial));

    let mut summary = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        let bits = cell.n_channels * plan.band.bits_per_channel;
        let k_vrf = threshold(bits, plan.alpha)?.k;
        let k_idf = bonferroni_threshold(bits, plan.alpha, plan.population)
            .map(|t| t.k)
            .unwrap_or(bits + 1);
        for (ai, label) in attack_labels.iter().enumerate() {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.cell == ci && r.attack == ai)
                .collect();
            let n = rows.len() as f64;
            let bas: Vec<f64> = rows.iter().filter_map(|r| r.ba).collect();
            let psnrs: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.psnr)
                .filter(|p| p.is_finite())
                .collect();
            let (ba_mean, ba_se) = mean_se(&bas);
            let (pm, ps) = mean_se(&psnrs);
            let mut emb: Vec<f64> = rows.iter().map(|r| r.embed_us).collect();
            let mut det: Vec<f64> = rows
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| r.detect_us)
                .collect();
            summary.push(CellSummary {
                cell: *cell,
                attack: label.clone(),
                trials: rows.len(),
                failures: rows.iter().filter(|r| r.error.is_some()).count(),
                bits,
                k_vrf,
                k_idf,
                ba_mean,
                ba_se,
                tpr_vrf: rows.iter().filter(|r| r.verified).count() as f64 / n,
                tpr_idf: rows.iter().filter(|r| r.identified).count() as f64 / n,
                psnr_mean: (!psnrs.is_empty()).then_some(pm),
                psnr_se: (!psnrs.is_empty()).then_some(ps),
                latent_mse_mean: rows.iter().map(|r| r.latent_mse).sum::<f64>() / n,
                clip_fraction_mean: rows.iter().map(|r| r.clip_fraction).sum::<f64>() / n,
                skipped_blocks: rows.iter().map(|r| r.skipped_blocks).sum(),
                embed_us_median: median(&mut emb),
                detect_us_median: median(&mut det),
            });
        }
    }

    let mut latency = Vec::new();
    if let Some(lp) = &plan.latency {
        for &v in &plan.grid.variants {
            latency.push(measure_latency(v, lp, plan.seed)?);
        }
    }

    Ok(BenchOutcome {
        plan_hash: plan.hash(),
        cells,
        attack_labels,
        records,
        summary,
        latency,
    })
}

fn failed(cell: usize, attack: usize, trial: usize, embed_us: f64, error: String) -> TrialRecord {
    TrialRecord {
        cell,
        attack,
        trial,
        ba: None,
        psnr: None,
        latent_mse: f64::NAN,
        embed_us,
        detect_us: 0.0,
        identified: false,
        verified: false,
        clip_fraction: 0.0,
        skipped_blocks: 0,
        error: Some(error),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl BenchOutcome {
    /// Per-trial CSV with the pinned column set.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let c = &self.cells[r.cell];
            let mse = if r.latent_mse.is_finite() {
                format!("{}", r.latent_mse)
            } else {
                String::new()
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
                self.plan_hash,
                c.variant,
                c.n_channels,
                c.axis_offset,
                c.realize_mode.as_str(),
                self.attack_labels[r.attack],
                r.trial,
                fmt_opt(r.ba),
                fmt_opt(r.psnr),
                mse,
                r.embed_us,
                r.detect_us,
            );
        }
        s
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            plan_hash: &'a str,
            cells: &'a [CellSummary],
            latency: &'a [LatencyRecord],
        }
        let mut s = serde_json::to_string_pretty(&Out {
            plan_hash: &self.plan_hash,
            cells: &self.summary,
            latency: &self.latency,
        })
        .expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn latency_csv(&self) -> String {
        let mut s = String::from("variant,runs,embed_us_median,detect_us_median\n");
        for l in &self.latency {
            let _ = writeln!(
                s,
                "{},{},{:.3},{:.3}",
                l.variant, l.runs, l.embed_us_median, l.detect_us_median
            );
        }
        s
    }

    /// Writes `results.csv`, `summary.json` and `latency.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("results.csv", self.to_csv()),
            ("summary.json", self.summary_json()),
            ("latency.csv", self.latency_csv()),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }

    pub fn find(&self, pred: impl Fn(&Cell) -> bool, attack: usize) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|s| pred(&s.cell) && s.attack == self.attack_labels[attack])
    }
}
