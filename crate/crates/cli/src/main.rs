//! `phasemark` command-line front end.
//!
//! Exit status: 0 detected / success, 1 not detected, 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use phasemark::bench::{run_benchmark, BenchPlan};
use phasemark::codec::{CodecSpec, DEFAULT_FACTOR};
use phasemark::io::{is_latent_path, load_image, load_latent, save_image, save_latent};
use phasemark::modem::SpsParams;
use phasemark::pipeline::{Carrier, EmbedDiagnostics, Pipeline, PipelineConfig};
use phasemark::stats::{bonferroni_threshold, threshold, Codebook, DEFAULT_ALPHA};
use phasemark::{BandConfig, Error, Message, RealizeMode, Result, Variant};

#[derive(Parser)]
#[command(
    name = "phasemark",
    version,
    about = "Phase-modulation watermarking of latent tensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a message into a latent (.pmlt) or an image.
    Embed {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Message as hex, most significant bit first.
        #[arg(long)]
        message: Option<String>,
    },
    /// Check a carrier against a reference message.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        message: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Find the best-matching user in a codebook.
    Identify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Population for the Bonferroni threshold (default: codebook size).
        #[arg(long)]
        population: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Print the exact detection threshold.
    Threshold {
        #[arg(long)]
        bits: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        population: u64,
    },
    /// Run a benchmark plan.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Export the block plan of a configuration as JSON.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random codebook file plus its JSON sidecar.
    Codebook {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        bits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct CommonArgs {
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    key: Option<u64>,
    /// identity | s2d | blockmean
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Radial band as LO:HI.
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    no_axis_offset: bool,
    #[arg(long)]
    cutoff_imaginary: bool,
    #[arg(long)]
    gamma: Option<f64>,
    /// Translation search radius in latent bins.
    #[arg(long)]
    search: Option<usize>,
}

/// Config file contents; every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    variant: Option<Variant>,
    key: Option<u64>,
    message: Option<String>,
    codec: Option<String>,
    factor: Option<usize>,
    channels: Option<usize>,
    band: Option<String>,
    crop: Option<usize>,
    no_axis_offset: Option<bool>,
    cutoff_imaginary: Option<bool>,
    gamma: Option<f64>,
    search: Option<usize>,
    alpha: Option<f64>,
    codebook: Option<PathBuf>,
    population: Option<u64>,
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn parse_band(s: &str) -> Result<(f64, f64)> {
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad band '{s}', expected LO:HI")))
    };
    match s.split_once(':') {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => Err(Error::Config(format!("bad band '{s}', expected LO:HI"))),
    }
}

struct Resolved {
    cfg: PipelineConfig,
    input: Option<PathBuf>,
    file: FileConfig,
}

fn resolve(args: &CommonArgs) -> Result<Resolved> {
    let file = read_file_config(args.config.as_deref())?;
    let mut band = BandConfig::default().params().clone();
    if let Some(k) = args.key.or(file.key) {
        band.key = k;
    }
    if let Some(c) = args.channels.or(file.channels) {
        band.n_channels = c;
    }
    if let Some(b) = args.band.as_ref().or(file.band.as_ref()) {
        (band.r_lo, band.r_hi) = parse_band(b)?;
    }
    if let Some(c) = args.crop.or(file.crop) {
        band.crop_size = c;
    }
    if args.no_axis_offset || file.no_axis_offset == Some(true) {
        band.axis_offset = false;
    }
    let mut cfg = PipelineConfig {
        band: BandConfig::new(band)?,
        ..Default::default()
    };
    if let Some(v) = args.variant.or(file.variant) {
        cfg.variant = v;
    }
    let factor = args.factor.or(file.factor).unwrap_or(DEFAULT_FACTOR);
    if let Some(name) = args.codec.as_ref().or(file.codec.as_ref()) {
        cfg.codec = CodecSpec::from_name(name, factor)?;
    }
    if let Some(g) = args.gamma.or(file.gamma) {
        cfg.modem.gamma = SpsParams::new(g)?;
    }
    if args.cutoff_imaginary || file.cutoff_imaginary == Some(true) {
        cfg.realize = RealizeMode::Cutoff;
    }
    if let Some(s) = args.search.or(file.search) {
        cfg.translation_search = s;
    }
    let input = args.input.clone().or_else(|| file.input.clone());
    Ok(Resolved { cfg, input, file })
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing --{flag}")))
}

fn load_carrier(path: &Path) -> Result<Carrier> {
    if is_latent_path(path) {
        Ok(Carrier::Latent(load_latent(path)?))
    } else {
        Ok(Carrier::Image(load_image(path)?))
    }
}

fn print_json<T: Serialize>(v: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("report serializes")
    );
}

#[derive(Serialize)]
struct EmbedReport<'a> {
    output: &'a Path,
    kind: &'a str,
    variant: Variant,
    bits: usize,
    message: String,
    realize_mode: &'a str,
    diagnostics: &'a EmbedDiagnostics,
}

/// `Ok(true)` maps to exit 0, `Ok(false)` to exit 1.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Embed {
            common,
            out,
            message,
        } => {
            let r = resolve(&common)?;
            let input = require(r.input, "in")?;
            let out = require(out.or(r.file.out), "out")?;
            let msg = Message::from_hex(&require(message.or(r.file.message), "message")?)?;
            let p = Pipeline::new(r.cfg)?;
            let carrier = load_carrier(&input)?;
            let embedded = p.embed(&carrier, &msg)?;
            match &embedded.output {
                Carrier::Latent(l) => {
                    if !is_latent_path(&out) {
                        return Err(Error::Config("latent input needs a .pmlt output".into()));
                    }
                    save_latent(l, &out)?;
                }
                Carrier::Image(img) => save_image(img, &out)?,
            }
            print_json(&EmbedReport {
                output: &out,
                kind: embedded.output.kind(),
                variant: p.config().variant,
                bits: msg.len(),
                message: msg.to_hex(),
                realize_mode: p.config().realize.as_str(),
                diagnostics: &embedded.diagnostics,
            });
            Ok(true)
        }
        Command::Verify {
            common,
            message,
            alpha,
        } => {
            let r = resolve(&common)?;
            let input = require(r.input, "in")?;
            let msg = Message::from_hex(&require(message.or(r.file.message), "message")?)?;
            let alpha = alpha.or(r.file.alpha).unwrap_or(DEFAULT_ALPHA);
            let p = Pipeline::new(r.cfg)?;
            let report = p.verify(&load_carrier(&input)?, &msg, alpha)?;
            print_json(&report);
            Ok(report.decision)
        }
        Command::Identify {
            common,
            codebook,
            population,
            alpha,
        } => {
            let r = resolve(&common)?;
            let input = require(r.input, "in")?;
            let (cb, _) = Codebook::load(require(codebook.or(r.file.codebook), "codebook")?)?;
            let population = population.or(r.file.population).unwrap_or(cb.len() as u64);
            let alpha = alpha.or(r.file.alpha).unwrap_or(DEFAULT_ALPHA);
            let p = Pipeline::new(r.cfg)?;
            let report = p.identify(&load_carrier(&input)?, &cb, alpha, population)?;
            print_json(&report);
            Ok(report.decision)
        }
        Command::Threshold {
            bits,
            alpha,
            population,
        } => {
            let spec = if population == 1 {
                threshold(bits, alpha)?
            } else {
                bonferroni_threshold(bits, alpha, population)?
            };
            print_json(&spec);
            Ok(true)
        }
        Command::Bench { plan, out_dir } => {
            let text = fs::read_to_string(&plan).map_err(|e| io_err(&plan, e))?;
            let plan: BenchPlan = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", plan.display())))?;
            let outcome = run_benchmark(&plan)?;
            outcome.write(&out_dir)?;
            print!("{}", outcome.summary_json());
            Ok(true)
        }
        Command::Plan { common, out } => {
            let r = resolve(&common)?;
            let json = Pipeline::new(r.cfg)?.plan().to_json();
            match out.or(r.file.out) {
                Some(path) => fs::write(&path, json).map_err(|e| io_err(&path, e))?,
                None => print!("{json}"),
            }
            Ok(true)
        }
        Command::Codebook { out, n, bits, seed } => {
            Codebook::generate(n, bits, seed)?.save(&out, Some(seed))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
