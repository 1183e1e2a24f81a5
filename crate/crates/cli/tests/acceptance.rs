//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always shown.
//! Pass criterion numbers as arguments to run a subset.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use phasemark::attacks::{apply, AttackContext, AttackSpec};
use phasemark::bench::{
    measure_latency, run_benchmark, BenchOutcome, BenchPlan, CellSummary, Corpus, Grid, LatencyPlan,
};
use phasemark::codec::CodecSpec;
use phasemark::io::save_latent;
use phasemark::modem::{detect_block, embed_block, ModemParams};
use phasemark::pipeline::{Carrier, Pipeline, PipelineConfig};
use phasemark::stats::{binom_tail, threshold, Codebook};
use phasemark::{BandConfig, LatentTensor, Message, RealizeMode, Variant};

// Pinned tolerances and sizes.
const C1_TRIALS: usize = 1000;
const C2_TRIALS: usize = 10_000;
const C2_SE_MULT: f64 = 3.0;
const ABLATION_TRIALS: usize = 500;
const NOISE_SIGMA: f64 = 0.05;
const C3_MIN_MARGIN: f64 = 0.10;
const C4_SE_MULT: f64 = 1.0;
const C5_MAX_BA_DROP: f64 = 0.02;
const C6_BLOCKS: usize = 100_000;
const C6_PHASE_NOISE: f64 = 0.2;
const C6_GAMMA: f64 = 0.8;
const C7_EMBEDS: usize = 1000;
const C7_TOLERANCE: f64 = 1e-6;
const C8_LATENTS_PER_VARIANT: usize = 10;
const C9_MAX_TRANSFORM_US: f64 = 5000.0;
const C9_MAX_MATCH_US: f64 = 1_000_000.0;
const C9_MATCH_QUERIES: usize = 21;
const POPULATION: u64 = 1_000_000;
const ALPHA: f64 = 0.01;

type Criterion = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_phasemark")
}

fn gaussian_latent(seed: u64) -> LatentTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..64 * 64 * 4)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    LatentTensor::new(64, 64, 4, data).unwrap()
}

fn random_message(bits: usize, rng: &mut impl Rng) -> Message {
    Message::from_bits((0..bits).map(|_| rng.random::<bool>()))
}

fn ablation_plan(grid: Grid) -> BenchPlan {
    BenchPlan {
        seed: 2024,
        corpus: Corpus::PowerLaw {
            size: 64,
            channels: 4,
            beta: 1.5,
            contrast: 0.08,
        },
        trials: ABLATION_TRIALS,
        codec: CodecSpec::BlockMean { factor: 8 },
        grid,
        attacks: vec![vec![AttackSpec::AdditiveNoise { sigma: NOISE_SIGMA }]],
        alpha: ALPHA,
        population: POPULATION,
        ..Default::default()
    }
}

fn ips_grid(axis_offset: Vec<bool>, n_channels: Vec<usize>, realize: Vec<RealizeMode>) -> Grid {
    Grid {
        variants: vec![Variant::Ips],
        axis_offset,
        n_channels,
        realize,
    }
}

fn cell(out: &BenchOutcome, f: impl Fn(&CellSummary) -> bool) -> &CellSummary {
    out.summary.iter().find(|s| f(s)).expect("cell present")
}

fn proportion_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn c1_clean_exactness() -> Verdict {
    let plan = BenchPlan {
        seed: 1,
        trials: C1_TRIALS,
        alpha: ALPHA,
        population: POPULATION,
        ..Default::default()
    };
    let out = run_benchmark(&plan).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &out.summary {
        pass &= s.tpr_vrf == 1.0 && s.tpr_idf == 1.0 && s.trials == C1_TRIALS;
        parts.push(format!(
            "{} vrf={:.3} idf={:.3}",
            s.cell.variant, s.tpr_vrf, s.tpr_idf
        ));
    }
    verdict(pass, parts.join(", "))
}

fn c2_fpr_calibration() -> Verdict {
    let p = Pipeline::new(PipelineConfig::default()).unwrap();
    let bits = p.message_bits();
    let spec = threshold(bits, ALPHA).unwrap();
    let analytic = binom_tail(bits, spec.k).unwrap();
    let codebook = Codebook::generate(POPULATION as usize, bits, 77).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let (mut vrf, mut idf) = (0usize, 0usize);
    for t in 0..C2_TRIALS {
        let z = Carrier::Latent(gaussian_latent(1_000_000 + t as u64));
        let reference = random_message(bits, &mut rng);
        vrf += usize::from(p.verify(&z, &reference, ALPHA).unwrap().decision);
        idf += usize::from(
            p.identify(&z, &codebook, ALPHA, POPULATION)
                .unwrap()
                .decision,
        );
    }
    let rate = vrf as f64 / C2_TRIALS as f64;
    let se = proportion_se(analytic, C2_TRIALS);
    let in_band = (rate - analytic).abs() <= C2_SE_MULT * se;
    // Union bound per query is alpha; the exact family-wise rate is
    // 1 - (1 - tail)^N with tail = P(X >= k_idf).
    let k_idf = phasemark::stats::bonferroni_threshold(bits, ALPHA, POPULATION)
        .unwrap()
        .k;
    let per_query = 1.0 - (1.0 - binom_tail(bits, k_idf).unwrap()).powf(POPULATION as f64);
    verdict(
        in_band && idf == 0,
        format!(
            "vrf rate {rate:.5} vs analytic {analytic:.5} +- {:.5} (k={}); false identifications {idf} (required 0, expected {:.1} = {C2_TRIALS} x {per_query:.5})",
            C2_SE_MULT * se,
            spec.k,
            per_query * C2_TRIALS as f64
        ),
    )
}

fn c3_hermitian_ablation() -> Verdict {
    let out = run_benchmark(&ablation_plan(ips_grid(
        vec![true],
        vec![3],
        vec![RealizeMode::Restored, RealizeMode::Cutoff],
    )))
    .unwrap();
    let r = cell(&out, |s| s.cell.realize_mode == RealizeMode::Restored);
    let c = cell(&out, |s| s.cell.realize_mode == RealizeMode::Cutoff);
    let margin = r.tpr_idf - c.tpr_idf;
    verdict(
        margin >= C3_MIN_MARGIN,
        format!(
            "idf restored {:.3} vs cutoff {:.3} (margin {margin:.3}, need >= {C3_MIN_MARGIN}); BA {:.4} vs {:.4}",
            r.tpr_idf, c.tpr_idf, r.ba_mean, c.ba_mean
        ),
    )
}

fn c4_capacity_trend() -> Verdict {
    let out = run_benchmark(&ablation_plan(ips_grid(
        vec![true],
        vec![1, 2, 3, 4],
        vec![RealizeMode::Restored],
    )))
    .unwrap();
    let cells: Vec<&CellSummary> = (1..=4)
        .map(|n| cell(&out, |s| s.cell.n_channels == n))
        .collect();
    let mut pass = true;
    for w in cells.windows(2) {
        let (a, b) = (w[0], w[1]);
        let tpr_se = proportion_se(a.tpr_idf, a.trials).max(proportion_se(b.tpr_idf, b.trials));
        pass &= b.tpr_idf >= a.tpr_idf - C4_SE_MULT * tpr_se;
        let (pa, pb) = (a.psnr_mean.unwrap(), b.psnr_mean.unwrap());
        let psnr_se = a.psnr_se.unwrap().max(b.psnr_se.unwrap());
        pass &= pb <= pa + C4_SE_MULT * psnr_se;
    }
    let row = |f: &dyn Fn(&CellSummary) -> String| {
        cells.iter().map(|c| f(c)).collect::<Vec<_>>().join(" ")
    };
    verdict(
        pass,
        format!(
            "N_C 1..4 idf [{}] psnr [{}]",
            row(&|c| format!("{:.3}", c.tpr_idf)),
            row(&|c| format!("{:.2}", c.psnr_mean.unwrap()))
        ),
    )
}

fn c5_axis_offset() -> Verdict {
    let out = run_benchmark(&ablation_plan(ips_grid(
        vec![true, false],
        vec![3],
        vec![RealizeMode::Restored],
    )))
    .unwrap();
    let on = cell(&out, |s| s.cell.axis_offset);
    let off = cell(&out, |s| !s.cell.axis_offset);
    let (p_on, p_off) = (on.psnr_mean.unwrap(), off.psnr_mean.unwrap());
    let drop = off.ba_mean - on.ba_mean;
    verdict(
        p_on > p_off && drop <= C5_MAX_BA_DROP,
        format!(
            "PSNR on {p_on:.3} vs off {p_off:.3}; BA on {:.4} vs off {:.4} (drop {drop:.4}, limit {C5_MAX_BA_DROP})",
            on.ba_mean, off.ba_mean
        ),
    )
}

fn c6_variant_tradeoff() -> Verdict {
    let params = ModemParams {
        gamma: phasemark::modem::SpsParams::new(C6_GAMMA).unwrap(),
        ..Default::default()
    };
    let noise = Normal::new(0.0, C6_PHASE_NOISE).unwrap();
    let order = [Variant::Pcq, Variant::Sps, Variant::Ips, Variant::Apm];
    let mut dist = Vec::new();
    let mut ba = Vec::new();
    for &v in &order {
        // Same blocks, bits and noise for every variant.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (mut d, mut ok) = (0.0, 0usize);
        for _ in 0..C6_BLOCKS {
            let block: [Complex64; 4] = std::array::from_fn(|_| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let bit = rng.random::<bool>();
            let (marked, _) = embed_block(&block, bit, v, &params);
            d += block
                .iter()
                .zip(&marked)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
            let noisy = marked.map(|c| c * Complex64::from_polar(1.0, rng.sample(noise)));
            ok += usize::from(detect_block(&noisy, v, &params).bit == bit);
        }
        dist.push(d / C6_BLOCKS as f64);
        ba.push(ok as f64 / C6_BLOCKS as f64);
    }
    let dist_ok = dist.windows(2).all(|w| w[0] <= w[1]);
    let ba_ok = ba.windows(2).all(|w| {
        let se = proportion_se(w[0], C6_BLOCKS).max(proportion_se(w[1], C6_BLOCKS));
        w[0] <= w[1] + se
    });
    let fmt = |xs: &[f64]| {
        order
            .iter()
            .zip(xs)
            .map(|(v, x)| format!("{v}={x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    verdict(
        dist_ok && ba_ok,
        format!("distortion {} | BA {}", fmt(&dist), fmt(&ba)),
    )
}

fn c7_real_output() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut restored_ok = true;
    let mut cutoff_errors = 0;
    for i in 0..C7_EMBEDS {
        let variant = Variant::ALL[i % 4];
        let key = rng.random::<u64>();
        let z = gaussian_latent(7_000 + i as u64);
        for mode in [RealizeMode::Restored, RealizeMode::Cutoff] {
            let cfg = PipelineConfig {
                band: BandConfig::default().with(|b| b.key = key).unwrap(),
                variant,
                realize: mode,
                ..Default::default()
            };
            let p = Pipeline::new(cfg).unwrap();
            let msg = random_message(p.message_bits(), &mut rng);
            match (mode, p.embed_latent(&z, &msg)) {
                (RealizeMode::Restored, Ok((_, d))) => {
                    let ratio = d.max_imag_residual / (1.0 + d.max_real);
                    worst = worst.max(ratio);
                    restored_ok &= ratio < C7_TOLERANCE;
                }
                (RealizeMode::Restored, Err(_)) => restored_ok = false,
                (RealizeMode::Cutoff, r) => cutoff_errors += usize::from(r.is_err()),
            }
        }
    }
    verdict(
        restored_ok && cutoff_errors == 0,
        format!("worst |Im|/(1+max|Re|) = {worst:.2e} (< {C7_TOLERANCE:e}); cutoff errors {cutoff_errors}"),
    )
}

fn c8_latent_center_crop() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    let mut checks = 0;
    for v in Variant::ALL {
        for i in 0..C8_LATENTS_PER_VARIANT {
            let cfg = PipelineConfig {
                band: BandConfig::default()
                    .with(|b| b.key = rng.random())
                    .unwrap(),
                variant: v,
                ..Default::default()
            };
            let p = Pipeline::new(cfg).unwrap();
            let msg = random_message(p.message_bits(), &mut rng);
            let wm = p
                .embed(&Carrier::Latent(gaussian_latent(8_000 + i as u64)), &msg)
                .unwrap()
                .output;
            for s in 44..=64 {
                let cropped = apply(
                    &wm,
                    &AttackSpec::LatentCenterCrop { size: s },
                    &AttackContext::default(),
                )
                .unwrap();
                let ba = p.verify(&cropped, &msg, ALPHA).unwrap().bit_accuracy;
                checks += 1;
                if ba != 1.0 {
                    failures.push(format!("{v} s={s} ba={ba}"));
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{checks} crops, {} below BA 1.0 {:?}",
            failures.len(),
            failures.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn c9_latency() -> Verdict {
    let plan = LatencyPlan {
        runs: 200,
        warmup: 20,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for v in Variant::ALL {
        let l = measure_latency(v, &plan, 9).unwrap();
        pass &= l.embed_us_median < C9_MAX_TRANSFORM_US && l.detect_us_median < C9_MAX_TRANSFORM_US;
        parts.push(format!(
            "{v} embed {:.0}us detect {:.0}us",
            l.embed_us_median, l.detect_us_median
        ));
    }
    let cb = Codebook::generate(POPULATION as usize, 128, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut times = Vec::new();
    for _ in 0..C9_MATCH_QUERIES {
        let q = random_message(128, &mut rng);
        let t = Instant::now();
        std::hint::black_box(cb.best_match(&q).unwrap());
        times.push(t.elapsed().as_secs_f64() * 1e6);
    }
    times.sort_by(f64::total_cmp);
    let worst = *times.last().unwrap();
    pass &= worst < C9_MAX_MATCH_US;
    parts.push(format!(
        "1e6 codebook match median {:.0}us max {worst:.0}us",
        times[times.len() / 2]
    ));
    verdict(pass, parts.join("; "))
}

fn threshold_json(args: &[&str]) -> serde_json::Value {
    let out = Command::new(bin())
        .arg("threshold")
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Independent tail oracle: for L <= 128 every partial sum of binomial
/// coefficients fits in u128, and u128 -> f64 rounds to nearest.
fn u128_tail(bits: u32, k: u32) -> f64 {
    let mut c: u128 = 1;
    let mut coeffs = vec![1u128];
    for j in 1..=bits {
        c = c / j as u128 * (bits - j + 1) as u128
            + c % j as u128 * (bits - j + 1) as u128 / j as u128;
        coeffs.push(c);
    }
    let sum: u128 = coeffs[k as usize..].iter().sum();
    sum as f64 / 2f64.powi(bits as i32)
}

fn c10_threshold_goldens() -> Verdict {
    let vrf = threshold_json(&["--bits", "128", "--alpha", "0.01"]);
    let idf = threshold_json(&[
        "--bits",
        "128",
        "--alpha",
        "0.01",
        "--population",
        "1000000",
    ]);
    let tiny = threshold_json(&["--bits", "2", "--alpha", "0.3"]);
    // Exact-rational oracle values (Python fractions), frozen.
    let want_vrf = (78, 0.609375, 0.008335367134848675);
    let want_idf = (96, 0.75, 6.420881933046558e-09);
    let get = |v: &serde_json::Value| {
        (
            v["k"].as_u64().unwrap(),
            v["tau"].as_f64().unwrap(),
            v["tail"].as_f64().unwrap(),
        )
    };
    let (gv, gi, gt) = (get(&vrf), get(&idf), get(&tiny));
    let pass = gv == (want_vrf.0, want_vrf.1, want_vrf.2)
        && gi == (want_idf.0, want_idf.1, want_idf.2)
        && gv.2 == u128_tail(128, 78)
        && gi.2 == u128_tail(128, 96)
        && gi.1 > gv.1
        && gt.0 == 2
        && gt.1 == 1.0;
    verdict(
        pass,
        format!(
            "vrf k={} tau={} tail={:e}; idf k={} tau={} tail={:e}; L=2 a=0.3 k={} tau={}",
            gv.0, gv.1, gv.2, gi.0, gi.1, gi.2, gt.0, gt.1
        ),
    )
}

fn c11_conformance() -> Verdict {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/default_plan.json");
    let golden = fs::read(&fixture).unwrap();
    let export = || Command::new(bin()).arg("plan").output().unwrap().stdout;
    let (a, b) = (export(), export());
    let plan_stable = a == b && a == golden;

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.pmlt");
    save_latent(&gaussian_latent(11), &input).unwrap();
    let msg = "f00dfacecafebeef0123456789abcdef";
    let mut round_trips = Vec::new();
    for v in Variant::ALL {
        let out = dir.path().join(format!("{v}.pmlt"));
        let common = ["--variant", v.as_str(), "--key", "1234"];
        let embed = Command::new(bin())
            .args(["embed", "--in"])
            .arg(&input)
            .arg("--out")
            .arg(&out)
            .args(common)
            .args(["--message", msg])
            .output()
            .unwrap();
        let verify = Command::new(bin())
            .args(["verify", "--in"])
            .arg(&out)
            .args(common)
            .args(["--message", msg, "--alpha", "0.01"])
            .output()
            .unwrap();
        let report: serde_json::Value = serde_json::from_slice(&verify.stdout).unwrap_or_default();
        round_trips.push(
            embed.status.success()
                && verify.status.code() == Some(0)
                && report["bit_accuracy"].as_f64() == Some(1.0),
        );
    }
    verdict(
        plan_stable && round_trips.iter().all(|&x| x),
        format!(
            "plan json stable={plan_stable} ({} bytes); cross-process round trips {round_trips:?}",
            a.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "clean-channel exactness", c1_clean_exactness),
        (2, "FPR calibration", c2_fpr_calibration),
        (3, "Hermitian ablation trend", c3_hermitian_ablation),
        (4, "capacity trend", c4_capacity_trend),
        (5, "axis-offset trade", c5_axis_offset),
        (6, "variant trade-off ordering", c6_variant_tradeoff),
        (7, "real-output guarantee", c7_real_output),
        (8, "latent center-crop robustness", c8_latent_center_crop),
        (9, "single-shot latency", c9_latency),
        (10, "threshold golden values", c10_threshold_goldens),
        (11, "cross-implementation conformance", c11_conformance),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {n:>2} [{}] {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
