//! Exact binomial detection thresholds and codebooks.
//!
//! Under the null hypothesis every extracted bit is a fair coin, so the
//! number of matches against any fixed reference is Binomial(L, 1/2). The
//! verification threshold is the smallest `k` with `P(X >= k) <= alpha`; the
//! identification threshold uses `alpha / N` (Bonferroni over `N` users).
//! Tails are summed exactly with big integers and compared against
//! `alpha / N` as exact rationals (every `f64` is a dyadic rational).
//!
//! Codebook entry `n` is drawn from `SplitMix64::new(mix64(seed) ^ n * 0x9E3779B97F4A7C15)`,
//! one `u64` per 64 bits, MSB-first, unused low bits of the last word cleared.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::message::Message;
use crate::rng::{mix64, SplitMix64, GOLDEN_GAMMA};

pub const MAX_TAIL_BITS: usize = 4096;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_POPULATION: u64 = 1_000_000;

fn check_bits(bits: usize) -> Result<()> {
    if bits == 0 || bits > MAX_TAIL_BITS {
        return Err(Error::Config(format!(
            "message length {bits} outside 1..={MAX_TAIL_BITS}"
        )));
    }
    Ok(())
}

/// `sum_{j >= k} C(L, j)` for every `k`, index `k` in `0..=L`.
fn tail_numerators(bits: usize) -> Vec<BigUint> {
    let mut tails = vec![BigUint::zero(); bits + 2];
    let mut coeff = BigUint::one(); // C(L, L)
    for j in (0..=bits).rev() {
        tails[j] = &tails[j + 1] + &coeff;
        if j > 0 {
            // C(L, j-1) = C(L, j) * j / (L - j + 1)
            coeff = coeff * BigUint::from(j) / BigUint::from(bits - j + 1);
        }
    }
    tails.truncate(bits + 1);
    tails
}

/// `x * 2^exp` without intermediate overflow/underflow.
fn scale_pow2(mut x: f64, mut exp: i64) -> f64 {
    while exp > 1000 {
        x *= 2f64.powi(1000);
        exp -= 1000;
    }
    while exp < -1000 {
        x *= 2f64.powi(-1000);
        exp += 1000;
        if x == 0.0 {
            return 0.0;
        }
    }
    x * 2f64.powi(exp as i32)
}

/// Correctly rounded `num / 2^bits` (up to subnormal range).
fn dyadic_to_f64(num: &BigUint, bits: usize) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let width = num.bits();
    if width <= 64 {
        let top = num.iter_u64_digits().next().unwrap_or(0);
        return scale_pow2(top as f64, -(bits as i64));
    }
    let shift = width - 64;
    let top: u64 = (num >> shift).iter_u64_digits().next().unwrap();
    // Sticky bit keeps round-to-nearest correct after truncation.
    let rest = num - (BigUint::from(top) << shift);
    let mantissa = top | u64::from(!rest.is_zero());
    scale_pow2(mantissa as f64, shift as i64 - bits as i64)
}

/// `P(Binomial(L, 1/2) >= k)`, exact then rounded once.
pub fn binom_tail(bits: usize, k: usize) -> Result<f64> {
    check_bits(bits)?;
    if k > bits {
        return Err(Error::Config(format!("k = {k} exceeds L = {bits}")));
    }
    let mut sum = BigUint::zero();
    let mut coeff = BigUint::one();
    for j in (k..=bits).rev() {
        sum += &coeff;
        if j > 0 {
            coeff = coeff * BigUint::from(j) / BigUint::from(bits - j + 1);
        }
    }
    Ok(dyadic_to_f64(&sum, bits))
}

/// Decompose a positive finite `f64` as `mantissa * 2^exp` exactly.
fn dyadic_parts(x: f64) -> (u64, i64) {
    let b = x.to_bits();
    let raw_exp = ((b >> 52) & 0x7ff) as i64;
    let frac = b & ((1u64 << 52) - 1);
    if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    }
}

/// Exact test of `tail / 2^bits <= alpha / population`.
fn tail_within(tail: &BigUint, bits: usize, alpha: f64, population: u64) -> bool {
    let (m, e) = dyadic_parts(alpha);
    let lhs = tail * BigUint::from(population);
    let shift = e + bits as i64;
    if shift >= 0 {
        lhs <= BigUint::from(m) << shift as u64
    } else {
        lhs << (-shift) as u64 <= BigUint::from(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub bits: usize,
    pub alpha: f64,
    pub population: u64,
    /// Minimum number of matching bits for a positive decision.
    pub k: usize,
    /// `k / bits`.
    pub tau: f64,
    /// `P(Binomial(bits, 1/2) >= k)`.
    pub tail: f64,
}

impl ThresholdSpec {
    pub fn accepts(&self, matches: usize) -> bool {
        matches >= self.k
    }
}

/// Verification threshold at significance `alpha`.
pub fn threshold(bits: usize, alpha: f64) -> Result<ThresholdSpec> {
    bonferroni_threshold(bits, alpha, 1)
}

/// Identification threshold: significance `alpha / population`.
pub fn bonferroni_threshold(bits: usize, alpha: f64, population: u64) -> Result<ThresholdSpec> {
    check_bits(bits)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1]")));
    }
    if population == 0 {
        return Err(Error::Config("population must be at least 1".into()));
    }
    let tails = tail_numerators(bits);
    // Tails shrink with k, so the admissible set is a suffix [k*, L].
    let mut k = None;
    for j in (0..=bits).rev() {
        if tail_within(&tails[j], bits, alpha, population) {
            k = Some(j);
        } else {
            break;
        }
    }
    let k = k.ok_or(Error::ThresholdUnreachable {
        bits,
        alpha: alpha / population as f64,
    })?;
    Ok(ThresholdSpec {
        bits,
        alpha,
        population,
        k,
        tau: k as f64 / bits as f64,
        tail: dyadic_to_f64(&tails[k], bits),
    })
}

/// Fraction of trials whose bit accuracy reaches `tau`.
pub fn evaluate(accuracies: &[f64], tau: f64) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::Config("cannot evaluate an empty trial list".into()));
    }
    let hits = accuracies.iter().filter(|&&ba| ba >= tau).count();
    Ok(hits as f64 / accuracies.len() as f64)
}

/// `N` messages of `L` bits stored as packed words, entry-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    bits: usize,
    words_per_entry: usize,
    data: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub n: usize,
    pub bits: usize,
    pub seed: Option<u64>,
}

/// Result of a nearest-codeword search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodebookMatch {
    pub index: usize,
    pub matches: usize,
}

impl Codebook {
    pub fn generate(n: usize, bits: usize, seed: u64) -> Result<Self> {
        if n == 0 || bits == 0 {
            return Err(Error::Config("codebook needs n >= 1 and bits >= 1".into()));
        }
        let wpe = bits.div_ceil(64);
        let tail_mask = if bits.is_multiple_of(64) {
            !0u64
        } else {
            !0u64 << (64 - bits % 64)
        };
        let base = mix64(seed);
        let mut data = Vec::with_capacity(n * wpe);
        for entry in 0..n {
            let mut g = SplitMix64::new(base ^ (entry as u64).wrapping_mul(GOLDEN_GAMMA));
            for w in 0..wpe {
                let v = g.next_u64();
                data.push(if w + 1 == wpe { v & tail_mask } else { v });
            }
        }
        Ok(Self {
            bits,
            words_per_entry: wpe,
            data,
        })
    }

    pub fn from_messages(messages: &[Message]) -> Result<Self> {
        let first = messages
            .first()
            .ok_or_else(|| Error::Config("empty codebook".into()))?;
        let bits = first.len();
        let mut data = Vec::with_capacity(messages.len() * first.words().len());
        for m in messages {
            if m.len() != bits {
                return Err(Error::Length {
                    expected: bits,
                    actual: m.len(),
                });
            }
            data.extend_from_slice(m.words());
        }
        Ok(Self {
            bits,
            words_per_entry: bits.div_ceil(64),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.words_per_entry
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn entry(&self, index: usize) -> Message {
        let w = self.words_per_entry;
        Message::from_words(self.bits, self.data[index * w..(index + 1) * w].to_vec())
            .expect("entry width matches")
    }

    /// Entry with the most matching bits; ties go to the lowest index.
    pub fn best_match(&self, query: &Message) -> Result<CodebookMatch> {
        if query.len() != self.bits {
            return Err(Error::Length {
                expected: self.bits,
                actual: query.len(),
            });
        }
        let q = query.words();
        let (index, dist) = match self.words_per_entry {
            1 => nearest(self.data.chunks_exact(1), |e| (e[0] ^ q[0]).count_ones()),
            2 => nearest(self.data.chunks_exact(2), |e| {
                (e[0] ^ q[0]).count_ones() + (e[1] ^ q[1]).count_ones()
            }),
            w => nearest(self.data.chunks_exact(w), |e| {
                e.iter().zip(q).map(|(a, b)| (a ^ b).count_ones()).sum()
            }),
        };
        Ok(CodebookMatch {
            index,
            matches: self.bits - dist as usize,
        })
    }

    /// Write the flat binary (`bits/8` bytes per entry, MSB-first) plus a
    /// `<path>.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<()> {
        let path = path.as_ref();
        if !self.bits.is_multiple_of(8) {
            return Err(Error::Format(format!(
                "codebook files need a multiple of 8 bits, got {}",
                self.bits
            )));
        }
        let bytes_per_entry = self.bits / 8;
        let mut out = Vec::with_capacity(self.len() * bytes_per_entry);
        for entry in self.data.chunks_exact(self.words_per_entry) {
            let bytes: Vec<u8> = entry.iter().flat_map(|w| w.to_be_bytes()).collect();
            out.extend_from_slice(&bytes[..bytes_per_entry]);
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))?;
        let meta = CodebookMeta {
            n: self.len(),
            bits: self.bits,
            seed,
        };
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&side, json + "\n").map_err(|e| Error::io(side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CodebookMeta)> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let meta_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: CodebookMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
        if meta.bits == 0 || !meta.bits.is_multiple_of(8) || meta.n == 0 {
            return Err(Error::Format(format!("invalid codebook sidecar {meta:?}")));
        }
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bpe = meta.bits / 8;
        if raw.len() != meta.n * bpe {
            return Err(Error::Format(format!(
                "codebook has {} bytes, sidecar implies {}",
                raw.len(),
                meta.n * bpe
            )));
        }
        let wpe = meta.bits.div_ceil(64);
        let mut data = Vec::with_capacity(meta.n * wpe);
        for entry in raw.chunks_exact(bpe) {
            for w in 0..wpe {
                let mut word = [0u8; 8];
                let chunk = &entry[w * 8..((w + 1) * 8).min(bpe)];
                word[..chunk.len()].copy_from_slice(chunk);
                data.push(u64::from_be_bytes(word));
            }
        }
        Ok((
            Self {
                bits: meta.bits,
                words_per_entry: wpe,
                data,
            },
            meta,
        ))
    }
}

fn nearest<'a>(
    entries: impl Iterator<Item = &'a [u64]>,
    dist: impl Fn(&[u64]) -> u32,
) -> (usize, u32) {
    let mut best = (0usize, u32::MAX);
    for (i, e) in entries.enumerate() {
        let d = dist(e);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
