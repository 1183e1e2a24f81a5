//! Mid-band block selection shared by embedder and detector.
//!
//! Candidates are 2×2 blocks whose top-left corner `(du, dv)` (centered
//! coordinates, both even) lies in the strict upper half-plane `du <= -2`, so
//! every block's conjugate mirror lands in the lower half and never collides
//! with another selected bin. Blocks are kept when their centroid radius
//! `sqrt((du+0.5)^2 + (dv+0.5)^2)` is within `[r_lo, r_hi]` and, with axis
//! offsets on, when the centroid is more than `axis_offset_width` bins from
//! both principal axes.
//!
//! Canonical order is (radius, angle, du, dv). Radius and angle are compared
//! exactly on the doubled integer centroid `(2du+1, 2dv+1)`, so the order does
//! not depend on floating-point `atan2`.
//!
//! The keyed permutation sorts candidate index `i` by
//! `mix64(key + (i+1) * 0x9E3779B97F4A7C15)` (wrapping, splitmix64 finalizer),
//! ties by `i`. Every channel uses the same permutation and takes its first
//! `bits_per_channel` entries.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix64, GOLDEN_GAMMA};
use crate::spectrum::centered_to_index;

/// Raw band parameters, as they appear in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandParams {
    pub crop_size: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    pub bits_per_channel: usize,
    pub n_channels: usize,
    pub axis_offset: bool,
    pub axis_offset_width: f64,
    pub key: u64,
}

impl Default for BandParams {
    fn default() -> Self {
        Self {
            crop_size: 44,
            r_lo: 10.0,
            r_hi: 18.0,
            bits_per_channel: 32,
            n_channels: 4,
            axis_offset: true,
            axis_offset_width: 2.0,
            key: 0,
        }
    }
}

/// Validated band configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandParams", into = "BandParams")]
#[derive(Default)]
pub struct BandConfig(BandParams);

impl TryFrom<BandParams> for BandConfig {
    type Error = Error;

    fn try_from(p: BandParams) -> Result<Self> {
        BandConfig::new(p)
    }
}

impl From<BandConfig> for BandParams {
    fn from(c: BandConfig) -> Self {
        c.0
    }
}

impl BandConfig {
    pub fn new(p: BandParams) -> Result<Self> {
        if p.crop_size < 4 {
            return Err(Error::Config(format!("crop size {} below 4", p.crop_size)));
        }
        let half = p.crop_size as f64 / 2.0;
        if !(p.r_lo > 0.0 && p.r_lo < p.r_hi && p.r_hi < half) {
            return Err(Error::Config(format!(
                "band [{}, {}] must satisfy 0 < r_lo < r_hi < crop/2 = {half}",
                p.r_lo, p.r_hi
            )));
        }
        if p.bits_per_channel == 0 || p.n_channels == 0 {
            return Err(Error::Config(
                "bits_per_channel and n_channels must be at least 1".into(),
            ));
        }
        if !(p.axis_offset_width >= 0.0 && p.axis_offset_width.is_finite()) {
            return Err(Error::Config(format!(
                "axis offset width {} must be finite and >= 0",
                p.axis_offset_width
            )));
        }
        Ok(Self(p))
    }

    pub fn params(&self) -> &BandParams {
        &self.0
    }

    pub fn crop_size(&self) -> usize {
        self.0.crop_size
    }

    pub fn bits_per_channel(&self) -> usize {
        self.0.bits_per_channel
    }

    pub fn n_channels(&self) -> usize {
        self.0.n_channels
    }

    pub fn key(&self) -> u64 {
        self.0.key
    }

    pub fn axis_offset(&self) -> bool {
        self.0.axis_offset
    }

    /// Total message length `L`.
    pub fn message_bits(&self) -> usize {
        self.0.bits_per_channel * self.0.n_channels
    }

    /// Copy with selected fields replaced, re-validated.
    pub fn with(&self, edit: impl FnOnce(&mut BandParams)) -> Result<Self> {
        let mut p = self.0.clone();
        edit(&mut p);
        Self::new(p)
    }
}

/// A 2×2 block given by its top-left corner in centered coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockPos {
    pub du: i64,
    pub dv: i64,
}

impl BlockPos {
    pub fn radius(&self) -> f64 {
        ((self.du as f64 + 0.5).powi(2) + (self.dv as f64 + 0.5).powi(2)).sqrt()
    }

    /// Doubled centroid `(2du+1, 2dv+1)`.
    fn doubled_centroid(&self) -> (i64, i64) {
        (2 * self.du + 1, 2 * self.dv + 1)
    }

    /// Unshifted bins `[c1, c2, c3, c4]` in row-major block order.
    pub fn bins(&self, n: usize) -> [(usize, usize); 4] {
        let r0 = centered_to_index(self.du, n);
        let r1 = centered_to_index(self.du + 1, n);
        let c0 = centered_to_index(self.dv, n);
        let c1 = centered_to_index(self.dv + 1, n);
        [(r0, c0), (r0, c1), (r1, c0), (r1, c1)]
    }
}

/// Compare `atan2(y, x)` of two nonzero integer vectors exactly.
fn angle_cmp(a: (i64, i64), b: (i64, i64)) -> Ordering {
    // Angles in (-pi, 0) sort before [0, pi]; y == 0 only occurs for x > 0
    // or x < 0, i.e. angle 0 or pi, both in the upper group.
    let upper = |(_, y): (i64, i64)| -> bool { y >= 0 };
    match (upper(a), upper(b)) {
        (false, true) => Ordering::Less,
        (true, false) => Ordering::Greater,
        _ => {
            let cross = a.0 as i128 * b.1 as i128 - a.1 as i128 * b.0 as i128;
            0.cmp(&cross)
        }
    }
}

fn canonical_cmp(a: &BlockPos, b: &BlockPos) -> Ordering {
    let (ax, ay) = a.doubled_centroid();
    let (bx, by) = b.doubled_centroid();
    (ax * ax + ay * ay)
        .cmp(&(bx * bx + by * by))
        .then_with(|| angle_cmp((ax, ay), (bx, by)))
        .then(a.du.cmp(&b.du))
        .then(a.dv.cmp(&b.dv))
}

/// All admissible blocks in canonical order.
pub fn enumerate_candidates(cfg: &BandConfig) -> Vec<BlockPos> {
    let p = cfg.params();
    let n = p.crop_size as i64;
    // Centered range is [-n/2, (n-1)/2]; for even n the row -n/2 is the
    // Nyquist row, which mirrors onto itself and is therefore excluded.
    let min_row = if n % 2 == 0 { -n / 2 + 1 } else { -(n - 1) / 2 };
    let min_col = -(n / 2);
    let max_col = (n - 1) / 2 - 1;
    let lo_sq = 4.0 * p.r_lo * p.r_lo;
    let hi_sq = 4.0 * p.r_hi * p.r_hi;
    let axis_limit = 2.0 * p.axis_offset_width;

    let mut out = Vec::new();
    let first_row = min_row + min_row.rem_euclid(2);
    for du in (first_row..=-2).step_by(2) {
        let first_col = min_col + min_col.rem_euclid(2);
        for dv in (first_col..=max_col).step_by(2) {
            let block = BlockPos { du, dv };
            let (x, y) = block.doubled_centroid();
            let q = (x * x + y * y) as f64;
            if q < lo_sq || q > hi_sq {
                continue;
            }
            if p.axis_offset && ((x.abs() as f64) <= axis_limit || (y.abs() as f64) <= axis_limit) {
                continue;
            }
            out.push(block);
        }
    }
    out.sort_by(canonical_cmp);
    out
}

/// Deterministic keyed permutation of `0..n`.
pub fn keyed_permutation(n: usize, key: u64) -> Vec<usize> {
    let mut order: Vec<(u64, usize)> = (0..n)
        .map(|i| {
            let salt = (i as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA);
            (mix64(key.wrapping_add(salt)), i)
        })
        .collect();
    order.sort_unstable();
    order.into_iter().map(|(_, i)| i).collect()
}

/// The per-channel block assignment: bit `i` of channel `c` lives in
/// `blocks(c)[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    config: BandConfig,
    blocks: Vec<BlockPos>,
    candidates: usize,
}

#[derive(Serialize)]
struct PlanExport<'a> {
    #[serde(flatten)]
    config: &'a BandParams,
    candidates: usize,
    channels: Vec<ChannelExport>,
}

#[derive(Serialize)]
struct ChannelExport {
    channel: usize,
    blocks: Vec<[i64; 2]>,
}

impl BlockPlan {
    pub fn build(cfg: &BandConfig) -> Result<Self> {
        let candidates = enumerate_candidates(cfg);
        let need = cfg.bits_per_channel();
        if candidates.len() < need {
            return Err(Error::Capacity {
                required: need,
                available: candidates.len(),
            });
        }
        let perm = keyed_permutation(candidates.len(), cfg.key());
        let blocks = perm[..need].iter().map(|&i| candidates[i]).collect();
        Ok(Self {
            config: cfg.clone(),
            blocks,
            candidates: candidates.len(),
        })
    }

    pub fn config(&self) -> &BandConfig {
        &self.config
    }

    pub fn n_channels(&self) -> usize {
        self.config.n_channels()
    }

    pub fn crop_size(&self) -> usize {
        self.config.crop_size()
    }

    /// Capacity `L` in bits.
    pub fn capacity(&self) -> usize {
        self.blocks.len() * self.n_channels()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates
    }

    /// Blocks of one channel, in bit order. All channels share the list.
    pub fn blocks(&self, channel: usize) -> &[BlockPos] {
        assert!(
            channel < self.n_channels(),
            "channel {channel} outside plan"
        );
        &self.blocks
    }

    /// Message bit index carried by block `i` of `channel`.
    pub fn bit_index(&self, channel: usize, i: usize) -> usize {
        channel * self.blocks.len() + i
    }

    /// `(bin, mirror)` pairs for every selected bin of one channel.
    pub fn mirror_map(&self) -> Vec<((usize, usize), (usize, usize))> {
        let n = self.crop_size();
        self.blocks
            .iter()
            .flat_map(|b| b.bins(n))
            .map(|(r, c)| ((r, c), crate::spectrum::mirror_index(r, c, n, n)))
            .collect()
    }

    /// Canonical JSON export (channel -> list of `[du, dv]`).
    pub fn to_json(&self) -> String {
        let export = PlanExport {
            config: self.config.params(),
            candidates: self.candidates,
            channels: (0..self.n_channels())
                .map(|channel| ChannelExport {
                    channel,
                    blocks: self.blocks.iter().map(|b| [b.du, b.dv]).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&export).expect("plan serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Brute-force oracle: scan every centered offset pair and apply the
    /// admission rules literally, with float radii and atan2.
    fn oracle(crop: i64, r_lo: f64, r_hi: f64, offsets: bool, width: f64) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for du in -crop..crop {
            for dv in -crop..crop {
                if du % 2 != 0 || dv % 2 != 0 || du > -2 {
                    continue;
                }
                // All four bins inside the centered range, none on the
                // even-size Nyquist row.
                let lo = -(crop / 2);
                let hi = (crop - 1) / 2;
                if du < lo || du + 1 > hi || dv < lo || dv + 1 > hi {
                    continue;
                }
                if crop % 2 == 0 && du == lo {
                    continue;
                }
                let (x, y) = (du as f64 + 0.5, dv as f64 + 0.5);
                let r = (x * x + y * y).sqrt();
                if r < r_lo || r > r_hi {
                    continue;
                }
                if offsets && (x.abs() <= width || y.abs() <= width) {
                    continue;
                }
                out.push((du, dv));
            }
        }
        out.sort_by(|a, b| {
            let ra = ((a.0 as f64 + 0.5).powi(2) + (a.1 as f64 + 0.5).powi(2)).sqrt();
            let rb = ((b.0 as f64 + 0.5).powi(2) + (b.1 as f64 + 0.5).powi(2)).sqrt();
            let ta = (a.1 as f64 + 0.5).atan2(a.0 as f64 + 0.5);
            let tb = (b.1 as f64 + 0.5).atan2(b.0 as f64 + 0.5);
            ra.partial_cmp(&rb)
                .unwrap()
                .then(ta.partial_cmp(&tb).unwrap())
                .then(a.cmp(b))
        });
        out
    }

    fn cfg(edit: impl FnOnce(&mut BandParams)) -> BandConfig {
        BandConfig::default().with(edit).unwrap()
    }

    fn as_pairs(v: &[BlockPos]) -> Vec<(i64, i64)> {
        v.iter().map(|b| (b.du, b.dv)).collect()
    }

    #[test]
    fn default_band_matches_oracle() {
        let got = enumerate_candidates(&BandConfig::default());
        let want = oracle(44, 10.0, 18.0, true, 2.0);
        assert_eq!(as_pairs(&got), want);
        assert!(got.len() >= 32);
        // Frozen from the oracle.
        assert_eq!(want.len(), 70);
        assert_eq!(oracle(44, 10.0, 18.0, false, 2.0).len(), 86);
    }

    #[test]
    fn toy_band_matches_oracle() {
        let c = BandConfig::new(BandParams {
            crop_size: 8,
            r_lo: 1.5,
            r_hi: 2.2,
            axis_offset: false,
            bits_per_channel: 1,
            ..BandParams::default()
        })
        .unwrap();
        let got = enumerate_candidates(&c);
        let want = oracle(8, 1.5, 2.2, false, 2.0);
        assert_eq!(as_pairs(&got), want);
        assert_eq!(want, vec![(-2, 0), (-2, -2)]);
    }

    #[test]
    fn many_configs_match_oracle() {
        for crop in [9usize, 16, 31, 44, 64] {
            for &(lo, hi) in &[(1.5, 3.5), (3.0, 7.2), (2.0, 4.4)] {
                if hi >= crop as f64 / 2.0 {
                    continue;
                }
                for offsets in [false, true] {
                    let c = cfg(|p| {
                        p.crop_size = crop;
                        p.r_lo = lo;
                        p.r_hi = hi;
                        p.axis_offset = offsets;
                        p.axis_offset_width = 1.0;
                    });
                    assert_eq!(
                        as_pairs(&enumerate_candidates(&c)),
                        oracle(crop as i64, lo, hi, offsets, 1.0),
                        "crop {crop} band [{lo}, {hi}] offsets {offsets}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_bad_band() {
        let bad = |edit: fn(&mut BandParams)| {
            let mut p = BandParams::default();
            edit(&mut p);
            BandConfig::new(p).is_err()
        };
        assert!(bad(|p| {
            p.r_lo = 18.0;
            p.r_hi = 10.0
        }));
        assert!(bad(|p| p.r_hi = 22.0));
        assert!(bad(|p| p.r_lo = 0.0));
        assert!(bad(|p| p.bits_per_channel = 0));
        assert!(bad(|p| p.n_channels = 0));
        let err: std::result::Result<BandConfig, _> =
            serde_json::from_str(r#"{"r_lo": 12, "r_hi": 11}"#);
        assert!(err.is_err());
    }

    #[test]
    fn plan_determinism_and_keying() {
        let a = BlockPlan::build(&BandConfig::default()).unwrap();
        let b = BlockPlan::build(&BandConfig::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());

        let c = BlockPlan::build(&cfg(|p| p.key = 99)).unwrap();
        assert_ne!(a.blocks(0), c.blocks(0));
        // Same candidate set: full-capacity plans are permutations of each other.
        let full = |key| {
            let cf = cfg(|p| {
                p.key = key;
                p.bits_per_channel = 70;
            });
            let plan = BlockPlan::build(&cf).unwrap();
            plan.blocks(0).iter().copied().collect::<HashSet<_>>()
        };
        assert_eq!(full(0), full(99));
    }

    #[test]
    fn capacity_error_reports_counts() {
        let err = BlockPlan::build(&cfg(|p| p.bits_per_channel = 700)).unwrap_err();
        match err {
            Error::Capacity {
                required,
                available,
            } => {
                assert_eq!(required, 700);
                assert_eq!(available, 70);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selected_bins_and_mirrors_never_collide() {
        for key in 0..20 {
            let plan = BlockPlan::build(&cfg(|p| p.key = key)).unwrap();
            let mut seen = HashSet::new();
            for (bin, mirror) in plan.mirror_map() {
                assert_ne!(bin, mirror);
                assert!(seen.insert(bin), "duplicate bin {bin:?}");
                assert!(seen.insert(mirror), "mirror collision {mirror:?}");
            }
            assert_eq!(seen.len(), 2 * 4 * 32);
            for b in plan.blocks(0) {
                assert!(b.du.abs() as f64 <= 19.0 && b.dv.abs() as f64 <= 19.0);
                assert!((10.0..=18.0).contains(&b.radius()));
            }
        }
    }

    #[test]
    fn offsets_never_add_candidates() {
        for (lo, hi) in [(10.0, 18.0), (3.0, 9.0), (12.5, 21.0)] {
            let on = enumerate_candidates(&cfg(|p| {
                p.r_lo = lo;
                p.r_hi = hi
            }));
            let off = enumerate_candidates(&cfg(|p| {
                p.r_lo = lo;
                p.r_hi = hi;
                p.axis_offset = false;
            }));
            assert!(on.len() <= off.len());
            assert!(on.iter().all(|b| off.contains(b)));
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let p = keyed_permutation(100, 12345);
        let mut sorted = p.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(p, keyed_permutation(100, 12346));
    }
}
