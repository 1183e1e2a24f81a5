//! Fixed-length bit messages.
//!
//! Bits are packed MSB-first into `u64` words: bit `i` is bit `63 - i % 64`
//! of word `i / 64`. Hex strings and codebook files use the same MSB-first
//! order, so bit 0 is the high nibble of the first hex digit.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Message {
    len: usize,
    words: Vec<u64>,
}

impl Message {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut msg = Self::zeros(0);
        for b in bits {
            if msg.len.is_multiple_of(64) {
                msg.words.push(0);
            }
            msg.len += 1;
            msg.set(msg.len - 1, b);
        }
        msg
    }

    /// Build from packed words; bits past `len` are cleared.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::Shape(format!(
                "{len} bits need {} words, got {}",
                len.div_ceil(64),
                words.len()
            )));
        }
        if !len.is_multiple_of(64) {
            let keep = len % 64;
            let last = words.len() - 1;
            words[last] &= !0u64 << (64 - keep);
        }
        Ok(Self { len, words })
    }

    pub fn from_hex(hex: &str) -> Result<Self> {
        let hex = hex.trim();
        let hex = hex
            .strip_prefix("0x")
            .or_else(|| hex.strip_prefix("0X"))
            .unwrap_or(hex);
        if hex.is_empty() {
            return Err(Error::Format("empty hex message".into()));
        }
        let mut bits = Vec::with_capacity(hex.len() * 4);
        for c in hex.chars() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| Error::Format(format!("invalid hex digit {c:?}")))?;
            for shift in (0..4).rev() {
                bits.push(nibble >> shift & 1 == 1);
            }
        }
        Ok(Self::from_bits(bits))
    }

    /// Hex rendering; a partial last nibble is zero-padded.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.len.div_ceil(4));
        for start in (0..self.len).step_by(4) {
            let mut nibble = 0u32;
            for i in start..start + 4 {
                nibble <<= 1;
                if i < self.len && self.get(i) {
                    nibble |= 1;
                }
            }
            out.push(char::from_digit(nibble, 16).unwrap());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit {i} out of range for {}-bit message",
            self.len
        );
        self.words[i / 64] >> (63 - i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(
            i < self.len,
            "bit {i} out of range for {}-bit message",
            self.len
        );
        let mask = 1u64 << (63 - i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn complement(&self) -> Self {
        let words = self.words.iter().map(|w| !w).collect();
        Self::from_words(self.len, words).expect("same word count")
    }

    /// Number of positions where the two messages agree.
    pub fn matches(&self, other: &Message) -> Result<usize> {
        if self.len != other.len {
            return Err(Error::Length {
                expected: self.len,
                actual: other.len,
            });
        }
        let diff: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        Ok(self.len - diff as usize)
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Message({}b, {})", self.len, self.to_hex())
    }
}

/// Fraction of matching bits.
pub fn bit_accuracy(a: &Message, b: &Message) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Length {
            expected: b.len(),
            actual: 0,
        });
    }
    Ok(a.matches(b)? as f64 / a.len() as f64)
}
