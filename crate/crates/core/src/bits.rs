//! Fixed-width bit strings.
//!
//! Bits are stored most-significant first: `bits[0]` carries weight
//! `2^(width-1)` when the string is read as a binary number. Every module in
//! this crate uses the same convention, so index `i` (0-based) of a
//! `BitString` is the `(i+1)`-th symbol of the textual form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest width that [`BitString::to_int`] / [`BitString::from_int`] support.
pub const MAX_INT_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitsError {
    #[error("value {value} does not fit in {width} bits")]
    Overflow { value: u64, width: usize },
    #[error("width {0} is outside 1..=64")]
    BadWidth(usize),
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("invalid bit character {ch:?} at offset {offset}")]
    Parse { ch: char, offset: usize },
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new(bits: Vec<bool>) -> Self {
        BitString { bits }
    }

    pub fn zeros(width: usize) -> Self {
        BitString {
            bits: vec![false; width],
        }
    }

    pub fn ones(width: usize) -> Self {
        BitString {
            bits: vec![true; width],
        }
    }

    /// Binary expansion of `value` in exactly `width` bits, MSB first.
    pub fn from_int(value: u64, width: usize) -> Result<Self, BitsError> {
        if width == 0 || width > MAX_INT_WIDTH {
            return Err(BitsError::BadWidth(width));
        }
        if width < 64 && value >> width != 0 {
            return Err(BitsError::Overflow { value, width });
        }
        let bits = (0..width)
            .map(|i| (value >> (width - 1 - i)) & 1 == 1)
            .collect();
        Ok(BitString { bits })
    }

    /// Positional value `sum_j 2^(width-j) * bit_j` (1-based `j`).
    ///
    /// Widths above 64 silently keep only the low 64 bits.
    pub fn to_int(&self) -> u64 {
        self.bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// 0-based access.
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &BitString) -> Result<usize, BitsError> {
        if self.width() != other.width() {
            return Err(BitsError::WidthMismatch {
                left: self.width(),
                right: other.width(),
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count())
    }

    pub fn parity(&self) -> bool {
        self.count_ones() % 2 == 1
    }

    /// 1 iff strictly more than half of the bits are set.
    pub fn majority(&self) -> bool {
        2 * self.count_ones() > self.width()
    }

    /// Bitwise XOR of two equal-width strings.
    pub fn xor(&self, other: &BitString) -> Result<BitString, BitsError> {
        if self.width() != other.width() {
            return Err(BitsError::WidthMismatch {
                left: self.width(),
                right: other.width(),
            });
        }
        Ok(BitString {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect(),
        })
    }

    pub fn complement(&self) -> BitString {
        BitString {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Copy with the 0-based bit `index` negated.
    pub fn flipped(&self, index: usize) -> BitString {
        let mut bits = self.bits.clone();
        bits[index] = !bits[index];
        BitString { bits }
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut bits = Vec::with_capacity(self.width() + other.width());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&other.bits);
        BitString { bits }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> BitString {
        BitString {
            bits: self.bits[range].to_vec(),
        }
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        BitString { bits }
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitString {
            bits: iter.into_iter().collect(),
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .enumerate()
            .map(|(offset, ch)| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(BitsError::Parse { ch, offset }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString::new)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of bits needed to write `n` in binary, i.e. `ceil(log2(n + 1))`.
pub fn bits_for(n: u64) -> usize {
    (u64::BITS - n.leading_zeros()) as usize
}
