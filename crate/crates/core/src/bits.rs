//! Bit strings and MSB-first bit streams.

use std::fmt;

use crate::error::{ClrError, Result};

/// A finite string of bits produced by one of the coders.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Codeword {
    bits: Vec<bool>,
}

impl Codeword {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ClrError::Decode(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn extend(&mut self, other: &Codeword) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    /// True when `self` is a (non-strict) prefix of `other`.
    pub fn is_prefix_of(&self, other: &Codeword) -> bool {
        other.bits.starts_with(&self.bits)
    }
}

impl fmt::Display for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Codeword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Codeword({self})")
    }
}

/// Accumulates bits into bytes, most significant bit first.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn write_codeword(&mut self, cw: &Codeword) {
        for &b in cw.bits() {
            self.write_bit(b);
        }
    }

    /// Number of bits written so far.
    pub fn bit_len(&self) -> usize {
        self.len
    }

    /// Returns the bytes; the final byte is zero padded.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Anything that yields bits one at a time.
pub trait BitSource {
    fn next_bit(&mut self) -> Option<bool>;

    fn read_bit(&mut self) -> Result<bool> {
        self.next_bit()
            .ok_or_else(|| ClrError::Decode("unexpected end of bit stream".into()))
    }

    fn read_bits_u64(&mut self, width: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Ok(v)
    }
}

/// Reads bits MSB-first from a byte slice.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Bits consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

impl BitSource for BitReader<'_> {
    fn next_bit(&mut self) -> Option<bool> {
        let byte = *self.bytes.get(self.pos / 8)?;
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Some(bit)
    }
}

/// Reads from an in-memory slice of bits.
#[derive(Debug, Clone)]
pub struct SliceSource<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(bits: &'a [bool]) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

impl BitSource for SliceSource<'_> {
    fn next_bit(&mut self) -> Option<bool> {
        let b = *self.bits.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_reader_roundtrip() {
        let cw = Codeword::parse("1011001110").unwrap();
        let mut w = BitWriter::new();
        w.write_codeword(&cw);
        assert_eq!(w.bit_len(), 10);
        let bytes = w.into_bytes();
        assert_eq!(bytes, vec![0b1011_0011, 0b1000_0000]);
        let mut r = BitReader::new(&bytes);
        let back: Vec<bool> = (0..10).map(|_| r.read_bit().unwrap()).collect();
        assert_eq!(back, cw.bits());
    }

    #[test]
    fn reader_reports_truncation() {
        let mut r = BitReader::new(&[]);
        assert!(r.read_bit().is_err());
    }

    #[test]
    fn prefix_relation() {
        let a = Codeword::parse("10").unwrap();
        let b = Codeword::parse("101").unwrap();
        assert!(a.is_prefix_of(&b));
        assert!(!b.is_prefix_of(&a));
        assert!(Codeword::parse("1x").is_err());
    }
}
