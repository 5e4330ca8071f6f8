//! Prefix-free universal codes for integers.
//!
//! `U_n` codes the non-negative integers in two regimes. Small values use a
//! canonical code `F` whose block sizes follow the Fibonacci numbers: one word
//! of length 1 (`0`), then 1, 1, 2, 3, 5, ... words of lengths 3, 4, 5, 6,
//! 7, ... (`100`, `1010`, `10110`, `10111`, ...). Each block continues by
//! adding one to the last word of the previous block and appending a `0`.
//! This schedule is Kraft-complete in the limit.
//!
//! One slot of the length-[`ESCAPE_LEN`] block is reserved as an escape
//! prefix. From the switch point on, values are written as the escape word
//! followed by the Elias-delta code of the value itself. The switch point is
//! the first value at which escape + delta is no longer than the `F` word it
//! replaces, so the combined length function stays non-decreasing and the
//! Kraft sum stays below one.
//!
//! `U` codes signed integers through the ordering 0, -1, 1, -2, 2, ...

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

use crate::bits::{BitSource, Codeword, SliceSource};
use crate::error::{ClrError, Result};

/// Length of the reserved escape word that introduces the Elias-delta regime.
pub const ESCAPE_LEN: u32 = 6;

// Elias-delta lengths of values whose bit length fits in 2^32 bits.
const MAX_GAMMA_ZEROS: u32 = 32;

#[derive(Debug, Clone, Copy)]
struct Block {
    len: u32,
    first_code: u64,
    slots: u64,
    f_start: u64,
    f_count: u64,
}

#[derive(Debug)]
struct Tables {
    blocks: Vec<Block>,
    escape_code: u64,
    switch_point: u64,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

fn build_tables() -> Tables {
    let mut blocks = Vec::new();
    let mut escape_code = 0;
    let (mut fa, mut fb) = (1u64, 1u64);
    let mut prev: Option<(u32, u64, u64)> = None;
    let mut f_next = 0u64;

    for len in (1u32..).filter(|&l| l != 2) {
        let slots = if len == 1 {
            1
        } else {
            let s = fa;
            (fa, fb) = (fb, fa + fb);
            s
        };
        let first_code = match prev {
            None => 0,
            Some((plen, pfirst, pslots)) => (pfirst + pslots) << (len - plen),
        };
        let f_count = if len == ESCAPE_LEN {
            escape_code = first_code + slots - 1;
            slots - 1
        } else {
            slots
        };

        if f_next > 0 && f_count > 0 && ESCAPE_LEN + length_e_u64(f_next) <= len {
            return Tables {
                blocks,
                escape_code,
                switch_point: f_next,
            };
        }

        blocks.push(Block {
            len,
            first_code,
            slots,
            f_start: f_next,
            f_count,
        });
        f_next += f_count;
        prev = Some((len, first_code, slots));
        assert!(len < 64, "F code tables overflowed before reaching the switch point");
    }
    unreachable!()
}

/// Smallest value coded with the Elias-delta regime.
pub fn switch_point() -> u64 {
    tables().switch_point
}

/// Length in bits of the longest `F` codeword.
pub fn max_f_len() -> u32 {
    tables().blocks.last().map_or(0, |b| b.len)
}

fn f_block(n: u64) -> Option<&'static Block> {
    let t = tables();
    if n >= t.switch_point {
        return None;
    }
    let idx = t.blocks.partition_point(|b| b.f_start + b.f_count <= n);
    t.blocks.get(idx)
}

/// The `F` codeword of `n`. Fails for `n` at or beyond the switch point.
pub fn encode_f(n: u64) -> Result<Codeword> {
    let b = f_block(n).ok_or(ClrError::OutOfRange {
        code: "F",
        value: n,
        limit: switch_point(),
    })?;
    let mut cw = Codeword::new();
    cw.push_bits(b.first_code + (n - b.f_start), b.len);
    Ok(cw)
}

/// Length of the `F` codeword of `n`.
pub fn length_f(n: u64) -> Result<u32> {
    f_block(n).map(|b| b.len).ok_or(ClrError::OutOfRange {
        code: "F",
        value: n,
        limit: switch_point(),
    })
}

fn bit_len_u64(n: u64) -> u64 {
    u64::from(64 - n.leading_zeros())
}

fn delta_len_from_bits(nbits: u64) -> u64 {
    // floor(log2 n) + 2 floor(log2(floor(log2 n) + 1)) + 1
    let lg = nbits - 1;
    let lgl = bit_len_u64(nbits) - 1;
    lg + 2 * lgl + 1
}

fn length_e_u64(n: u64) -> u32 {
    delta_len_from_bits(bit_len_u64(n)) as u32
}

/// Elias-delta length of `n >= 1`.
pub fn length_e(n: u64) -> Result<u32> {
    if n == 0 {
        return Err(ClrError::Domain("Elias-delta code is defined for n >= 1".into()));
    }
    Ok(length_e_u64(n))
}

fn write_delta(nbits: u64, bit: impl Fn(u64) -> bool, out: &mut Codeword) {
    let lbits = bit_len_u64(nbits);
    for _ in 0..lbits - 1 {
        out.push(false);
    }
    for i in (0..lbits).rev() {
        out.push((nbits >> i) & 1 == 1);
    }
    for i in (0..nbits - 1).rev() {
        out.push(bit(i));
    }
}

/// Standard Elias-delta codeword of `n >= 1`.
pub fn encode_e(n: u64) -> Result<Codeword> {
    length_e(n)?;
    let mut cw = Codeword::new();
    write_delta(bit_len_u64(n), |i| (n >> i) & 1 == 1, &mut cw);
    Ok(cw)
}

/// Reads an Elias-delta codeword; returns the payload bits, MSB first.
fn read_delta_bits<S: BitSource>(src: &mut S) -> Result<Vec<bool>> {
    let mut zeros = 0u32;
    while !src.read_bit()? {
        zeros += 1;
        if zeros > MAX_GAMMA_ZEROS {
            return Err(ClrError::Decode("Elias-delta length prefix too long".into()));
        }
    }
    let mut nbits = 1u64;
    for _ in 0..zeros {
        nbits = (nbits << 1) | u64::from(src.read_bit()?);
    }
    let mut bits = Vec::with_capacity(nbits as usize);
    bits.push(true);
    for _ in 1..nbits {
        bits.push(src.read_bit()?);
    }
    Ok(bits)
}

/// Decodes an Elias-delta codeword.
pub fn decode_e<S: BitSource>(src: &mut S) -> Result<u64> {
    let bits = read_delta_bits(src)?;
    if bits.len() > 64 {
        return Err(ClrError::Decode("Elias-delta value exceeds 64 bits".into()));
    }
    Ok(bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b)))
}

fn escape_word() -> Codeword {
    let mut cw = Codeword::new();
    cw.push_bits(tables().escape_code, ESCAPE_LEN);
    cw
}

/// `U_n`: universal code for non-negative integers.
pub fn encode_un(n: u64) -> Codeword {
    match encode_f(n) {
        Ok(cw) => cw,
        Err(_) => {
            let mut cw = escape_word();
            write_delta(bit_len_u64(n), |i| (n >> i) & 1 == 1, &mut cw);
            cw
        }
    }
}

pub fn length_un(n: u64) -> u32 {
    match f_block(n) {
        Some(b) => b.len,
        None => ESCAPE_LEN + length_e_u64(n),
    }
}

enum Prefix {
    F(u64),
    Escape,
}

fn read_prefix<S: BitSource>(src: &mut S) -> Result<Prefix> {
    let t = tables();
    let mut value = 0u64;
    let mut len = 0u32;
    let mut blocks = t.blocks.iter().peekable();
    loop {
        value = (value << 1) | u64::from(src.read_bit()?);
        len += 1;
        while blocks.peek().is_some_and(|b| b.len < len) {
            blocks.next();
        }
        match blocks.peek() {
            None => return Err(ClrError::Decode("bit pattern is not a U codeword".into())),
            Some(b) if b.len == len && value >= b.first_code && value - b.first_code < b.slots => {
                if len == ESCAPE_LEN && value == t.escape_code {
                    return Ok(Prefix::Escape);
                }
                return Ok(Prefix::F(b.f_start + (value - b.first_code)));
            }
            Some(_) => {}
        }
    }
}

/// Decodes one `U_n` codeword.
pub fn decode_un<S: BitSource>(src: &mut S) -> Result<u64> {
    match read_prefix(src)? {
        Prefix::F(n) => Ok(n),
        Prefix::Escape => {
            let n = decode_e(src)?;
            if n < switch_point() {
                return Err(ClrError::Decode(format!(
                    "escaped value {n} lies below the switch point"
                )));
            }
            Ok(n)
        }
    }
}

/// Maps 0, -1, 1, -2, 2, ... onto 0, 1, 2, 3, 4, ...
pub fn zigzag(z: i64) -> u64 {
    ((z << 1) ^ (z >> 63)) as u64
}

pub fn unzigzag(n: u64) -> i64 {
    ((n >> 1) as i64) ^ -((n & 1) as i64)
}

/// `U`: universal code for signed integers.
pub fn encode_u(z: i64) -> Codeword {
    encode_un(zigzag(z))
}

pub fn length_u(z: i64) -> u32 {
    length_un(zigzag(z))
}

pub fn decode_u<S: BitSource>(src: &mut S) -> Result<i64> {
    decode_un(src).map(unzigzag)
}

/// Decodes a `U` codeword at the start of `bits`; returns the value and the
/// number of bits consumed.
pub fn decode_u_bits(bits: &[bool]) -> Result<(i64, usize)> {
    let mut src = SliceSource::new(bits);
    let z = decode_u(&mut src)?;
    Ok((z, src.position()))
}

// Arbitrary-precision variants, used for lattice ranks.

pub fn length_un_big(n: &BigUint) -> u64 {
    match u64::try_from(n) {
        Ok(small) => u64::from(length_un(small)),
        Err(_) => u64::from(ESCAPE_LEN) + delta_len_from_bits(n.bits()),
    }
}

pub fn encode_un_big(n: &BigUint) -> Codeword {
    match u64::try_from(n) {
        Ok(small) => encode_un(small),
        Err(_) => {
            let mut cw = escape_word();
            write_delta(n.bits(), |i| n.bit(i), &mut cw);
            cw
        }
    }
}

pub fn decode_un_big<S: BitSource>(src: &mut S) -> Result<BigUint> {
    match read_prefix(src)? {
        Prefix::F(n) => Ok(BigUint::from(n)),
        Prefix::Escape => {
            let bits = read_delta_bits(src)?;
            let mut n = BigUint::zero();
            for b in bits {
                n <<= 1u32;
                if b {
                    n += 1u32;
                }
            }
            if n < BigUint::from(switch_point()) {
                return Err(ClrError::Decode("escaped value lies below the switch point".into()));
            }
            Ok(n)
        }
    }
}

pub fn zigzag_big(z: &BigInt) -> BigUint {
    let mag = z.magnitude();
    match z.sign() {
        Sign::Minus => (mag << 1u32) - BigUint::one(),
        _ => mag << 1u32,
    }
}

pub fn unzigzag_big(n: &BigUint) -> BigInt {
    let half = BigInt::from(n >> 1u32);
    if n.bit(0) {
        -half - BigInt::one()
    } else {
        half
    }
}

pub fn length_u_big(z: &BigInt) -> u64 {
    length_un_big(&zigzag_big(z))
}

pub fn encode_u_big(z: &BigInt) -> Codeword {
    encode_un_big(&zigzag_big(z))
}

pub fn decode_u_big<S: BitSource>(src: &mut S) -> Result<BigInt> {
    decode_un_big(src).map(|n| unzigzag_big(&n))
}

/// Code lengths of `U_n` over `0..=max_n`, with Kraft bookkeeping.
#[derive(Debug, Clone)]
pub struct CodeLengthTable {
    pub lengths: Vec<u32>,
    pub switch_point: u64,
}

impl CodeLengthTable {
    pub fn up_to(max_n: u64) -> Self {
        Self {
            lengths: (0..=max_n).map(length_un).collect(),
            switch_point: switch_point(),
        }
    }

    pub fn kraft_partial_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| (-f64::from(l)).exp2()).sum()
    }

    /// Upper bound on the Kraft mass of every value beyond the table.
    ///
    /// The `F` remainder is a finite sum and is computed exactly; the escaped
    /// regime contributes at most `2^-ESCAPE_LEN` because the Elias-delta
    /// code itself satisfies the Kraft inequality.
    pub fn kraft_tail_bound(&self) -> f64 {
        let first_unlisted = self.lengths.len() as u64;
        let f_rest: f64 = tables()
            .blocks
            .iter()
            .map(|b| {
                let end = b.f_start + b.f_count;
                let remaining = end.saturating_sub(first_unlisted.max(b.f_start));
                remaining as f64 * (-f64::from(b.len)).exp2()
            })
            .sum();
        f_rest + (-f64::from(ESCAPE_LEN)).exp2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitReader;
    use crate::bits::BitWriter;
    use proptest::prelude::*;

    #[test]
    fn first_f_codewords() {
        assert_eq!(encode_f(0).unwrap().to_string(), "0");
        assert_eq!(encode_f(1).unwrap().to_string(), "100");
        assert_eq!(encode_f(2).unwrap().to_string(), "1010");
        assert_eq!(encode_f(3).unwrap().to_string(), "10110");
        assert_eq!(encode_f(4).unwrap().to_string(), "10111");
    }

    #[test]
    fn f_lengths_follow_fibonacci_blocks() {
        // lengths 1 | 3 | 4 | 5 5 | 6 6 (escape takes the third 6) | 7 x5 | 8 x8
        let expected = [1, 3, 4, 5, 5, 6, 6, 7, 7, 7, 7, 7, 8, 8, 8, 8, 8, 8, 8, 8, 9];
        for (n, &l) in expected.iter().enumerate() {
            assert_eq!(length_f(n as u64).unwrap(), l, "n = {n}");
        }
    }

    #[test]
    fn f_small_range_prefix_free() {
        let words: Vec<_> = (0..7).map(|n| encode_f(n).unwrap()).collect();
        for w in words.windows(2) {
            assert!(w[0].len() <= w[1].len());
        }
        for (i, a) in words.iter().enumerate() {
            for (j, b) in words.iter().enumerate() {
                if i != j {
                    assert!(!a.is_prefix_of(b), "{a} prefixes {b}");
                }
            }
        }
    }

    #[test]
    fn escape_is_not_an_f_word() {
        let esc = escape_word();
        assert_eq!(esc.len() as u32, ESCAPE_LEN);
        for n in 0..200 {
            let f = encode_f(n).unwrap();
            assert!(!f.is_prefix_of(&esc) && !esc.is_prefix_of(&f));
        }
    }

    #[test]
    fn f_rejects_switch_point() {
        let s = switch_point();
        assert!(encode_f(s - 1).is_ok());
        assert!(matches!(encode_f(s), Err(ClrError::OutOfRange { .. })));
    }

    #[test]
    fn elias_delta_lengths() {
        assert_eq!(encode_e(1).unwrap().len(), 1);
        assert_eq!(encode_e(2).unwrap().len(), 4);
        assert_eq!(encode_e(16).unwrap().len(), 9);
        assert_eq!(encode_e(1).unwrap().to_string(), "1");
        assert_eq!(encode_e(2).unwrap().to_string(), "0100");
        assert_eq!(encode_e(17).unwrap().to_string(), "001010001");
        assert!(matches!(encode_e(0), Err(ClrError::Domain(_))));
    }

    #[test]
    fn elias_delta_decodes() {
        for n in [1u64, 2, 3, 7, 16, 1000, u64::MAX] {
            let cw = encode_e(n).unwrap();
            let mut src = SliceSource::new(cw.bits());
            assert_eq!(decode_e(&mut src).unwrap(), n);
            assert_eq!(src.position(), cw.len());
        }
    }

    #[test]
    fn switch_point_is_where_escape_stops_costing_more() {
        let s = switch_point();
        assert_eq!(length_un(s), ESCAPE_LEN + length_e(s).unwrap());
        assert!(length_un(s) <= max_f_len() + 1);
        assert!(length_un(s) >= length_un(s - 1));
    }

    #[test]
    fn signed_ordering() {
        assert_eq!(encode_u(0), encode_un(0));
        assert_eq!(encode_u(-1), encode_un(1));
        assert_eq!(encode_u(1), encode_un(2));
        assert_eq!(encode_u(2), encode_un(4));
        assert_eq!(length_u(0), 1);
        for k in 1..2000i64 {
            assert!(length_u(-k) <= length_u(k));
        }
        for z in [i64::MIN, -5, 0, 5, i64::MAX] {
            assert_eq!(unzigzag(zigzag(z)), z);
        }
    }

    #[test]
    fn length_matches_encoding_exhaustively() {
        for z in -10_000..=10_000 {
            assert_eq!(length_u(z) as usize, encode_u(z).len(), "z = {z}");
        }
    }

    #[test]
    fn decode_rejects_truncation() {
        let cw = encode_u(-7);
        let bits = &cw.bits()[..cw.len() - 1];
        assert!(decode_u_bits(bits).is_err());
        assert_eq!(decode_u_bits(encode_u(0).bits()).unwrap(), (0, 1));
        assert_eq!(decode_u_bits(cw.bits()).unwrap(), (-7, cw.len()));
    }

    #[test]
    fn decode_rejects_unassigned_pattern() {
        // beyond the longest F word only the escape subtree is assigned
        let bits = vec![true; 80];
        assert!(decode_u_bits(&bits).is_err());
    }

    #[test]
    fn big_variants_agree_with_u64() {
        for n in [0u64, 1, 5, 1000, switch_point() - 1, switch_point(), u64::MAX] {
            let b = BigUint::from(n);
            assert_eq!(length_un_big(&b), u64::from(length_un(n)));
            assert_eq!(encode_un_big(&b), encode_un(n));
        }
        let huge = BigUint::one() << 200u32;
        let cw = encode_un_big(&huge);
        assert_eq!(cw.len() as u64, length_un_big(&huge));
        let mut src = SliceSource::new(cw.bits());
        assert_eq!(decode_un_big(&mut src).unwrap(), huge);
        let neg = -BigInt::from(12345u32);
        assert_eq!(unzigzag_big(&zigzag_big(&neg)), neg);
    }

    #[test]
    fn stream_of_codewords_roundtrips() {
        let values = [0i64, -1, 3, 1 << 40, -(1 << 50), 12, i64::MIN, i64::MAX];
        let mut w = BitWriter::new();
        for &v in &values {
            w.write_codeword(&encode_u(v));
        }
        let bytes = w.into_bytes();
        let mut r = BitReader::new(&bytes);
        for &v in &values {
            assert_eq!(decode_u(&mut r).unwrap(), v);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_in_million_range(z in -1_000_000i64..=1_000_000) {
            let cw = encode_u(z);
            prop_assert_eq!(decode_u_bits(cw.bits()).unwrap(), (z, cw.len()));
        }

        #[test]
        fn roundtrip_full_range(z in any::<i64>()) {
            let cw = encode_u(z);
            prop_assert_eq!(cw.len() as u32, length_u(z));
            prop_assert_eq!(decode_u_bits(cw.bits()).unwrap().0, z);
        }
    }
}
