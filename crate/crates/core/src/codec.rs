//! Loss-less two-part encoding of a quantized target given the features.
//!
//! Layout: a 40-byte little-endian header (`"CLR1"`, `u32` version, `u64` N,
//! `u64` K, `f64` δ(y), `f64` offset), then the α-codes of all K parameters,
//! then `U(rank)` of the quantized residual, zero padded to a byte boundary.

use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint, Sign};

use crate::bits::{BitReader, BitSource, BitWriter};
use crate::error::{ClrError, Result};
use crate::intcode::{decode_u_big, encode_u_big};
use crate::objective::{exact_description_length, DesignMatrix, ExactLength};
use crate::ratcode::{alpha_encode, RationalCode};
use crate::sphere::{spiral_unrank, SphereBudget};

pub const MAGIC: &[u8; 4] = b"CLR1";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 40;
pub const HEADER_BITS: u64 = HEADER_BYTES as u64 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub n_obs: u64,
    pub n_features: u64,
    pub delta_y: f64,
    pub offset: f64,
}

impl Header {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.n_obs.to_le_bytes());
        out.extend_from_slice(&self.n_features.to_le_bytes());
        out.extend_from_slice(&self.delta_y.to_le_bytes());
        out.extend_from_slice(&self.offset.to_le_bytes());
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(ClrError::Decode("stream shorter than its header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(ClrError::Decode("bad magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(ClrError::Decode(format!("unsupported version {version}")));
        }
        let h = Self {
            n_obs: u64_at(8),
            n_features: u64_at(16),
            delta_y: f64::from_bits(u64_at(24)),
            offset: f64::from_bits(u64_at(32)),
        };
        if !(h.delta_y > 0.0 && h.delta_y.is_finite()) || !h.offset.is_finite() {
            return Err(ClrError::Decode("invalid quantization in header".into()));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStream {
    pub bytes: Vec<u8>,
    /// Bits after the header, before padding.
    pub payload_bits: u64,
    pub exact: ExactLength,
}

/// Encodes the target of `dm` with parameters `theta` at precisions `delta` (both length K).
pub fn encode_stream(dm: &DesignMatrix, theta: &[f64], delta: &[f64], budget: &SphereBudget) -> Result<EncodedStream> {
    let exact = exact_description_length(dm, theta, delta, budget)?;
    let mut bytes = Vec::new();
    Header {
        n_obs: dm.n_obs() as u64,
        n_features: dm.n_features() as u64,
        delta_y: dm.delta_y(),
        offset: dm.offset(),
    }
    .write(&mut bytes);
    let mut w = BitWriter::new();
    for (&t, &d) in theta.iter().zip(delta) {
        w.write_codeword(&alpha_encode(t, d)?.codeword);
    }
    w.write_codeword(&encode_u_big(&BigInt::from(exact.rank.clone())));
    let payload_bits = w.bit_len() as u64;
    debug_assert_eq!(payload_bits, exact.total_bits());
    bytes.extend(w.into_bytes());
    Ok(EncodedStream {
        bytes,
        payload_bits,
        exact,
    })
}

/// Expected size in bytes of a stream whose payload is `payload_bits` long.
pub fn stream_size(payload_bits: u64) -> u64 {
    (HEADER_BITS + payload_bits).div_ceil(8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStream {
    pub header: Header,
    pub theta_sharp: Vec<f64>,
    pub residual: Vec<i64>,
    /// Target in quanta, `round((y - offset)/δ)`.
    pub quanta: Vec<i64>,
    pub target: Vec<f64>,
}

/// Recovers the quantized target from `bytes` and the features `x` (K×N).
pub fn decode_stream(bytes: &[u8], x: &DMatrix<f64>, budget: &SphereBudget) -> Result<DecodedStream> {
    let header = Header::read(bytes)?;
    if header.n_features != x.nrows() as u64 || header.n_obs != x.ncols() as u64 {
        return Err(ClrError::Decode(format!(
            "stream is for {}×{} features, got {}×{}",
            header.n_features,
            header.n_obs,
            x.nrows(),
            x.ncols()
        )));
    }
    let mut r = BitReader::new(&bytes[HEADER_BYTES..]);
    let theta_sharp = (0..x.nrows())
        .map(|_| RationalCode::read(&mut r).map(|c| c.value()))
        .collect::<Result<Vec<_>>>()?;
    let rank = decode_u_big(&mut r)?;
    let (sign, mag) = rank.into_parts();
    if sign == Sign::Minus {
        return Err(ClrError::Decode("negative residual rank".into()));
    }
    let rank: BigUint = mag;
    let residual = spiral_unrank(x.ncols(), &rank, budget)?;
    let mut padding = 0;
    while let Some(bit) = r.next_bit() {
        padding += 1;
        if bit || padding >= 8 {
            return Err(ClrError::Decode("unexpected trailing data".into()));
        }
    }

    // Same arithmetic as the encoder's quantization of the prediction.
    let dm = DesignMatrix::with_offset(
        x.clone(),
        nalgebra::DVector::from_element(x.ncols(), header.offset),
        header.delta_y,
        header.offset,
    )?;
    let pred = dm.to_quanta(dm.predict(&theta_sharp)?.as_slice())?;
    let quanta: Vec<i64> = pred.iter().zip(&residual).map(|(p, e)| p + e).collect();
    let target = quanta
        .iter()
        .map(|&m| header.offset + header.delta_y * m as f64)
        .collect();
    Ok(DecodedStream {
        header,
        theta_sharp,
        residual,
        quanta,
        target,
    })
}
