//! The α-code: prefix-free codes for dyadic rationals of specified precision,
//! and the smooth length approximation ᾱ used by the objective.
//!
//! A real `θ` coded at precision `δ` is stored as a dyadic rational
//! `θ# = q · 2^k` with `|θ# - θ| < δ`. The codeword is `U(q)` followed by
//! `U(e)`, where `e = k + bitlen(|q|)` is the binary magnitude of `θ#`; when
//! `q = 0` the exponent is omitted. Among all scales `k <= ⌊log₂ δ⌋` (for
//! which rounding keeps the error below `δ/2`) the encoder picks the one with
//! the shortest codeword, ties going to the smaller reconstruction error.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::bits::{BitSource, Codeword, SliceSource};
use crate::error::{ClrError, Result};
use crate::intcode::{decode_u, encode_u, length_u};
use crate::optimize::{simplex_minimize, OptimizerConfig};

/// Floor applied to the arguments of logarithms in [`alpha_smooth`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Smooth lower bound on τ; keeps ᾱ away from the zero of `|c1 log log(θ²+c2) - 1|`.
pub const TAU_FLOOR: f64 = 2.0;

// 2^53: mantissas beyond this are no longer exact in f64.
const MAX_EXACT_MANTISSA: f64 = 9_007_199_254_740_992.0;

/// A coded rational `mantissa · 2^exponent` together with its codeword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalCode {
    pub mantissa: i64,
    pub exponent: i32,
    pub codeword: Codeword,
}

impl RationalCode {
    /// The decoded value `q · 2^k`.
    pub fn value(&self) -> f64 {
        ldexp(self.mantissa as f64, self.exponent)
    }

    /// Reads one α codeword from a bit stream.
    pub fn read<S: BitSource>(src: &mut S) -> Result<Self> {
        let q = decode_u(src)?;
        if q == 0 {
            return Ok(build_code(0, 0));
        }
        let e = decode_u(src)?;
        let k = e
            .checked_sub(bit_len(q))
            .and_then(|k| i32::try_from(k).ok())
            .ok_or_else(|| ClrError::Decode(format!("exponent {e} out of range")))?;
        Ok(build_code(q, k))
    }
}

/// Multiplies `x` by `2^e` without overflowing the intermediate power.
pub(crate) fn ldexp(x: f64, e: i32) -> f64 {
    let half = e / 2;
    x * 2f64.powi(half) * 2f64.powi(e - half)
}

fn bit_len(q: i64) -> i64 {
    i64::from(64 - q.unsigned_abs().leading_zeros())
}

fn code_len(q: i64, k: i32) -> u32 {
    if q == 0 {
        1
    } else {
        length_u(q) + length_u(i64::from(k) + bit_len(q))
    }
}

fn build_code(q: i64, k: i32) -> RationalCode {
    let mut codeword = encode_u(q);
    if q != 0 {
        codeword.extend(&encode_u(i64::from(k) + bit_len(q)));
    }
    RationalCode {
        mantissa: q,
        exponent: if q == 0 { 0 } else { k },
        codeword,
    }
}

fn floor_log2(x: f64) -> i32 {
    let mut k = x.log2().floor() as i32;
    while ldexp(1.0, k) > x {
        k -= 1;
    }
    while ldexp(1.0, k + 1) <= x {
        k += 1;
    }
    k
}

fn validate(theta: f64, delta: f64) -> Result<()> {
    if !theta.is_finite() || !delta.is_finite() {
        return Err(ClrError::Domain(format!(
            "alpha code needs finite inputs, got theta={theta}, delta={delta}"
        )));
    }
    if delta <= 0.0 {
        return Err(ClrError::Domain(format!("precision must be positive, got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    q: i64,
    k: i32,
    len: u32,
}

fn choose(theta: f64, delta: f64) -> Result<Choice> {
    validate(theta, delta)?;
    let top = floor_log2(delta);
    let mut best: Option<(Choice, f64)> = None;
    for k in (top.saturating_sub(1100)..=top).rev() {
        let scaled = ldexp(theta, -k);
        if scaled.abs() >= MAX_EXACT_MANTISSA {
            break;
        }
        let q = scaled.round() as i64;
        let len = code_len(q, k);
        let err = (ldexp(q as f64, k) - theta).abs();
        let better = match best {
            None => true,
            Some((b, berr)) => len < b.len || (len == b.len && err < berr),
        };
        if better {
            best = Some((Choice { q, k, len }, err));
        }
        let (b, _) = best.expect("set above");
        // Finer scales only grow |q|, and the mantissa cost alone is monotone in |q|.
        if q == 0 && b.len == 1 || q != 0 && length_u(q) >= b.len {
            break;
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| {
        ClrError::Domain(format!(
            "cannot represent {theta} at precision {delta} with a 53-bit mantissa"
        ))
    })
}

/// Codes `theta` so that the decoded value lies strictly within `delta`.
pub fn alpha_encode(theta: f64, delta: f64) -> Result<RationalCode> {
    let c = choose(theta, delta)?;
    Ok(build_code(c.q, c.k))
}

/// Decodes the codeword carried by `code`, checking it is well formed.
pub fn alpha_decode(code: &RationalCode) -> Result<f64> {
    let mut src = SliceSource::new(code.codeword.bits());
    let parsed = RationalCode::read(&mut src)?;
    if src.position() != code.codeword.len() {
        return Err(ClrError::Decode("trailing bits after alpha codeword".into()));
    }
    if parsed.mantissa != code.mantissa || parsed.exponent != code.exponent {
        return Err(ClrError::Decode("codeword disagrees with mantissa/exponent".into()));
    }
    Ok(parsed.value())
}

/// Exact α code length in bits.
pub fn alpha_len(theta: f64, delta: f64) -> Result<u32> {
    choose(theta, delta).map(|c| c.len)
}

/// Length of the concatenated codes of a parameter vector.
pub fn alpha_len_vec(theta: &[f64], delta: &[f64]) -> Result<u64> {
    if theta.len() != delta.len() {
        return Err(ClrError::Dimension {
            expected: theta.len(),
            got: delta.len(),
        });
    }
    theta
        .iter()
        .zip(delta)
        .map(|(&t, &d)| alpha_len(t, d).map(u64::from))
        .sum()
}

/// Constants of the smooth length approximation ᾱ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaApproxConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for AlphaApproxConstants {
    /// Values produced by [`fit_alpha_constants`] on [`AlphaFitGrid::default`].
    fn default() -> Self {
        Self {
            c0: 1.624_097_6,
            c1: 20.0,
            c2: 1.243_129_0,
        }
    }
}

impl AlphaApproxConstants {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn tau(&self, theta_sq: f64) -> f64 {
        let inner = (theta_sq + self.c2).max(LOG_FLOOR).log2().max(LOG_FLOOR).log2();
        let raw = self.c1 * inner - 1.0;
        raw.hypot(TAU_FLOOR)
    }
}

fn erf_term(abs_theta: f64, delta: f64) -> f64 {
    let x = (abs_theta - delta) / abs_theta.max(LOG_FLOOR);
    erf(10.0 * x + 1.0) * abs_theta + delta
}

/// Smooth approximation of [`alpha_len`] in bits.
///
/// `ᾱ = c0 · (log₂(τ(θ) · (erf(10·(|θ|-δ)/|θ| + 1)·|θ| + δ)) - log₂ δ) + 1`
/// with `τ(θ) = sqrt((c1 · log₂ log₂(θ² + c2) - 1)² + TAU_FLOOR²)`.
pub fn alpha_smooth(theta: f64, delta: f64, constants: &AlphaApproxConstants) -> f64 {
    let delta = delta.max(LOG_FLOOR);
    let at = theta.abs();
    let inner = constants.tau(theta * theta) * erf_term(at, delta);
    constants.c0 * (inner.max(LOG_FLOOR).log2() - delta.log2()) + 1.0
}

/// Sampling grid used to fit ᾱ: `log₂|θ|` and `log₂(|θ|/δ)` evenly spaced,
/// signs alternating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFitGrid {
    pub log2_abs_theta: (f64, f64),
    pub log2_relative_precision: (f64, f64),
    pub samples: usize,
}

impl Default for AlphaFitGrid {
    fn default() -> Self {
        Self {
            log2_abs_theta: (-8.0, 8.0),
            log2_relative_precision: (0.0, 8.0),
            samples: 100_000,
        }
    }
}

impl AlphaFitGrid {
    /// The `(θ, δ)` sample points.
    pub fn points(&self) -> Result<Vec<(f64, f64)>> {
        let ranges = [self.log2_abs_theta, self.log2_relative_precision];
        if self.samples < 16 || ranges.iter().any(|&(a, b)| !a.is_finite() || !b.is_finite() || b <= a) {
            return Err(ClrError::Config(format!("degenerate alpha fit grid: {self:?}")));
        }
        let side = (self.samples as f64).sqrt().round() as usize;
        let lin = |(a, b): (f64, f64), i: usize| a + (b - a) * i as f64 / (side - 1) as f64;
        let mut pts = Vec::with_capacity(side * side);
        for i in 0..side {
            let abs_theta = lin(self.log2_abs_theta, i).exp2();
            for j in 0..side {
                let ratio = lin(self.log2_relative_precision, j).exp2();
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                pts.push((sign * abs_theta, abs_theta / ratio));
            }
        }
        Ok(pts)
    }
}

/// Outcome of fitting ᾱ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaFit {
    pub constants: AlphaApproxConstants,
    pub mean_abs_error: f64,
    pub rms_error: f64,
    pub samples: usize,
}

const CONST_MIN: f64 = 0.05;
const CONST_MAX: f64 = 20.0;

fn to_box(u: f64) -> f64 {
    CONST_MIN + (CONST_MAX - CONST_MIN) / (1.0 + (-u).exp())
}

fn from_box(c: f64) -> f64 {
    let p = ((c - CONST_MIN) / (CONST_MAX - CONST_MIN)).clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// Least-squares fit of `c0, c1, c2` (each kept in `[0.05, 20]`) against
/// exact α lengths on `grid`.
pub fn fit_alpha_constants(grid: &AlphaFitGrid) -> Result<AlphaFit> {
    let pts = grid.points()?;

    // ᾱ separates into c0 · (log₂ τ(θ²) + b) + 1 with b independent of the constants.
    let mut theta_sq: Vec<f64> = Vec::new();
    let mut rows = Vec::with_capacity(pts.len());
    for &(t, d) in &pts {
        let tsq = t * t;
        if theta_sq.last() != Some(&tsq) {
            theta_sq.push(tsq);
        }
        let b = erf_term(t.abs(), d).max(LOG_FLOOR).log2() - d.log2();
        rows.push((theta_sq.len() - 1, b, f64::from(alpha_len(t, d)?)));
    }

    let predict = |c: &AlphaApproxConstants, out: &mut Vec<f64>| {
        let log_tau: Vec<f64> = theta_sq.iter().map(|&s| c.tau(s).log2()).collect();
        out.clear();
        out.extend(
            rows.iter()
                .map(|&(ti, b, exact)| c.c0 * (log_tau[ti] + b) + 1.0 - exact),
        );
    };

    let unpack = |u: &[f64]| AlphaApproxConstants {
        c0: to_box(u[0]),
        c1: to_box(u[1]),
        c2: to_box(u[2]),
    };

    let config = OptimizerConfig {
        tolerance: 1e-9,
        max_iterations: Some(4000),
        ..OptimizerConfig::default()
    };
    let starts = [(1.5, 10.0, 1.2), (1.5, 19.0, 1.3), (2.0, 4.0, 2.0), (1.0, 1.0, 4.0)];
    let mut best: Option<(f64, AlphaApproxConstants)> = None;
    let mut resid = Vec::with_capacity(rows.len());
    for &(c0, c1, c2) in &starts {
        let start = [from_box(c0), from_box(c1), from_box(c2)];
        let res = simplex_minimize(
            |u| {
                let mut r = Vec::with_capacity(rows.len());
                predict(&unpack(u), &mut r);
                r.iter().map(|e| e * e).sum::<f64>()
            },
            &start,
            &config,
        )?;
        let c = unpack(&res.x);
        if best.is_none_or(|(v, _)| res.value < v) {
            best = Some((res.value, c));
        }
    }
    let (_, constants) = best.expect("at least one start");
    predict(&constants, &mut resid);
    let n = resid.len() as f64;
    Ok(AlphaFit {
        constants,
        mean_abs_error: resid.iter().map(|e| e.abs()).sum::<f64>() / n,
        rms_error: (resid.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        samples: resid.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_is_one_bit() {
        let c = alpha_encode(0.0, 0.5).unwrap();
        assert_eq!(c.value(), 0.0);
        assert_eq!(c.codeword.len(), 1);
        assert_eq!(alpha_len(0.0, 0.5).unwrap(), 1);
    }

    #[test]
    fn reconstruction_examples() {
        let c = alpha_encode(7.31459, 0.01).unwrap();
        assert!((c.value() - 7.31459).abs() < 0.01);
        let v = alpha_decode(&alpha_encode(1.0, 0.25).unwrap()).unwrap();
        assert!(v > 0.75 && v < 1.25);
        let v = alpha_decode(&alpha_encode(-6.5, 0.5).unwrap()).unwrap();
        assert!(v > -7.0 && v < -6.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(alpha_encode(1.0, 0.0), Err(ClrError::Domain(_))));
        assert!(matches!(alpha_encode(1.0, -1.0), Err(ClrError::Domain(_))));
        assert!(matches!(alpha_encode(f64::NAN, 1.0), Err(ClrError::Domain(_))));
        assert!(matches!(alpha_len(1.0, f64::INFINITY), Err(ClrError::Domain(_))));
    }

    #[test]
    fn malformed_codeword_is_rejected() {
        let mut c = alpha_encode(5.25, 0.1).unwrap();
        c.codeword = Codeword::from_bits(c.codeword.bits()[..c.codeword.len() - 1].to_vec());
        assert!(alpha_decode(&c).is_err());
        let mut c = alpha_encode(5.25, 0.1).unwrap();
        c.mantissa += 1;
        assert!(alpha_decode(&c).is_err());
    }

    #[test]
    fn len_matches_codeword_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let t: f64 = rng.gen_range(-256.0..256.0);
            let d = t.abs().max(1e-3) * rng.gen_range(-8.0f64..0.0).exp2();
            let c = alpha_encode(t, d).unwrap();
            assert_eq!(alpha_len(t, d).unwrap() as usize, c.codeword.len());
        }
    }

    #[test]
    fn vector_length_is_sum() {
        let t = [1.5, -0.25, 40.0, 0.0];
        let d = [0.1, 0.01, 2.0, 1.0];
        let sum: u64 = t
            .iter()
            .zip(&d)
            .map(|(&a, &b)| u64::from(alpha_len(a, b).unwrap()))
            .sum();
        assert_eq!(alpha_len_vec(&t, &d).unwrap(), sum);
        assert!(alpha_len_vec(&t, &d[..2]).is_err());
    }

    #[test]
    fn finer_precision_never_costs_less() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5_000 {
            let t: f64 = rng.gen_range(-300.0..300.0);
            let d1 = rng.gen_range(-12.0f64..10.0).exp2();
            let d2 = d1 * rng.gen_range(0.0f64..4.0).exp2();
            assert!(
                alpha_len(t, d1).unwrap() >= alpha_len(t, d2).unwrap(),
                "t={t} d1={d1} d2={d2}"
            );
        }
    }

    // The exponent is coded with the signed ordering, so its cost falls as
    // it climbs from below zero; monotonicity in |θ| holds from |θ| = 1 up.
    #[test]
    fn larger_magnitude_never_costs_less() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5_000 {
            let d = rng.gen_range(-8.0f64..4.0).exp2();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let t1 = sign * d.max(1.0) * rng.gen_range(0.0f64..10.0).exp2();
            let t2 = t1 * rng.gen_range(0.0f64..2.0).exp2();
            assert!(
                alpha_len(t1, d).unwrap() <= alpha_len(t2, d).unwrap(),
                "t1={t1} t2={t2} d={d}"
            );
        }
    }

    #[test]
    fn reencoding_decoded_value_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let t: f64 = rng.gen_range(-256.0..256.0);
            let d = t.abs().max(1e-3) * rng.gen_range(-8.0f64..0.0).exp2();
            let v = alpha_encode(t, d).unwrap().value();
            assert_eq!(alpha_encode(v, d).unwrap().value(), v);
        }
    }

    #[test]
    fn reconstruction_error_distribution() {
        // Monte Carlo look at (θ# - θ)/δ: bounded by 1/2, centred, symmetric.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut errs = Vec::with_capacity(n);
        for _ in 0..n {
            let t: f64 = rng.gen_range(0.01..256.0);
            let d = t * rng.gen_range(-8.0f64..0.0).exp2();
            errs.push((alpha_encode(t, d).unwrap().value() - t) / d);
        }
        let mean = errs.iter().sum::<f64>() / n as f64;
        let below = errs.iter().filter(|&&e| e < 0.0).count() as f64 / n as f64;
        assert!(errs.iter().all(|e| e.abs() <= 0.5));
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((below - 0.5).abs() < 0.02, "fraction below {below}");
    }

    #[test]
    fn smooth_is_finite_and_non_increasing_in_delta_below_theta() {
        let c = AlphaApproxConstants::default();
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let d = (-8.0 + 8.0 * f64::from(i) / 400.0).exp2();
            let v = alpha_smooth(1.0, d, &c);
            assert!(v.is_finite());
            assert!(v <= prev + 1e-12, "d={d}");
            prev = v;
        }
        assert!(alpha_smooth(0.0, 1.0, &c).is_finite());
        assert!(alpha_smooth(1e-30, 1e-300, &c).is_finite());
    }

    #[test]
    fn smooth_has_no_negative_spike() {
        let c = AlphaApproxConstants::default();
        for i in 0..20_000 {
            let t = -4.0 + 8.0 * f64::from(i) / 20_000.0;
            for d in [1e-2, 0.1, 1.0, 10.0] {
                assert!(alpha_smooth(t, d, &c) > 0.0, "t={t} d={d}");
            }
        }
    }

    #[test]
    fn smooth_gradient_matches_richardson() {
        let c = AlphaApproxConstants::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t: f64 = rng.gen_range(0.1..100.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let d = t.abs() * rng.gen_range(-8.0f64..-0.5).exp2();
            for (dim, x0) in [(0, t), (1, d)] {
                let f = |x: f64| {
                    if dim == 0 {
                        alpha_smooth(x, d, &c)
                    } else {
                        alpha_smooth(t, x, &c)
                    }
                };
                let h = 1e-4 * x0.abs();
                let g1 = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
                let g2 = (f(x0 + h / 2.0) - f(x0 - h / 2.0)) / h;
                let rich = (4.0 * g2 - g1) / 3.0;
                let scale = rich.abs().max(1e-3);
                assert!((g2 - rich).abs() / scale < 1e-4, "t={t} d={d} dim={dim}");
            }
        }
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let g = AlphaFitGrid {
            samples: 3,
            ..AlphaFitGrid::default()
        };
        assert!(matches!(fit_alpha_constants(&g), Err(ClrError::Config(_))));
        let g = AlphaFitGrid {
            log2_abs_theta: (1.0, 1.0),
            ..AlphaFitGrid::default()
        };
        assert!(matches!(fit_alpha_constants(&g), Err(ClrError::Config(_))));
    }

    #[test]
    fn constants_json_roundtrip() {
        let c = AlphaApproxConstants::default();
        assert_eq!(AlphaApproxConstants::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn reconstruction_contract(t in -256.0f64..256.0, lr in -8.0f64..0.0) {
            let d = t.abs().max(1e-6) * lr.exp2();
            let v = alpha_decode(&alpha_encode(t, d).unwrap()).unwrap();
            prop_assert!((v - t).abs() < d);
        }
    }
}
