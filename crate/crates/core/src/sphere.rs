//! Spherical coding of integer residual vectors.
//!
//! Vectors of `Z^N` are enumerated shell by shell in order of increasing
//! squared norm, lexicographically within a shell. The rank of a vector under
//! this enumeration, coded with `U`, is its spherical code. Shell sizes come
//! from the sum-of-squares recurrence
//! `r_N(s) = Σ_{k² <= s} r_{N-1}(s - k²)` evaluated exactly with big integers.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ClrError, Result};
use crate::intcode::{length_u, length_u_big};
use crate::ratcode::alpha_len;

/// Default limit on `N · (radius_sq + 1)` lattice table cells.
pub const DEFAULT_MAX_CELLS: u64 = 4_000_000;

/// Resource limit for exact lattice computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereBudget {
    pub max_cells: u64,
}

impl Default for SphereBudget {
    fn default() -> Self {
        Self {
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

impl SphereBudget {
    pub fn admits(&self, dim: usize, radius_sq: u64) -> bool {
        self.check(dim, radius_sq).is_ok()
    }

    fn check(&self, dim: usize, radius_sq: u64) -> Result<()> {
        let cells = dim as u128 * (u128::from(radius_sq) + 1);
        if cells > u128::from(self.max_cells) {
            return Err(ClrError::Capacity {
                cells,
                budget: self.max_cells,
            });
        }
        Ok(())
    }
}

/// Number of lattice points of `Z^dimension` with squared norm at most `radius_sq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeCount {
    pub dimension: usize,
    pub radius_sq: u64,
    pub count: BigUint,
}

pub(crate) fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn next_row(prev: &[BigUint]) -> Vec<BigUint> {
    let max_sq = prev.len() as u64 - 1;
    let mut row = prev.to_vec();
    let twice: Vec<BigUint> = prev.iter().map(|c| c << 1u32).collect();
    for k in 1..=isqrt(max_sq) {
        let w = (k * k) as usize;
        for (dst, src) in row[w..].iter_mut().zip(&twice) {
            if !src.is_zero() {
                *dst += src;
            }
        }
    }
    row
}

fn origin_row(max_sq: u64) -> Vec<BigUint> {
    let mut row = vec![BigUint::zero(); max_sq as usize + 1];
    row[0] = BigUint::one();
    row
}

/// Exact shell sizes `r_m(s)` for all `m <= dim`, `s <= max_sq`.
#[derive(Debug, Clone)]
pub struct ShellTable {
    dim: usize,
    rows: Vec<Vec<BigUint>>,
}

impl ShellTable {
    pub fn build(dim: usize, max_sq: u64, budget: &SphereBudget) -> Result<Self> {
        if dim == 0 {
            return Err(ClrError::Domain("lattice dimension must be at least 1".into()));
        }
        budget.check(dim, max_sq)?;
        let mut rows = Vec::with_capacity(dim + 1);
        rows.push(origin_row(max_sq));
        for m in 1..=dim {
            let row = next_row(&rows[m - 1]);
            rows.push(row);
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_sq(&self) -> u64 {
        self.rows[0].len() as u64 - 1
    }

    /// Points of `Z^m` with squared norm exactly `s`.
    pub fn shell(&self, m: usize, s: u64) -> &BigUint {
        &self.rows[m][s as usize]
    }

    /// Points of `Z^dim` with squared norm at most `s`.
    pub fn cumulative(&self, s: u64) -> BigUint {
        self.rows[self.dim][..=s as usize].iter().sum()
    }
}

/// Counts `z ∈ Z^N` with `‖z‖² <= radius_sq`.
pub fn lattice_count(dim: usize, radius_sq: u64, budget: &SphereBudget) -> Result<LatticeCount> {
    if dim == 0 {
        return Err(ClrError::Domain("lattice dimension must be at least 1".into()));
    }
    budget.check(dim, radius_sq)?;
    let mut row = origin_row(radius_sq);
    for _ in 0..dim {
        row = next_row(&row);
    }
    Ok(LatticeCount {
        dimension: dim,
        radius_sq,
        count: row.iter().sum(),
    })
}

fn norm_sq(v: &[i64]) -> Result<u64> {
    v.iter()
        .try_fold(0u64, |acc, &x| {
            let sq = x.unsigned_abs().checked_mul(x.unsigned_abs())?;
            acc.checked_add(sq)
        })
        .ok_or(ClrError::Capacity {
            cells: u128::MAX,
            budget: 0,
        })
}

/// Rank of `v` in the shell-by-shell enumeration of `Z^N`.
pub fn spiral_rank(v: &[i64], budget: &SphereBudget) -> Result<BigUint> {
    let s = norm_sq(v)?;
    let table = ShellTable::build(v.len(), s, budget)?;
    Ok(rank_in(&table, v, s))
}

fn rank_in(table: &ShellTable, v: &[i64], s: u64) -> BigUint {
    let n = v.len();
    let mut rank = if s == 0 {
        BigUint::zero()
    } else {
        table.cumulative(s - 1)
    };
    let mut rem = s;
    for (i, &vi) in v.iter().enumerate() {
        let m = n - i - 1;
        let lim = isqrt(rem) as i64;
        for t in -lim..vi {
            rank += table.shell(m, rem - (t * t) as u64);
        }
        rem -= vi.unsigned_abs() * vi.unsigned_abs();
    }
    rank
}

/// Inverse of [`spiral_rank`].
pub fn spiral_unrank(dim: usize, rank: &BigUint, budget: &SphereBudget) -> Result<Vec<i64>> {
    if dim == 0 {
        return Err(ClrError::Domain("lattice dimension must be at least 1".into()));
    }
    // Initial guess from the ball volume, then doubling.
    let guess = {
        let bits = rank.bits() as f64;
        let log2_unit = sphere_volume_log2(dim, 1.0);
        let log2_r = (bits - log2_unit) / dim as f64;
        (2f64.powf(2.0 * log2_r)).clamp(1.0, 1e15) as u64
    };
    let mut max_sq = guess.max(1);
    let table = loop {
        let table = ShellTable::build(dim, max_sq, budget)?;
        if table.cumulative(max_sq) > *rank {
            break table;
        }
        max_sq = max_sq.checked_mul(2).ok_or(ClrError::Capacity {
            cells: u128::MAX,
            budget: budget.max_cells,
        })?;
    };

    let mut below = BigUint::zero();
    let mut s = 0u64;
    loop {
        let next = &below + table.shell(dim, s);
        if next > *rank {
            break;
        }
        below = next;
        s += 1;
    }
    let mut idx = rank - below;
    let mut rem = s;
    let mut v = Vec::with_capacity(dim);
    for i in 0..dim {
        let m = dim - i - 1;
        let lim = isqrt(rem) as i64;
        let mut chosen = None;
        for t in -lim..=lim {
            let c = table.shell(m, rem - (t * t) as u64);
            if idx < *c {
                chosen = Some(t);
                break;
            }
            idx -= c;
        }
        let t = chosen.expect("rank lies inside the shell");
        rem -= (t * t) as u64;
        v.push(t);
    }
    Ok(v)
}

/// Bits used by the spherical code of `residual`: `|U(rank)|`.
pub fn spherical_code_len(residual: &[i64], budget: &SphereBudget) -> Result<u64> {
    let rank = spiral_rank(residual, budget)?;
    Ok(length_u_big(&BigInt::from(rank)))
}

/// Longest spherical codeword among vectors with `‖v‖² <= radius_sq`.
pub fn max_code_len_within(dim: usize, radius_sq: u64, budget: &SphereBudget) -> Result<u64> {
    let c = lattice_count(dim, radius_sq, budget)?;
    Ok(length_u_big(&BigInt::from(c.count - 1u32)))
}

/// `log₂` of the volume of the radius-`r` ball in `R^N`.
pub fn sphere_volume_log2(dim: usize, r: f64) -> f64 {
    let n = dim as f64;
    (n / 2.0) * std::f64::consts::PI.log2() - ln_gamma(n / 2.0 + 1.0) / std::f64::consts::LN_2 + n * r.log2()
}

/// Smooth residual length: log₂ of the volume of the ball of radius `s/δ`.
///
/// `s_sq` is floored at `N·(δ/2)²`; residuals below the quantization width
/// carry no information.
pub fn h_bar(dim: usize, s_sq: f64, delta_y: f64) -> f64 {
    let n = dim as f64;
    let s_sq = s_sq.max(n * 0.25 * delta_y * delta_y).max(f64::MIN_POSITIVE);
    sphere_volume_log2(dim, 1.0) + (n / 2.0) * (s_sq / (delta_y * delta_y)).log2()
}

/// Applied Shannon length of an `N`-dimensional Gaussian with deviation `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HApplied {
    pub bits: f64,
    pub delta_sigma: f64,
    pub grid_index: usize,
    pub grid_len: usize,
}

const H_APPLIED_GRID: usize = 1201;

/// `(N/2)·log₂(2πe) + min_Δσ (N·log₂(σ+Δσ) + |α(σ, Δσ)|)`, minimised over
/// a log-spaced grid `Δσ ∈ [1e-6·σ, σ]`.
pub fn h_applied(dim: usize, sigma: f64) -> Result<HApplied> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ClrError::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let n = dim as f64;
    let base = (n / 2.0) * (2.0 * std::f64::consts::PI * std::f64::consts::E).log2();
    let lo = (1e-6 * sigma).ln();
    let hi = sigma.ln();
    let mut best = (f64::INFINITY, 0.0, 0);
    for i in 0..H_APPLIED_GRID {
        let ds = (lo + (hi - lo) * i as f64 / (H_APPLIED_GRID - 1) as f64).exp();
        let cost = n * (sigma + ds).log2() + f64::from(alpha_len(sigma, ds)?);
        if cost < best.0 {
            best = (cost, ds, i);
        }
    }
    Ok(HApplied {
        bits: base + best.0,
        delta_sigma: best.1,
        grid_index: best.2,
        grid_len: H_APPLIED_GRID,
    })
}

/// Upper estimate `|U(⌈max(V_N(r), 1)⌉)|` from the ball volume.
pub fn volume_code_bound(dim: usize, r: f64) -> u64 {
    let v = sphere_volume_log2(dim, r).exp2().max(1.0).ceil();
    match v.to_i64() {
        Some(x) => u64::from(length_u(x)),
        None => {
            let big = BigInt::from(num_bigint::BigUint::from(1u32) << (v.log2().ceil() as u32));
            length_u_big(&big)
        }
    }
}
