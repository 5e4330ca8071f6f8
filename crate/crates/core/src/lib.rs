//! Compressive linear regression.
//!
//! Sparse linear regression by minimum description length. Parameters are
//! stored with the α-code for rationals, residuals with a spherical lattice
//! code, and the smooth approximation of the total length is minimised by a
//! downhill simplex with iterative feature culling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bits;
pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod intcode;
pub mod objective;
pub mod optimize;
pub mod ratcode;
pub mod sphere;

pub use bits::{BitReader, BitSource, BitWriter, Codeword};
pub use error::{ClrError, Result};
pub use objective::{clr_objective, DesignMatrix, ObjectiveEval};
pub use optimize::{fit_clr, CLRModel, OptimizerConfig};
pub use ratcode::{alpha_decode, alpha_encode, alpha_len, AlphaApproxConstants, RationalCode};
pub use sphere::SphereBudget;
