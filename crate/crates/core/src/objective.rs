//! Smooth and exact description lengths of a linear model.

use nalgebra::{DMatrix, DVector};
use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};

use crate::error::{ClrError, Result};
use crate::intcode::length_u_big;
use crate::ratcode::{alpha_encode, alpha_smooth, AlphaApproxConstants};
use crate::sphere::{h_bar, spiral_rank, SphereBudget};

/// Expanded features `X` (K×N), their Gram matrix and the quantized target.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    gram: DMatrix<f64>,
    y: DVector<f64>,
    delta_y: f64,
    offset: f64,
    bias_index: Option<usize>,
}

impl DesignMatrix {
    /// Builds a design with the quantization grid anchored at `min(y)`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, delta_y: f64) -> Result<Self> {
        let offset = y.iter().copied().fold(f64::INFINITY, f64::min);
        Self::with_offset(x, y, delta_y, offset)
    }

    pub fn with_offset(x: DMatrix<f64>, y: DVector<f64>, delta_y: f64, offset: f64) -> Result<Self> {
        if x.ncols() != y.len() {
            return Err(ClrError::Dimension {
                expected: x.ncols(),
                got: y.len(),
            });
        }
        if !(delta_y > 0.0 && delta_y.is_finite()) {
            return Err(ClrError::Domain(format!("delta_y must be positive, got {delta_y}")));
        }
        if !offset.is_finite() || x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(ClrError::Data("design contains non-finite values".into()));
        }
        let gram = &x * x.transpose();
        Ok(Self {
            x,
            gram,
            y,
            delta_y,
            offset,
            bias_index: None,
        })
    }

    /// Marks row `index` as the bias feature (exempt from culling).
    pub fn with_bias(mut self, index: Option<usize>) -> Result<Self> {
        if let Some(i) = index {
            if i >= self.n_features() {
                return Err(ClrError::Dimension {
                    expected: self.n_features(),
                    got: i,
                });
            }
        }
        self.bias_index = index;
        Ok(self)
    }

    pub fn n_features(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn delta_y(&self) -> f64 {
        self.delta_y
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn bias_index(&self) -> Option<usize> {
        self.bias_index
    }

    /// Design restricted to the listed feature rows, in that order.
    pub fn select(&self, features: &[usize]) -> Self {
        let x = self.x.select_rows(features);
        let gram = self.gram.select_rows(features).select_columns(features);
        let bias_index = self.bias_index.and_then(|b| features.iter().position(|&f| f == b));
        Self {
            x,
            gram,
            y: self.y.clone(),
            delta_y: self.delta_y,
            offset: self.offset,
            bias_index,
        }
    }

    pub fn predict(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check_len(theta.len())?;
        Ok(self.x.tr_mul(&DVector::from_column_slice(theta)))
    }

    /// Whether `(y - offset)/δ(y)` is integral to `1e-6`.
    pub fn is_quantized(&self) -> bool {
        self.y.iter().all(|&v| {
            let m = (v - self.offset) / self.delta_y;
            (m - m.round()).abs() <= 1e-6
        })
    }

    /// Target in quanta: `round((y - offset)/δ(y))`.
    pub fn quantized_target(&self) -> Result<Vec<i64>> {
        self.to_quanta(self.y.as_slice())
    }

    pub(crate) fn to_quanta(&self, values: &[f64]) -> Result<Vec<i64>> {
        values
            .iter()
            .map(|&v| {
                let m = ((v - self.offset) / self.delta_y).round();
                if m.abs() < 9.0e15 {
                    Ok(m as i64)
                } else {
                    Err(ClrError::Domain(format!(
                        "value {v} is too far from the quantization grid"
                    )))
                }
            })
            .collect()
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n_features() {
            return Err(ClrError::Dimension {
                expected: self.n_features(),
                got,
            });
        }
        Ok(())
    }
}

/// Decomposed smooth description length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub param_bits: f64,
    pub residual_bits: f64,
    pub total_bits: f64,
    pub s_sq: f64,
    pub penalty: f64,
}

/// `‖y - Xᵀθ‖²`.
pub fn residual_norm_sq(dm: &DesignMatrix, theta: &[f64]) -> Result<f64> {
    let pred = dm.predict(theta)?;
    Ok((dm.y() - pred).norm_squared())
}

/// Expected growth of the squared residual when each `θᵢ` is perturbed
/// uniformly on `[-δᵢ, δᵢ]`: `(1/3) Σ (Σ_X)ᵢᵢ δᵢ²`.
pub fn expected_perturbation(dm: &DesignMatrix, delta: &[f64]) -> Result<f64> {
    dm.check_len(delta.len())?;
    Ok(delta
        .iter()
        .enumerate()
        .map(|(i, d)| dm.gram[(i, i)] * d * d)
        .sum::<f64>()
        / 3.0)
}

/// Smooth CLR objective `Σ ᾱ(θᵢ, δᵢ) + h̄(N, s² + penalty, δ(y))`.
pub fn clr_objective(
    dm: &DesignMatrix,
    theta: &[f64],
    delta: &[f64],
    constants: &AlphaApproxConstants,
) -> Result<ObjectiveEval> {
    dm.check_len(theta.len())?;
    if let Some(d) = delta.iter().find(|d| !(**d > 0.0)) {
        return Err(ClrError::Domain(format!("precision must be positive, got {d}")));
    }
    let s_sq = residual_norm_sq(dm, theta)?;
    let penalty = expected_perturbation(dm, delta)?;
    let param_bits: f64 = theta
        .iter()
        .zip(delta)
        .map(|(&t, &d)| alpha_smooth(t, d, constants))
        .sum();
    let residual_bits = h_bar(dm.n_obs(), s_sq + penalty, dm.delta_y());
    Ok(ObjectiveEval {
        param_bits,
        residual_bits,
        total_bits: param_bits + residual_bits,
        s_sq,
        penalty,
    })
}

/// Bit counts of the loss-less two-part code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactLength {
    pub param_bits: u64,
    pub residual_bits: u64,
    pub theta_sharp: Vec<f64>,
    pub residual: Vec<i64>,
    /// Spiral rank of `residual`.
    #[serde(skip)]
    pub rank: BigUint,
}

impl ExactLength {
    pub fn total_bits(&self) -> u64 {
        self.param_bits + self.residual_bits
    }
}

/// Quantized residual `round((y-o)/δ) - round((Xᵀθ#-o)/δ)`.
pub fn quantized_residual(dm: &DesignMatrix, theta_sharp: &[f64]) -> Result<Vec<i64>> {
    let target = dm.quantized_target()?;
    let pred = dm.to_quanta(dm.predict(theta_sharp)?.as_slice())?;
    Ok(target.iter().zip(&pred).map(|(m, p)| m - p).collect())
}

/// Length of the loss-less encoding: `Σ |α(θᵢ, δᵢ)| + |U(rank(residual))|`.
pub fn exact_description_length(
    dm: &DesignMatrix,
    theta: &[f64],
    delta: &[f64],
    budget: &SphereBudget,
) -> Result<ExactLength> {
    dm.check_len(theta.len())?;
    dm.check_len(delta.len())?;
    let mut param_bits = 0u64;
    let mut theta_sharp = Vec::with_capacity(theta.len());
    for (&t, &d) in theta.iter().zip(delta) {
        let code = alpha_encode(t, d)?;
        param_bits += code.codeword.len() as u64;
        theta_sharp.push(code.value());
    }
    let residual = quantized_residual(dm, &theta_sharp)?;
    let rank = spiral_rank(&residual, budget)?;
    Ok(ExactLength {
        param_bits,
        residual_bits: length_u_big(&BigInt::from(rank.clone())),
        theta_sharp,
        residual,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(rng: &mut ChaCha8Rng, k: usize, n: usize) -> DesignMatrix {
        let x = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| (rng.sample::<f64, _>(StandardNormal) * 20.0).round() / 4.0);
        DesignMatrix::new(x, y, 0.25).unwrap()
    }

    #[test]
    fn residual_examples() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let dm = DesignMatrix::new(x, y, 1.0).unwrap();
        assert_eq!(residual_norm_sq(&dm, &[1.0]).unwrap(), 0.0);
        assert_eq!(residual_norm_sq(&dm, &[0.0]).unwrap(), 14.0);
        assert!(matches!(
            residual_norm_sq(&dm, &[1.0, 2.0]),
            Err(ClrError::Dimension { .. })
        ));
    }

    #[test]
    fn residual_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let dm = random_design(&mut rng, 5, 17);
            let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut direct = 0.0;
            for j in 0..17 {
                let mut p = 0.0;
                for (i, t) in theta.iter().enumerate() {
                    p += dm.x()[(i, j)] * t;
                }
                direct += (dm.y()[j] - p).powi(2);
            }
            let got = residual_norm_sq(&dm, &theta).unwrap();
            assert!((got - direct).abs() <= 1e-10 * direct);
        }
    }

    #[test]
    fn perturbation_ignores_off_diagonal() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let dm = DesignMatrix::new(x, DVector::zeros(2), 1.0).unwrap();
        assert!((expected_perturbation(&dm, &[1.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(expected_perturbation(&dm, &[0.0, 0.0]).unwrap(), 0.0);

        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, 1.0, -1.0, 3.0]);
        let dm = DesignMatrix::new(x, DVector::zeros(3), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let delta = [0.3, 0.7];
        let draws = 200_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let d = DVector::from_vec(vec![
                rng.gen_range(-delta[0]..delta[0]),
                rng.gen_range(-delta[1]..delta[1]),
            ]);
            acc += (d.transpose() * dm.gram() * &d)[(0, 0)];
        }
        let mc = acc / draws as f64;
        let exact = expected_perturbation(&dm, &delta).unwrap();
        assert!((mc - exact).abs() / exact < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn objective_composition_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dm = random_design(&mut rng, 3, 12);
        let c = AlphaApproxConstants::default();
        let ev = clr_objective(&dm, &[0.0; 3], &[1.0; 3], &c).unwrap();
        let trace: f64 = (0..3).map(|i| dm.gram()[(i, i)]).sum();
        let expect = h_bar(12, dm.y().norm_squared() + trace / 3.0, dm.delta_y());
        assert!((ev.residual_bits - expect).abs() < 1e-12);
        assert_eq!(ev.total_bits, ev.param_bits + ev.residual_bits);
        assert!(clr_objective(&dm, &[0.0; 3], &[1.0, 0.0, 1.0], &c).is_err());
    }

    #[test]
    fn objective_gradient_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = AlphaApproxConstants::default();
        for _ in 0..30 {
            let k = rng.gen_range(1..=8);
            let n = rng.gen_range(k.max(2)..=20);
            let dm = random_design(&mut rng, k, n);
            let mut v: Vec<f64> = (0..k)
                .map(|_| rng.gen_range(0.5..4.0) * if rng.gen() { 1.0 } else { -1.0 })
                .collect();
            let d: Vec<f64> = v.iter().map(|t| t.abs() * rng.gen_range(0.05..0.9)).collect();
            v.extend(d);
            let f = |v: &[f64]| clr_objective(&dm, &v[..k], &v[k..], &c).unwrap().total_bits;
            for i in 0..2 * k {
                let cd = |h: f64| {
                    let mut a = v.clone();
                    let mut b = v.clone();
                    a[i] += h;
                    b[i] -= h;
                    (f(&a) - f(&b)) / (2.0 * h)
                };
                let h = 1e-3 * v[i].abs();
                let (g1, g2) = (cd(h), cd(h / 2.0));
                let rich = (4.0 * g2 - g1) / 3.0;
                assert!((g2 - rich).abs() <= 1e-4 * rich.abs().max(1e-2), "{g1} {g2}");
            }
        }
    }

    #[test]
    fn larger_precision_trades_parameter_for_residual_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dm = random_design(&mut rng, 3, 15);
        let c = AlphaApproxConstants::default();
        let theta = [2.0, -1.5, 3.0];
        for i in 0..3 {
            let mut prev: Option<ObjectiveEval> = None;
            for step in 0..40 {
                let mut delta = [0.05, 0.05, 0.05];
                delta[i] = 0.01 + 0.02 * f64::from(step);
                let ev = clr_objective(&dm, &theta, &delta, &c).unwrap();
                if let Some(p) = prev {
                    assert!(ev.param_bits < p.param_bits);
                    assert!(ev.residual_bits >= p.residual_bits);
                }
                prev = Some(ev);
            }
        }
    }

    #[test]
    fn quadratic_growth_at_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dm = random_design(&mut rng, 4, 30);
        let theta = crate::optimize::ols_init(&dm);
        let base = residual_norm_sq(&dm, theta.as_slice()).unwrap();
        for _ in 0..20 {
            let d = DVector::from_fn(4, |_, _| rng.gen_range(-0.1..0.1));
            let moved = residual_norm_sq(&dm, (&theta + &d).as_slice()).unwrap();
            let quad = (d.transpose() * dm.gram() * &d)[(0, 0)];
            assert!(((moved - base) - quad).abs() <= 1e-8 * quad.max(1e-12) + 1e-10 * base);
        }
    }

    #[test]
    fn feature_scaling_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dm = random_design(&mut rng, 3, 10);
        let theta = [1.0, -2.0, 0.5];
        let delta = [0.1, 0.2, 0.3];
        let scale = 7.5;
        let mut x = dm.x().clone();
        x.row_mut(1).scale_mut(scale);
        let scaled = DesignMatrix::new(x, dm.y().clone(), dm.delta_y()).unwrap();
        let t2 = [1.0, -2.0 / scale, 0.5];
        let d2 = [0.1, 0.2 / scale, 0.3];
        let (a, b) = (
            residual_norm_sq(&dm, &theta).unwrap(),
            residual_norm_sq(&scaled, &t2).unwrap(),
        );
        assert!((a - b).abs() < 1e-10 * a);
        let (a, b) = (
            expected_perturbation(&dm, &delta).unwrap(),
            expected_perturbation(&scaled, &d2).unwrap(),
        );
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn exact_fit_costs_one_residual_bit() {
        let x = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0, 8.0]);
        let dm = DesignMatrix::new(x, y, 2.0).unwrap();
        let ex = exact_description_length(&dm, &[2.0], &[0.1], &SphereBudget::default()).unwrap();
        assert_eq!(ex.residual_bits, 1);
        assert!(ex.residual.iter().all(|&r| r == 0));
        assert_eq!(ex.total_bits(), ex.param_bits + 1);
    }

    #[test]
    fn select_keeps_bias_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dm = random_design(&mut rng, 4, 6).with_bias(Some(3)).unwrap();
        let sub = dm.select(&[0, 3]);
        assert_eq!(sub.bias_index(), Some(1));
        assert_eq!(sub.gram()[(1, 1)], dm.gram()[(3, 3)]);
        assert_eq!(dm.select(&[0, 1]).bias_index(), None);
    }
}
