//! Downhill simplex minimisation and the CLR fitting loop.

use log::{debug, warn};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ClrError, Result};
use crate::objective::{clr_objective, exact_description_length, DesignMatrix, ObjectiveEval};
use crate::ratcode::{alpha_encode, AlphaApproxConstants};
use crate::sphere::SphereBudget;

/// Settings for [`simplex_minimize`] and [`fit_clr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Iteration cap per simplex run; `None` means `400 · dim`.
    pub max_iterations: Option<usize>,
    /// Stop when the spread of objective values over the simplex falls below this.
    pub tolerance: f64,
    pub max_cull_rounds: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Number of restarts from the best vertex after convergence.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: None,
            tolerance: 1e-3,
            max_cull_rounds: 20,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            restarts: 1,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(ClrError::Config(format!("invalid optimizer setting: {what}")));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iterations == Some(0) {
            return bad("max_iterations must be positive");
        }
        if !(self.reflection > 0.0) {
            return bad("reflection must be positive");
        }
        if !(self.expansion > 1.0 && self.expansion > self.reflection) {
            return bad("expansion must exceed 1 and the reflection coefficient");
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return bad("contraction must lie in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after every iteration.
    pub trace: Vec<f64>,
}

fn initial_simplex(start: &[f64], scale: f64, signs: Option<&mut ChaCha8Rng>) -> Vec<Vec<f64>> {
    let mut signs = signs;
    let mut pts = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut p = start.to_vec();
        let step = if p[i] != 0.0 {
            0.05 * scale * p[i]
        } else {
            0.00025 * scale
        };
        let flip = signs.as_mut().is_some_and(|r| r.gen::<bool>());
        p[i] += if flip { -step } else { step };
        pts.push(p);
    }
    pts
}

/// Nelder–Mead minimisation of `f` starting at `start`.
///
/// Non-finite objective values are treated as `+∞`. After convergence the
/// simplex is rebuilt around the best vertex `config.restarts` times, with
/// step directions drawn from `config.seed`.
pub fn simplex_minimize<F>(mut f: F, start: &[f64], config: &OptimizerConfig) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    let n = start.len();
    if n == 0 {
        let v = f(start);
        if !v.is_finite() {
            return Err(ClrError::Init("objective is not finite at the start point".into()));
        }
        return Ok(SimplexResult {
            x: vec![],
            value: v,
            iterations: 0,
            evaluations: 1,
            converged: true,
            trace: vec![v],
        });
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(start);
    if !f0.is_finite() {
        return Err(ClrError::Init(format!(
            "objective is not finite at the start point ({f0})"
        )));
    }
    let max_iter = config.max_iterations.unwrap_or(400 * n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pts = initial_simplex(start, 1.0, None);
    let mut vals: Vec<f64> = std::iter::once(f0).chain(pts[1..].iter().map(|p| eval(p))).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut restarts_left = config.restarts;
    let mut last_converged_value = f64::INFINITY;

    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        if vals[n] - vals[0] <= config.tolerance {
            let gain = last_converged_value - vals[0];
            last_converged_value = vals[0];
            if restarts_left == 0 || gain <= config.tolerance {
                converged = true;
                break;
            }
            restarts_left -= 1;
            let best = pts[0].clone();
            let best_val = vals[0];
            pts = initial_simplex(&best, 1.0, Some(&mut rng));
            vals = std::iter::once(best_val)
                .chain(pts[1..].iter().map(|p| eval(p)))
                .collect();
            continue;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(config.reflection);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(config.reflection * config.expansion);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(config.reflection * config.contraction);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-config.contraction);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = pts[0]
                        .iter()
                        .zip(&pts[i])
                        .map(|(b, x)| b + config.shrink * (x - b))
                        .collect();
                    vals[i] = eval(&p);
                    pts[i] = p;
                }
            }
        }
        trace.push(vals.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let (x, value) = if vals[best] <= f0 {
        (pts[best].clone(), vals[best])
    } else {
        (start.to_vec(), f0)
    };
    Ok(SimplexResult {
        x,
        value,
        iterations,
        evaluations,
        converged,
        trace,
    })
}

/// Least-squares `θ` minimising `‖y - Xᵀθ‖`; minimum norm when rank deficient.
pub fn ols_init(dm: &DesignMatrix) -> DVector<f64> {
    let k = dm.n_features();
    if k == 0 {
        return DVector::zeros(0);
    }
    let a = dm.x().transpose();
    let dims = a.nrows().max(a.ncols()) as f64;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * f64::EPSILON * dims;
    svd.solve(dm.y(), eps.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(k))
}

/// A fitted CLR model over the expanded feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CLRModel {
    /// Number of expanded features `K` the model was fitted on.
    pub n_features: usize,
    pub active_features: Vec<usize>,
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta_sharp: Vec<f64>,
    pub bias_index: Option<usize>,
    pub description_length_bits: f64,
    pub objective: ObjectiveEval,
    pub initial_description_length_bits: f64,
    pub exact_bits: Option<u64>,
    pub rounds: usize,
    pub round_limit_hit: bool,
}

impl CLRModel {
    /// `θ` over all `K` features, zero where culled.
    pub fn full_theta(&self) -> Vec<f64> {
        self.scatter(&self.theta, 0.0)
    }

    pub fn full_theta_sharp(&self) -> Vec<f64> {
        self.scatter(&self.theta_sharp, 0.0)
    }

    /// Precisions over all `K` features; culled features get `1.0`, which codes zero in one bit.
    pub fn full_delta(&self) -> Vec<f64> {
        self.scatter(&self.delta, 1.0)
    }

    fn scatter(&self, v: &[f64], fill: f64) -> Vec<f64> {
        let mut out = vec![fill; self.n_features];
        for (&i, &x) in self.active_features.iter().zip(v) {
            out[i] = x;
        }
        out
    }

    /// Active features other than the bias.
    pub fn nonzero_count(&self) -> usize {
        self.active_features
            .iter()
            .filter(|&&i| Some(i) != self.bias_index)
            .count()
    }
}

fn initial_delta(dm: &DesignMatrix, theta: &DVector<f64>) -> Vec<f64> {
    let sd = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    };
    let sd_y = sd(dm.y().as_slice()).max(dm.delta_y());
    (0..dm.n_features())
        .map(|i| {
            let row: Vec<f64> = dm.x().row(i).iter().copied().collect();
            let mut sx = sd(&row);
            if sx == 0.0 {
                sx = (row.iter().map(|x| x * x).sum::<f64>() / row.len() as f64).sqrt();
            }
            if sx == 0.0 {
                sx = 1.0;
            }
            (theta[i].abs() / 2.0).max(1e-3 * sd_y / sx)
        })
        .collect()
}

struct RoundFit {
    theta: Vec<f64>,
    delta: Vec<f64>,
    eval: ObjectiveEval,
    initial_bits: f64,
}

fn fit_round(dm: &DesignMatrix, config: &OptimizerConfig, constants: &AlphaApproxConstants) -> Result<RoundFit> {
    let k = dm.n_features();
    let theta0 = ols_init(dm);
    let delta0 = initial_delta(dm, &theta0);
    let mut start: Vec<f64> = theta0.iter().copied().collect();
    start.extend(delta0.iter().map(|d| d.ln()));

    let objective = |v: &[f64]| {
        let delta: Vec<f64> = v[k..].iter().map(|l| l.exp()).collect();
        clr_objective(dm, &v[..k], &delta, constants).map_or(f64::INFINITY, |e| e.total_bits)
    };
    let initial_bits = objective(&start);
    let res = simplex_minimize(objective, &start, config)?;
    let theta = res.x[..k].to_vec();
    let delta: Vec<f64> = res.x[k..].iter().map(|l| l.exp()).collect();
    let eval = clr_objective(dm, &theta, &delta, constants)?;
    debug!(
        "simplex: K={k} {:.3} -> {:.3} bits in {} iterations",
        initial_bits, eval.total_bits, res.iterations
    );
    Ok(RoundFit {
        theta,
        delta,
        eval,
        initial_bits,
    })
}

/// Fits a CLR model, computing exact bits with the default sphere budget.
pub fn fit_clr(dm: &DesignMatrix, config: &OptimizerConfig, constants: &AlphaApproxConstants) -> Result<CLRModel> {
    fit_clr_with_budget(dm, config, constants, &SphereBudget::default())
}

/// Simplex from the least-squares start with `δᵢ = |θᵢ|/2`, then repeatedly
/// drop features with `δᵢ > |θᵢ|` and refit the reduced design.
pub fn fit_clr_with_budget(
    dm: &DesignMatrix,
    config: &OptimizerConfig,
    constants: &AlphaApproxConstants,
    budget: &SphereBudget,
) -> Result<CLRModel> {
    config.validate()?;
    let mut active: Vec<usize> = (0..dm.n_features()).collect();
    let mut initial_bits = None;
    let mut rounds = 0;
    let mut round_limit_hit = false;
    let (theta, delta, eval) = loop {
        let sub = dm.select(&active);
        let fit = fit_round(&sub, config, constants)?;
        initial_bits.get_or_insert(fit.initial_bits);
        rounds += 1;
        let keep: Vec<bool> = (0..active.len())
            .map(|i| sub.bias_index() == Some(i) || fit.delta[i] <= fit.theta[i].abs())
            .collect();
        if keep.iter().all(|&k| k) {
            break (fit.theta, fit.delta, fit.eval);
        }
        if rounds >= config.max_cull_rounds {
            warn!("culling stopped after {rounds} rounds");
            round_limit_hit = true;
            break (fit.theta, fit.delta, fit.eval);
        }
        active = active.iter().zip(&keep).filter(|(_, &k)| k).map(|(&a, _)| a).collect();
    };

    let theta_sharp = theta
        .iter()
        .zip(&delta)
        .map(|(&t, &d)| alpha_encode(t, d).map(|c| c.value()))
        .collect::<Result<Vec<_>>>()?;
    let mut model = CLRModel {
        n_features: dm.n_features(),
        active_features: active,
        theta,
        delta,
        theta_sharp,
        bias_index: dm.bias_index(),
        description_length_bits: eval.total_bits,
        objective: eval,
        initial_description_length_bits: initial_bits.unwrap_or(f64::NAN),
        exact_bits: None,
        rounds,
        round_limit_hit,
    };
    model.exact_bits = match exact_description_length(dm, &model.full_theta(), &model.full_delta(), budget) {
        Ok(ex) => Some(ex.total_bits()),
        Err(e) => {
            debug!("exact length unavailable: {e}");
            None
        }
    };
    Ok(model)
}
