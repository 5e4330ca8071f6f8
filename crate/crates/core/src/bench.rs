//! Pipelines behind the command-line tool: fitting, coding, simulation
//! replication, generalization and code-length tables.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_stream, encode_stream, DecodedStream, EncodedStream};
use crate::config::RunConfig;
use crate::data::{
    expand_features, expand_matrix, generate_sim_one, load_csv, quantize, quantize_dataset, split, ExpandedFeatures,
    FeatureProductSpec, QuantizedDataset, RawDataset, SimSpec,
};
use crate::error::{ClrError, Result};
use crate::intcode::{length_u, length_u_big, length_un};
use crate::objective::{DesignMatrix, ObjectiveEval};
use crate::optimize::{fit_clr_with_budget, ols_init, CLRModel};
use crate::ratcode::{alpha_len, alpha_smooth, AlphaApproxConstants};
use crate::sphere::{h_applied, h_bar, lattice_count, SphereBudget};

/// A dataset made ready for fitting under `cfg`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub quantized: QuantizedDataset,
    pub features: ExpandedFeatures,
    pub design: DesignMatrix,
    pub spec: FeatureProductSpec,
}

pub fn prepare(ds: &RawDataset, cfg: &RunConfig) -> Result<Prepared> {
    let mut ds = ds.clone();
    if let Some(r) = cfg.target_resolution {
        let y = quantize(ds.target.as_slice(), r, 0.0);
        ds.target = DVector::from_vec(y);
    }
    let quantized = quantize_dataset(&ds)?;
    let spec = cfg.feature_spec(ds.n_features());
    let features = expand_features(&quantized.data, &spec)?;
    let design = features.design(&quantized)?;
    Ok(Prepared {
        quantized,
        features,
        design,
        spec,
    })
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn residuals(x: &DMatrix<f64>, y: &DVector<f64>, theta: &[f64]) -> Vec<f64> {
    (y - x.tr_mul(&DVector::from_column_slice(theta)))
        .iter()
        .copied()
        .collect()
}

/// Output of the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_obs: usize,
    pub n_raw_features: usize,
    pub feature_names: Vec<String>,
    pub features: FeatureProductSpec,
    pub delta_y: f64,
    pub offset: f64,
    pub model: CLRModel,
    pub objective: ObjectiveEval,
    pub exact_bits: Option<u64>,
    /// `sd(residual)/sd(y)` on the fitted data.
    pub sd_ratio: f64,
    pub wall_seconds: f64,
}

impl FitReport {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn fit_dataset(ds: &RawDataset, cfg: &RunConfig) -> Result<FitReport> {
    let t0 = Instant::now();
    let p = prepare(ds, cfg)?;
    let model = fit_clr_with_budget(&p.design, &cfg.optimizer, &cfg.alpha, &cfg.sphere)?;
    let e = residuals(p.design.x(), p.design.y(), &model.full_theta());
    let sd_y = sd(p.design.y().as_slice());
    Ok(FitReport {
        n_obs: ds.n_obs(),
        n_raw_features: ds.n_features(),
        feature_names: p.features.names.clone(),
        features: p.spec,
        delta_y: p.quantized.delta_y,
        offset: p.quantized.offset,
        objective: model.objective,
        exact_bits: model.exact_bits,
        sd_ratio: sd(&e) / sd_y,
        model,
        wall_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Encodes `ds` with `model`, fitting one when none is given.
pub fn encode_dataset(ds: &RawDataset, cfg: &RunConfig, model: Option<&CLRModel>) -> Result<(EncodedStream, CLRModel)> {
    let p = prepare(ds, cfg)?;
    let model = match model {
        Some(m) => m.clone(),
        None => fit_clr_with_budget(&p.design, &cfg.optimizer, &cfg.alpha, &cfg.sphere)?,
    };
    if model.n_features != p.design.n_features() {
        return Err(ClrError::Dimension {
            expected: p.design.n_features(),
            got: model.n_features,
        });
    }
    let stream =
        encode_stream(&p.design, &model.full_theta(), &model.full_delta(), &cfg.sphere).map_err(|e| match e {
            ClrError::Capacity { .. } => {
                warn!("residual is beyond the exact-coding budget; use `fit` for the approximate length");
                e
            }
            other => other,
        })?;
    Ok((stream, model))
}

/// Decodes a stream given raw feature columns (J×N) expanded as at encode time.
pub fn decode_dataset(
    bytes: &[u8],
    observations: &DMatrix<f64>,
    names: &[String],
    cfg: &RunConfig,
) -> Result<DecodedStream> {
    let spec = cfg.feature_spec(observations.nrows());
    let x = expand_matrix(observations, names, &spec)?.x;
    decode_stream(bytes, &x, &cfg.sphere)
}

/// Sum of `|U(m)|` over the quantized target, the no-model baseline.
pub fn naive_target_bits(dm: &DesignMatrix) -> Result<u64> {
    Ok(dm.quantized_target()?.iter().map(|&m| u64::from(length_u(m))).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CLR")]
    Clr,
    L2,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Clr => "CLR",
            Method::L2 => "L2",
        })
    }
}

/// One method on one simulated dataset. Metrics exclude the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub dataset: usize,
    pub method: Method,
    pub nonzero: Option<f64>,
    pub param_mse: Option<f64>,
    pub sd_ratio: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub description_bits: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAggregate {
    pub method: Method,
    pub completed: usize,
    pub failed: usize,
    pub nonzero_mean: f64,
    pub nonzero_sd: f64,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub sd_ratio_mean: f64,
    pub sd_ratio_sd: f64,
    pub wall_mean: f64,
    pub wall_ratio_to_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub name: String,
    pub spec: SimSpec,
    pub rows: Vec<SimRow>,
    pub aggregates: Vec<SimAggregate>,
}

impl SimReport {
    /// Aggregates recomputed from `rows`.
    pub fn aggregate(rows: &[SimRow]) -> Vec<SimAggregate> {
        let wall = |m: Method| {
            let w: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.wall_seconds)
                .collect();
            if w.is_empty() {
                f64::NAN
            } else {
                mean(&w)
            }
        };
        let l2_wall = wall(Method::L2);
        [Method::Clr, Method::L2]
            .into_iter()
            .map(|m| {
                let ok: Vec<&SimRow> = rows.iter().filter(|r| r.method == m && r.error.is_none()).collect();
                let col = |f: fn(&SimRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
                let (nz, mse, sdr) = (col(|r| r.nonzero), col(|r| r.param_mse), col(|r| r.sd_ratio));
                SimAggregate {
                    method: m,
                    completed: ok.len(),
                    failed: rows.iter().filter(|r| r.method == m).count() - ok.len(),
                    nonzero_mean: mean(&nz),
                    nonzero_sd: sd(&nz),
                    mse_mean: mean(&mse),
                    mse_sd: sd(&mse),
                    sd_ratio_mean: mean(&sdr),
                    sd_ratio_sd: sd(&sdr),
                    wall_mean: wall(m),
                    wall_ratio_to_l2: wall(m) / l2_wall,
                }
            })
            .collect()
    }

    pub fn get(&self, m: Method) -> &SimAggregate {
        self.aggregates
            .iter()
            .find(|a| a.method == m)
            .expect("both methods aggregated")
    }

    /// Table-1-shaped rows: `method,nonzero,mse,sd_ratio,wall_ratio`.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("sim,method,completed,nonzero_mean,nonzero_sd,mse_mean,mse_sd,sd_ratio_mean,sd_ratio_sd,wall_mean_s,wall_ratio_to_l2\n");
        for a in &self.aggregates {
            s += &format!(
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.6},{:.3}\n",
                self.name,
                a.method,
                a.completed,
                a.nonzero_mean,
                a.nonzero_sd,
                a.mse_mean,
                a.mse_sd,
                a.sd_ratio_mean,
                a.sd_ratio_sd,
                a.wall_mean,
                a.wall_ratio_to_l2
            );
        }
        s
    }

    pub fn rows_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        let mut s = String::from("sim,dataset,method,nonzero,param_mse,sd_ratio,wall_s,description_bits,error\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.name,
                r.dataset,
                r.method,
                f(r.nonzero),
                f(r.param_mse),
                f(r.sd_ratio),
                f(r.wall_seconds),
                f(r.description_bits),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }
}

fn sim_rows(spec: &SimSpec, index: usize, cfg: &RunConfig) -> [SimRow; 2] {
    let failed = |m: Method, e: &ClrError| SimRow {
        dataset: index,
        method: m,
        nonzero: None,
        param_mse: None,
        sd_ratio: None,
        wall_seconds: None,
        description_bits: None,
        error: Some(e.to_string()),
    };
    let prepared = generate_sim_one(spec, index).and_then(|ds| prepare(&ds, cfg));
    let p = match prepared {
        Ok(p) => p,
        Err(e) => return [failed(Method::Clr, &e), failed(Method::L2, &e)],
    };
    let dm = &p.design;
    let j = spec.beta.len();
    let bias = dm.bias_index();
    let metrics = |theta: &[f64]| {
        // Raw features come first in the expansion, so θ[..J] lines up with β.
        let mse = (0..j).map(|i| (theta[i] - spec.beta[i]).powi(2)).sum::<f64>() / j as f64;
        let e = residuals(dm.x(), dm.y(), theta);
        let rmse = (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt();
        (mse, rmse / spec.sigma)
    };

    let t0 = Instant::now();
    let clr = match fit_clr_with_budget(dm, &cfg.optimizer, &cfg.alpha, &cfg.sphere) {
        Ok(m) => {
            let wall = t0.elapsed().as_secs_f64();
            let (mse, sdr) = metrics(&m.full_theta());
            SimRow {
                dataset: index,
                method: Method::Clr,
                nonzero: Some(m.nonzero_count() as f64),
                param_mse: Some(mse),
                sd_ratio: Some(sdr),
                wall_seconds: Some(wall),
                description_bits: Some(m.description_length_bits),
                error: None,
            }
        }
        Err(e) => failed(Method::Clr, &e),
    };

    let t0 = Instant::now();
    let theta = ols_init(dm);
    let wall = t0.elapsed().as_secs_f64();
    let (mse, sdr) = metrics(theta.as_slice());
    let nonzero = (0..dm.n_features())
        .filter(|&i| Some(i) != bias && theta[i] != 0.0)
        .count();
    let l2 = SimRow {
        dataset: index,
        method: Method::L2,
        nonzero: Some(nonzero as f64),
        param_mse: Some(mse),
        sd_ratio: Some(sdr),
        wall_seconds: Some(wall),
        description_bits: None,
        error: None,
    };
    [clr, l2]
}

/// Runs CLR and least squares on every replication of `spec`.
pub fn run_sim(name: &str, spec: &SimSpec, cfg: &RunConfig) -> Result<SimReport> {
    spec.validate()?;
    if !matches!(cfg.features, crate::config::FeatureChoice::Identity) {
        return Err(ClrError::Config("simulations use identity features".into()));
    }
    let rows: Vec<SimRow> = (0..spec.n_datasets)
        .into_par_iter()
        .flat_map_iter(|i| sim_rows(spec, i, cfg))
        .collect();
    info!("{name}: {} rows", rows.len());
    Ok(SimReport {
        name: name.to_owned(),
        spec: spec.clone(),
        aggregates: SimReport::aggregate(&rows),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub dataset: String,
    pub method: Method,
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub train_sd_ratio: Option<f64>,
    pub test_sd_ratio: Option<f64>,
    /// Surviving non-bias features over K.
    pub sparsity: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub rows: Vec<GeneralizationRow>,
}

impl GeneralizationReport {
    /// Plot data: x = test ratio, y = train ratio.
    pub fn csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        let mut s = String::from("dataset,method,n,j,k,test_sd_ratio,train_sd_ratio,sparsity,error\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.dataset.replace(',', ";"),
                r.method,
                r.n,
                r.j,
                r.k,
                f(r.test_sd_ratio),
                f(r.train_sd_ratio),
                f(r.sparsity),
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }
}

fn generalize_one(ds: &RawDataset, label: &str, cfg: &RunConfig, seed: u64) -> Result<[GeneralizationRow; 2]> {
    let (train, test) = split(ds, cfg.train_fraction, seed)?;
    let p = prepare(&train, cfg)?;
    let dm = &p.design;
    let test_x = expand_features(&test, &p.spec)?.x;
    let clr = fit_clr_with_budget(dm, &cfg.optimizer, &cfg.alpha, &cfg.sphere)?;
    let l2 = ols_init(dm);
    let k = dm.n_features();
    let bias = dm.bias_index();
    let row = |m: Method, theta: &[f64]| {
        let tr = sd(&residuals(dm.x(), dm.y(), theta)) / sd(dm.y().as_slice());
        let te = sd(&residuals(&test_x, &test.target, theta)) / sd(test.target.as_slice());
        let kept = (0..k).filter(|&i| Some(i) != bias && theta[i] != 0.0).count();
        GeneralizationRow {
            dataset: label.to_owned(),
            method: m,
            n: ds.n_obs(),
            j: ds.n_features(),
            k,
            train_sd_ratio: Some(tr),
            test_sd_ratio: Some(te),
            sparsity: Some(kept as f64 / k as f64),
            error: None,
        }
    };
    Ok([row(Method::Clr, &clr.full_theta()), row(Method::L2, l2.as_slice())])
}

/// Train/test protocol on each dataset; failures are recorded per dataset.
pub fn run_generalize(datasets: &[(String, RawDataset)], cfg: &RunConfig, seed: u64) -> GeneralizationReport {
    let rows = datasets
        .par_iter()
        .flat_map_iter(|(label, ds)| match generalize_one(ds, label, cfg, seed) {
            Ok(rows) => rows.to_vec(),
            Err(e) => [Method::Clr, Method::L2]
                .into_iter()
                .map(|m| GeneralizationRow {
                    dataset: label.clone(),
                    method: m,
                    n: ds.n_obs(),
                    j: ds.n_features(),
                    k: 0,
                    train_sd_ratio: None,
                    test_sd_ratio: None,
                    sparsity: None,
                    error: Some(e.to_string()),
                })
                .collect(),
        })
        .collect();
    GeneralizationReport { rows }
}

pub fn load_datasets(paths: &[PathBuf], target: Option<&str>) -> Result<Vec<(String, RawDataset)>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), load_csv(p, target)?)))
        .collect()
}

/// Grids for the code-length tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeTableSpec {
    pub u_max: i64,
    pub alpha_log2_theta: (f64, f64),
    pub alpha_log2_ratio: (f64, f64),
    pub alpha_steps: usize,
    pub sphere_dims: Vec<usize>,
    pub sphere_log2_radius: (f64, f64),
    pub sphere_steps: usize,
}

impl Default for CodeTableSpec {
    fn default() -> Self {
        Self {
            u_max: 1000,
            alpha_log2_theta: (-8.0, 8.0),
            alpha_log2_ratio: (0.0, 8.0),
            alpha_steps: 33,
            sphere_dims: vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024],
            sphere_log2_radius: (0.0, 8.0),
            sphere_steps: 17,
        }
    }
}

pub struct CodeTables {
    pub u: String,
    pub alpha: String,
    pub sphere: String,
}

fn linspace((lo, hi): (f64, f64), steps: usize) -> Vec<f64> {
    if steps < 2 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// CSV tables of exact and smooth code lengths. Sphere cells whose exact
/// count exceeds the budget are left empty.
pub fn code_tables(
    spec: &CodeTableSpec,
    constants: &AlphaApproxConstants,
    budget: &SphereBudget,
) -> Result<CodeTables> {
    if spec.u_max < 0 || spec.alpha_steps == 0 || spec.sphere_steps == 0 {
        return Err(ClrError::Config("code table ranges must be non-empty".into()));
    }
    let mut u = String::from("n,length_un,length_u_pos,length_u_neg\n");
    for n in 0..=spec.u_max {
        u += &format!("{n},{},{},{}\n", length_un(n as u64), length_u(n), length_u(-n));
    }

    let mut alpha = String::from("log2_theta,log2_ratio,theta,delta,alpha_exact,alpha_smooth\n");
    for lt in linspace(spec.alpha_log2_theta, spec.alpha_steps) {
        for lr in linspace(spec.alpha_log2_ratio, spec.alpha_steps) {
            let t = lt.exp2();
            let d = t / lr.exp2();
            alpha += &format!(
                "{lt},{lr},{t},{d},{},{}\n",
                alpha_len(t, d)?,
                alpha_smooth(t, d, constants)
            );
        }
    }

    let mut sphere = String::from("n,log2_r,r,h_exact,h_bar,h_applied\n");
    let cells: Vec<(usize, f64)> = spec
        .sphere_dims
        .iter()
        .flat_map(|&n| {
            linspace(spec.sphere_log2_radius, spec.sphere_steps)
                .into_iter()
                .map(move |l| (n, l))
        })
        .collect();
    let lines: Vec<Result<String>> = cells
        .par_iter()
        .map(|&(n, lr)| {
            let r = lr.exp2();
            let radius_sq = (r * r).floor() as u64;
            let exact = if budget.admits(n, radius_sq) {
                let c = lattice_count(n, radius_sq, budget)?;
                length_u_big(&BigInt::from(c.count - 1u32)).to_string()
            } else {
                String::new()
            };
            let hap = h_applied(n, r / (n as f64).sqrt())?.bits;
            Ok(format!("{n},{lr},{r},{exact},{},{hap}\n", h_bar(n, r * r, 1.0)))
        })
        .collect();
    for l in lines {
        sphere += &l?;
    }
    Ok(CodeTables { u, alpha, sphere })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
