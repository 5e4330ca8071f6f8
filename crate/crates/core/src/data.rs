//! Datasets, target quantization, feature expansion and simulated data.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ClrError, Result};
use crate::objective::DesignMatrix;

/// Observations `D` (J×N), target and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub observations: DMatrix<f64>,
    pub target: DVector<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub warnings: Vec<String>,
}

impl RawDataset {
    pub fn new(
        observations: DMatrix<f64>,
        target: DVector<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if observations.ncols() != target.len() {
            return Err(ClrError::Dimension {
                expected: observations.ncols(),
                got: target.len(),
            });
        }
        if feature_names.len() != observations.nrows() {
            return Err(ClrError::Dimension {
                expected: observations.nrows(),
                got: feature_names.len(),
            });
        }
        if target.len() < 2 {
            return Err(ClrError::Data(format!(
                "need at least 2 observations, got {}",
                target.len()
            )));
        }
        if observations.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(ClrError::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            observations,
            target,
            feature_names,
            target_name: target_name.into(),
            warnings: Vec::new(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.observations.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.target.len()
    }

    /// Subset of observations, in the given order.
    pub fn take(&self, rows: &[usize]) -> Self {
        Self {
            observations: self.observations.select_columns(rows),
            target: self.target.select_rows(rows),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            warnings: Vec::new(),
        }
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Table {
    headers: Vec<String>,
    /// `None` for columns with any non-numeric cell.
    columns: Vec<Option<Vec<f64>>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() {
        return Err(ClrError::Data(format!("{}: no columns", path.display())));
    }
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(ClrError::Data(format!("{}: no data rows", path.display())));
    }
    let mut columns: Vec<Option<Vec<f64>>> = vec![Some(Vec::with_capacity(records.len())); headers.len()];
    for rec in &records {
        for (c, col) in columns.iter_mut().enumerate() {
            if let Some(vals) = col {
                match rec.get(c).and_then(parse_cell) {
                    Some(v) => vals.push(v),
                    None => *col = None,
                }
            }
        }
    }
    Ok(Table { headers, columns })
}

/// Numeric columns other than `skip`, as a J×N matrix, with names and warnings.
fn feature_block(path: &Path, table: Table, skip: Option<usize>) -> (DMatrix<f64>, Vec<String>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (c, col) in table.columns.into_iter().enumerate() {
        if Some(c) == skip {
            continue;
        }
        match col {
            Some(v) => {
                names.push(table.headers[c].clone());
                rows.push(v);
            }
            None => {
                let msg = format!("dropped non-numeric column {:?}", table.headers[c]);
                warn!("{}: {msg}", path.display());
                warnings.push(msg);
            }
        }
    }
    let n = rows.first().map_or(0, Vec::len);
    (DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]), names, warnings)
}

/// Reads a comma-separated file with a header row. Non-numeric feature
/// columns are dropped with a warning. `target_column` defaults to the last
/// column.
pub fn load_csv(path: impl AsRef<Path>, target_column: Option<&str>) -> Result<RawDataset> {
    let path = path.as_ref();
    let mut table = read_table(path)?;
    let target_idx = match target_column {
        Some(name) => table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ClrError::Data(format!("target column {name:?} not found")))?,
        None => table.headers.len() - 1,
    };
    let target_name = table.headers[target_idx].clone();
    let target = table.columns[target_idx]
        .take()
        .ok_or_else(|| ClrError::Data(format!("target column {target_name:?} is not numeric")))?;
    let n = target.len();
    let (mut obs, names, warnings) = feature_block(path, table, Some(target_idx));
    if names.is_empty() {
        obs = DMatrix::zeros(0, n);
    }
    let mut ds = RawDataset::new(obs, DVector::from_vec(target), names, target_name)?;
    ds.warnings = warnings;
    Ok(ds)
}

/// Numeric feature columns of a file, skipping `exclude` when present.
pub fn load_features_csv(path: impl AsRef<Path>, exclude: Option<&str>) -> Result<(DMatrix<f64>, Vec<String>)> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let skip = exclude.and_then(|name| table.headers.iter().position(|h| h == name));
    let (obs, names, _) = feature_block(path, table, skip);
    Ok((obs, names))
}

/// Writes features then the target as the last column.
pub fn write_csv(ds: &RawDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.feature_names.clone();
    header.push(ds.target_name.clone());
    w.write_record(&header)?;
    for j in 0..ds.n_obs() {
        let mut rec: Vec<String> = (0..ds.n_features())
            .map(|i| format!("{:?}", ds.observations[(i, j)]))
            .collect();
        rec.push(format!("{:?}", ds.target[j]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const GRID_TOL: f64 = 1e-6;

fn on_grid(values: &[f64], origin: f64, g: f64, tol: f64) -> bool {
    values.iter().all(|&v| {
        let m = (v - origin) / g;
        (m - m.round()).abs() * g <= tol
    })
}

/// Largest `g` putting every `(yᵢ - y_min)/g` on the integers (to `1e-6` of
/// the range), or `(y_max - y_min)/2¹⁶` when no such `g` above that floor exists.
pub fn estimate_delta_y(target: &[f64]) -> Result<f64> {
    if target.iter().any(|v| !v.is_finite()) {
        return Err(ClrError::Data("target contains non-finite values".into()));
    }
    let mut u: Vec<f64> = target.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() < 2 {
        return Err(ClrError::DegenerateTarget(
            "target has fewer than two distinct values".into(),
        ));
    }
    let (lo, hi) = (u[0], u[u.len() - 1]);
    let range = hi - lo;
    let floor = range / 65536.0;
    let tol = GRID_TOL * range;

    let mut g = u[1] - u[0];
    for w in u.windows(2) {
        let (mut a, mut b) = (g, w[1] - w[0]);
        if a < b {
            std::mem::swap(&mut a, &mut b);
        }
        while b > tol && b >= floor * 0.5 {
            let r = a % b;
            a = b;
            b = if r > b - tol { 0.0 } else { r };
        }
        g = a;
        if g < floor {
            return Ok(floor);
        }
    }
    // Snap so the range is an exact multiple.
    let g = range / (range / g).round();
    if g >= floor && on_grid(&u, lo, g, tol) {
        Ok(g)
    } else {
        Ok(floor)
    }
}

/// Target values snapped to the grid `offset + δ·Z`.
pub fn quantize(target: &[f64], delta_y: f64, offset: f64) -> Vec<f64> {
    target
        .iter()
        .map(|&v| offset + delta_y * ((v - offset) / delta_y).round())
        .collect()
}

/// A dataset whose target lies on `offset + δ(y)·Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDataset {
    pub data: RawDataset,
    pub delta_y: f64,
    pub offset: f64,
}

/// Estimates `δ(y)` and snaps the target to the grid anchored at `min(y)`.
pub fn quantize_dataset(ds: &RawDataset) -> Result<QuantizedDataset> {
    let y = ds.target.as_slice();
    let delta_y = estimate_delta_y(y)?;
    let offset = y.iter().copied().fold(f64::INFINITY, f64::min);
    let mut data = ds.clone();
    data.target = DVector::from_vec(quantize(y, delta_y, offset));
    Ok(QuantizedDataset { data, delta_y, offset })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFn {
    Identity,
    Square,
    PairwiseProduct,
}

impl std::str::FromStr for FeatureFn {
    type Err = ClrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            "pairwise_product" => Ok(Self::PairwiseProduct),
            other => Err(ClrError::Config(format!("unknown feature function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub indices: Vec<usize>,
    pub function: FeatureFn,
}

/// The expansion map: output rows are produced group by group, in order,
/// followed by a row of ones when `include_bias` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureProductSpec {
    pub groups: Vec<FeatureGroup>,
    #[serde(default)]
    pub include_bias: bool,
}

impl FeatureProductSpec {
    pub fn identity(j: usize) -> Self {
        Self {
            groups: vec![FeatureGroup {
                indices: (0..j).collect(),
                function: FeatureFn::Identity,
            }],
            include_bias: false,
        }
    }

    /// `D`, then `D²` row-wise.
    pub fn squares(j: usize, include_bias: bool) -> Self {
        let mut s = Self::identity(j);
        s.groups.push(FeatureGroup {
            indices: (0..j).collect(),
            function: FeatureFn::Square,
        });
        s.include_bias = include_bias;
        s
    }

    /// `D`, then `dᵢ·dⱼ` for every pair `i < j`.
    pub fn pairwise(j: usize, include_bias: bool) -> Self {
        let mut s = Self::identity(j);
        s.groups.push(FeatureGroup {
            indices: (0..j).collect(),
            function: FeatureFn::PairwiseProduct,
        });
        s.include_bias = include_bias;
        s
    }

    pub fn with_bias(mut self, include_bias: bool) -> Self {
        self.include_bias = include_bias;
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| ClrError::Config(format!("feature spec: {e}")))
    }
}

/// Expanded feature matrix `X` (K×N).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedFeatures {
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub bias_index: Option<usize>,
}

impl ExpandedFeatures {
    /// Design matrix against a quantized target.
    pub fn design(&self, q: &QuantizedDataset) -> Result<DesignMatrix> {
        DesignMatrix::with_offset(self.x.clone(), q.data.target.clone(), q.delta_y, q.offset)?
            .with_bias(self.bias_index)
    }
}

pub fn expand_features(ds: &RawDataset, spec: &FeatureProductSpec) -> Result<ExpandedFeatures> {
    expand_matrix(&ds.observations, &ds.feature_names, spec)
}

/// [`expand_features`] on a bare J×N matrix.
pub fn expand_matrix(
    d: &DMatrix<f64>,
    feature_names: &[String],
    spec: &FeatureProductSpec,
) -> Result<ExpandedFeatures> {
    let j = d.nrows();
    let n = d.ncols();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let name = |i: usize| feature_names.get(i).cloned().unwrap_or_else(|| format!("x{i}"));
    for g in &spec.groups {
        if let Some(&bad) = g.indices.iter().find(|&&i| i >= j) {
            return Err(ClrError::Config(format!(
                "feature index {bad} out of range for {j} features"
            )));
        }
        match g.function {
            FeatureFn::Identity => {
                for &i in &g.indices {
                    rows.push(d.row(i).iter().copied().collect());
                    names.push(name(i));
                }
            }
            FeatureFn::Square => {
                for &i in &g.indices {
                    rows.push(d.row(i).iter().map(|v| v * v).collect());
                    names.push(format!("{}^2", name(i)));
                }
            }
            FeatureFn::PairwiseProduct => {
                for (a, &p) in g.indices.iter().enumerate() {
                    for &q in &g.indices[a + 1..] {
                        rows.push(d.row(p).iter().zip(d.row(q).iter()).map(|(u, v)| u * v).collect());
                        names.push(format!("{}*{}", name(p), name(q)));
                    }
                }
            }
        }
    }
    let bias_index = spec.include_bias.then(|| {
        rows.push(vec![1.0; n]);
        names.push("bias".to_owned());
        rows.len() - 1
    });
    let x = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    Ok(ExpandedFeatures { x, names, bias_index })
}

/// Correlated Gaussian regression model `y = βᵀx + σε`, `corr(xᵢ, xⱼ) = ρ^|i-j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub n_obs: usize,
    pub rho: f64,
    pub n_datasets: usize,
    pub seed: u64,
}

impl SimSpec {
    fn preset(beta: Vec<f64>, sigma: f64, seed: u64) -> Self {
        Self {
            beta,
            sigma,
            n_obs: 20,
            rho: 0.5,
            n_datasets: 50,
            seed,
        }
    }

    pub fn sim1(seed: u64) -> Self {
        Self::preset(vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0], 3.0, seed)
    }

    pub fn sim2(seed: u64) -> Self {
        Self::preset(vec![0.85; 8], 3.0, seed)
    }

    pub fn sim3(seed: u64) -> Self {
        Self::preset(vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2.0, seed)
    }

    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sim1" => Ok(Self::sim1(seed)),
            "sim2" => Ok(Self::sim2(seed)),
            "sim3" => Ok(Self::sim3(seed)),
            other => Err(ClrError::Config(format!("unknown simulation {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() {
            return Err(ClrError::Config("beta must not be empty".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(ClrError::Config(format!(
                "rho must satisfy |rho| < 1, got {}",
                self.rho
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ClrError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_obs < 2 || self.n_datasets == 0 {
            return Err(ClrError::Config("need n_obs >= 2 and n_datasets >= 1".into()));
        }
        Ok(())
    }

    /// Covariance `ρ^|i-j|` of the features.
    pub fn covariance(&self) -> DMatrix<f64> {
        let j = self.beta.len();
        DMatrix::from_fn(j, j, |a, b| self.rho.powi((a as i32 - b as i32).abs()))
    }

    /// Seed of replication `index`.
    pub fn dataset_seed(&self, index: usize) -> u64 {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(index as u64 + 1);
        r.gen()
    }
}

/// Replication `index` of `spec`, independent of the others.
pub fn generate_sim_one(spec: &SimSpec, index: usize) -> Result<RawDataset> {
    spec.validate()?;
    let j = spec.beta.len();
    let chol = spec
        .covariance()
        .cholesky()
        .ok_or_else(|| ClrError::Config("feature covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.dataset_seed(index));
    let z = DMatrix::from_fn(j, spec.n_obs, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = l * z;
    let beta = DVector::from_column_slice(&spec.beta);
    let y = DVector::from_fn(spec.n_obs, |c, _| {
        x.column(c).dot(&beta) + spec.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    let names = (0..j).map(|i| format!("x{}", i + 1)).collect();
    RawDataset::new(x, y, names, "y")
}

pub fn generate_sim(spec: &SimSpec) -> Result<Vec<RawDataset>> {
    (0..spec.n_datasets).map(|i| generate_sim_one(spec, i)).collect()
}

/// Seeded random partition; the training part has `⌈f·N⌉` rows.
pub fn split(ds: &RawDataset, train_fraction: f64, seed: u64) -> Result<(RawDataset, RawDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ClrError::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.n_obs();
    let n_train = ((train_fraction * n as f64) - 1e-9).ceil() as usize;
    if n_train < 2 || n - n_train < 1 {
        return Err(ClrError::Data(format!(
            "{n} rows are too few to split at {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, te) = idx.split_at(n_train);
    Ok((ds.take(tr), ds.take(te)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny() -> RawDataset {
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        RawDataset::new(
            d,
            DVector::from_vec(vec![1.0, 2.0]),
            vec!["a".into(), "b".into(), "c".into()],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn load_numeric_and_text_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "a,name,b,y\n1,x,2,3\n4,y,5,6\n7,z,8,9").unwrap();
        drop(f);
        let ds = load_csv(&p, Some("y")).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.n_obs(), 3);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.warnings.len(), 1);
        assert_eq!(ds.target.as_slice(), &[3.0, 6.0, 9.0]);
        assert!(load_csv(&p, Some("name")).is_err());
        assert!(load_csv(dir.path().join("missing.csv"), None).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DMatrix::from_fn(3, 15, |_, _| rng.sample::<f64, _>(StandardNormal) * 1e3);
        let y = DVector::from_fn(15, |_, _| rng.gen::<f64>() / 7.0);
        let ds = RawDataset::new(d, y, vec!["p".into(), "q".into(), "r".into()], "t").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&ds, &p).unwrap();
        let back = load_csv(&p, None).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn delta_examples() {
        assert!((estimate_delta_y(&[2.0, 4.0, 6.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!((estimate_delta_y(&[0.1, 0.3, 0.7]).unwrap() - 0.2).abs() < 1e-12);
        assert!((estimate_delta_y(&[1.5, 3.0, 3.0, 12.0]).unwrap() - 1.5).abs() < 1e-12);
        assert!(matches!(
            estimate_delta_y(&[3.0, 3.0]),
            Err(ClrError::DegenerateTarget(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * std::f64::consts::PI).collect();
        let range = y.iter().copied().fold(f64::MIN, f64::max) - y.iter().copied().fold(f64::MAX, f64::min);
        assert_eq!(estimate_delta_y(&y).unwrap(), range / 65536.0);
    }

    #[test]
    fn delta_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = rng.gen_range(0.01..10.0);
            let y: Vec<f64> = (0..25).map(|_| f64::from(rng.gen_range(-40..40)) * g + 1.0).collect();
            let base = estimate_delta_y(&y).unwrap();
            for c in [0.1, 3.0, 1000.0] {
                let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
                let got = estimate_delta_y(&scaled).unwrap();
                assert!((got - c * base).abs() <= 1e-8 * c * base, "{got} vs {}", c * base);
            }
        }
    }

    #[test]
    fn quantized_target_is_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<f64> = (0..40).map(|_| f64::from(rng.gen_range(0..200)) * 0.05 - 3.0).collect();
        let ds = RawDataset::new(DMatrix::zeros(0, 40), DVector::from_vec(y), vec![], "y").unwrap();
        let q = quantize_dataset(&ds).unwrap();
        for &v in q.data.target.iter() {
            let m = (v - q.offset) / q.delta_y;
            assert!((m - m.round()).abs() < 1e-6);
        }
    }

    #[test]
    fn expansion_shapes() {
        let ds = tiny();
        let sq = expand_features(&ds, &FeatureProductSpec::squares(2, true).clone()).unwrap();
        let two = RawDataset::new(
            ds.observations.rows(0, 2).into_owned(),
            ds.target.clone(),
            vec!["a".into(), "b".into()],
            "y",
        )
        .unwrap();
        assert_eq!(
            expand_features(&two, &FeatureProductSpec::squares(2, true))
                .unwrap()
                .x
                .nrows(),
            5
        );
        assert_eq!(sq.bias_index, Some(4));

        let id = expand_features(&ds, &FeatureProductSpec::identity(3)).unwrap();
        assert_eq!(id.x, ds.observations);

        let pw = expand_features(&ds, &FeatureProductSpec::pairwise(3, false)).unwrap();
        assert_eq!(pw.x.nrows(), 6);
        let d = &ds.observations;
        let pairs = [(0, 1), (0, 2), (1, 2)];
        for (r, &(a, b)) in pairs.iter().enumerate() {
            for c in 0..2 {
                assert_eq!(pw.x[(3 + r, c)], d[(a, c)] * d[(b, c)]);
            }
        }

        let bad = FeatureProductSpec {
            groups: vec![FeatureGroup {
                indices: vec![7],
                function: FeatureFn::Square,
            }],
            include_bias: false,
        };
        assert!(expand_features(&ds, &bad).is_err());
        assert!(FeatureProductSpec::from_json(r#"{"groups":[{"indices":[0],"function":"cube"}]}"#).is_err());
        assert!("cube".parse::<FeatureFn>().is_err());
    }

    #[test]
    fn sim_is_seeded() {
        let spec = SimSpec {
            n_datasets: 3,
            ..SimSpec::sim1(9)
        };
        assert_eq!(generate_sim(&spec).unwrap(), generate_sim(&spec).unwrap());
        let other = SimSpec {
            seed: 10,
            ..spec.clone()
        };
        assert_ne!(generate_sim(&spec).unwrap()[0], generate_sim(&other).unwrap()[0]);
        let sets = generate_sim(&spec).unwrap();
        assert_ne!(sets[0], sets[1]);
        assert!(SimSpec { rho: 1.0, ..spec }.validate().is_err());
    }

    #[test]
    fn sim_presets() {
        assert_eq!(SimSpec::sim1(0).beta, vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(SimSpec::sim1(0).sigma, 3.0);
        assert_eq!(SimSpec::sim3(0).sigma, 2.0);
        assert_eq!(SimSpec::sim2(0).beta, vec![0.85; 8]);
    }

    #[test]
    fn pooled_covariance_converges() {
        let spec = SimSpec {
            n_obs: 10_000,
            n_datasets: 1,
            ..SimSpec::sim3(5)
        };
        let ds = generate_sim_one(&spec, 0).unwrap();
        let x = &ds.observations;
        let cov = (x * x.transpose()) / spec.n_obs as f64;
        let expect = spec.covariance();
        for a in 0..8 {
            for b in 0..8 {
                assert!((cov[(a, b)] - expect[(a, b)]).abs() < 0.05);
            }
        }
        let r = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!((r - 0.5).abs() < 0.05);
    }

    #[test]
    fn split_sizes_and_partition() {
        let spec = SimSpec {
            n_obs: 60,
            n_datasets: 1,
            ..SimSpec::sim1(1)
        };
        let mut ds = generate_sim_one(&spec, 0).unwrap();
        ds.target = DVector::from_fn(60, |i, _| i as f64);
        let (tr, te) = split(&ds, 2.0 / 3.0, 7).unwrap();
        assert_eq!((tr.n_obs(), te.n_obs()), (40, 20));
        let mut all: Vec<i64> = tr.target.iter().chain(te.target.iter()).map(|&v| v as i64).collect();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
        assert_eq!(split(&ds, 2.0 / 3.0, 7).unwrap().0, tr);
        assert!(split(&ds, 1.0, 7).is_err());
    }
}
