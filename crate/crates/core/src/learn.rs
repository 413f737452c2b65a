//! Data sets, the cubic regression generator and ridge regression on random
//! features.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{decode_sketch, normalize_rows, sketch_data_from, EstimatorKind, FeatureStream, RffConfig};
use crate::linalg::{cholesky, cholesky_solve};
use crate::quantizer::{Quantizer, QuantizerKind};
use crate::rng::{substream, Purpose};

/// Bits charged per full-precision feature in memory accounting.
pub const FLOAT_BITS: u32 = 32;
const KRR_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    targets: Vec<f64>,
    task: Task,
    normalized: bool,
}

impl Dataset {
    pub fn new(features: Array2<f64>, targets: Vec<f64>, task: Task) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Input(format!("data set must be non-empty, got {n} x {d}")));
        }
        if targets.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Input("data set has non-finite entries".into()));
        }
        Ok(Self { features, targets, task, normalized: false })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Scale every row to unit Euclidean norm.
    pub fn normalize(mut self) -> Result<Self> {
        self.features = normalize_rows(self.features.view())?;
        self.normalized = true;
        Ok(self)
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            task: self.task,
            normalized: self.normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    /// `label idx:val idx:val ...` with 1-based indices.
    Sparse,
    /// Headerless CSV, target in the last column.
    DenseCsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "libsvm" => Ok(Self::Sparse),
            "csv" | "dense-csv" => Ok(Self::DenseCsv),
            other => Err(Error::Input(format!("unknown data format '{other}'"))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sparse => "sparse",
            Self::DenseCsv => "csv",
        })
    }
}

/// Parse a data set. `dim` fixes the sparse width; otherwise the largest index
/// seen is used. Sparse files are read as classification data, CSV as regression.
pub fn parse_dataset(text: &str, format: DatasetFormat, dim: Option<usize>) -> Result<Dataset> {
    match format {
        DatasetFormat::Sparse => parse_sparse(text, dim),
        DatasetFormat::DenseCsv => parse_csv(text),
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat, dim: Option<usize>, normalize: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let ds = parse_dataset(&text, format, dim)?;
    if normalize { ds.normalize() } else { Ok(ds) }
}

fn parse_sparse(text: &str, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0;
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .expect("non-empty line")
            .parse()
            .map_err(|_| err("label is not a number".into()))?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in parts {
            let (i, v) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got '{tok}'")))?;
            let i: usize = i.parse().map_err(|_| err(format!("bad index '{i}'")))?;
            if i == 0 {
                return Err(err("indices are 1-based".into()));
            }
            let v: f64 = v.parse().map_err(|_| err(format!("bad value '{v}'")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value at index {i}")));
            }
            if entries.iter().any(|&(j, _)| j == i - 1) {
                return Err(err(format!("duplicate index {i}")));
            }
            if let Some(d) = dim {
                if i > d {
                    return Err(err(format!("index {i} exceeds dimension {d}")));
                }
            }
            width = width.max(i);
            entries.push((i - 1, v));
        }
        rows.push(entries);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Input("data file has no rows".into()));
    }
    let d = dim.unwrap_or(width);
    let mut features = Array2::zeros((rows.len(), d));
    for (r, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features[[r, j]] = v;
        }
    }
    Dataset::new(features, labels, Task::Classification)
}

fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (ln, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: ln + 1, msg: e.to_string() })?;
        let err = |msg: String| Error::Parse { line: ln + 1, msg };
        if rec.len() < 2 {
            return Err(err("need at least one feature and a target".into()));
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => return Err(err(format!("expected {w} columns, found {}", rec.len()))),
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| err(format!("'{field}' is not a number")))?;
            values.push(v);
        }
        n += 1;
    }
    let w = width.ok_or_else(|| Error::Input("data file has no rows".into()))?;
    let all = Array2::from_shape_vec((n, w), values).expect("rows have equal width");
    let targets = all.column(w - 1).to_vec();
    Dataset::new(all.slice(s![.., ..w - 1]).to_owned(), targets, Task::Regression)
}

/// Shuffle with the split stream of `seed` and cut at `round(n * fraction)`.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = ds.n();
    let cut = (n as f64 * train_fraction).round() as usize;
    if cut == 0 || cut == n {
        return Err(Error::Input(format!("cannot split {n} rows at fraction {train_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, Purpose::Split, 0, 0));
    Ok((ds.subset(&idx[..cut]), ds.subset(&idx[cut..])))
}

/// `n` rows drawn without replacement, or the whole set when `n >= ds.n()`.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Input("subsample size must be positive".into()));
    }
    if n >= ds.n() {
        return Ok(ds.clone());
    }
    let mut idx: Vec<usize> = (0..ds.n()).collect();
    idx.shuffle(&mut substream(seed, Purpose::Split, 1, 0));
    Ok(ds.subset(&idx[..n]))
}

/// Cubic regression problem `y = b1^T x + b2^T (x o x) + b3^T (x o x o x) + e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub seed: u64,
    /// Multiplies the drawn cubic coefficients.
    pub cubic_scale: f64,
    pub noise_sd: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_train: 40_000, n_test: 10_000, d: 10, seed: 0, cubic_scale: 1.0, noise_sd: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub train: Dataset,
    pub test: Dataset,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
}

/// Response of the cubic model at `x`, without noise.
pub fn cubic_response(x: ArrayView1<f64>, beta1: &[f64], beta2: &[f64], beta3: &[f64]) -> f64 {
    x.iter().enumerate().map(|(j, &v)| beta1[j] * v + beta2[j] * v * v + beta3[j] * v * v * v).sum()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    if spec.n_train == 0 || spec.n_test == 0 || spec.d == 0 {
        return Err(Error::Input("synthetic sizes must be positive".into()));
    }
    if !(spec.noise_sd >= 0.0 && spec.cubic_scale.is_finite()) {
        return Err(Error::Input("noise and cubic scale must be finite and non-negative".into()));
    }
    let d = spec.d;
    let beta1: Vec<f64> = (1..=d).map(|i| i as f64).collect();
    let beta2 = vec![1.0; d];
    let mut coef = substream(spec.seed, Purpose::Synthetic, 0, 0);
    let beta3: Vec<f64> = (0..d).map(|_| spec.cubic_scale * coef.sample::<f64, _>(StandardNormal)).collect();
    let draw = |index: u64, n: usize| {
        let mut rng = substream(spec.seed, Purpose::Synthetic, index, 0);
        let mut x = Array2::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        for mut row in x.axis_iter_mut(Axis(0)) {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let e: f64 = rng.sample(StandardNormal);
            y.push(cubic_response(row.view(), &beta1, &beta2, &beta3) + spec.noise_sd * e);
        }
        Dataset::new(x, y, Task::Regression)
    };
    let train = draw(1, spec.n_train)?;
    let test = draw(2, spec.n_test)?;
    Ok(Synthetic { train, test, beta1, beta2, beta3 })
}

/// Normal equations `F^T F`, `F^T y`, accumulated block by block with the column
/// sums needed for an intercept.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    gram: Array2<f64>,
    rhs: Array1<f64>,
    col_sum: Array1<f64>,
    y_sum: f64,
    n: usize,
}

impl RidgeSystem {
    pub fn new(p: usize) -> Self {
        Self { gram: Array2::zeros((p, p)), rhs: Array1::zeros(p), col_sum: Array1::zeros(p), y_sum: 0.0, n: 0 }
    }

    pub fn accumulate(&mut self, f: ArrayView2<f64>, y: &[f64]) -> Result<()> {
        if f.ncols() != self.rhs.len() {
            return Err(Error::DimensionMismatch { expected: self.rhs.len(), got: f.ncols() });
        }
        if f.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: f.nrows(), got: y.len() });
        }
        if f.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite regression input".into()));
        }
        ndarray::linalg::general_mat_mul(1.0, &f.t(), &f, 1.0, &mut self.gram);
        let yv = ArrayView1::from(y);
        self.rhs += &f.t().dot(&yv);
        self.col_sum += &f.sum_axis(Axis(0));
        self.y_sum += yv.sum();
        self.n += y.len();
        Ok(())
    }

    /// Solve `(G + lambda I) w = r`, on centred data when `intercept` is set.
    /// Returns the weights and the intercept.
    pub fn solve(&self, lambda: f64, intercept: bool) -> Result<(Array1<f64>, f64)> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda = {lambda} must be positive")));
        }
        let p = self.rhs.len();
        let (mut a, r) = if intercept && self.n > 0 {
            let nf = self.n as f64;
            let mu = &self.col_sum / nf;
            let ybar = self.y_sum / nf;
            let outer = mu.view().insert_axis(Axis(1)).dot(&mu.view().insert_axis(Axis(0)));
            (&self.gram - &(outer * nf), &self.rhs - &(&mu * (nf * ybar)))
        } else {
            (self.gram.clone(), self.rhs.clone())
        };
        for i in 0..p {
            a[[i, i]] += lambda;
        }
        // G is symmetric up to rounding in the blocked product
        let at = a.t().to_owned();
        let a = (a + at) * 0.5;
        let w = cholesky_solve(&cholesky(a.view())?, &r);
        let b = if intercept && self.n > 0 { (self.y_sum - self.col_sum.dot(&w)) / self.n as f64 } else { 0.0 };
        Ok((w, b))
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Ridge weights solving `(F^T F + lambda I) w = F^T y`.
pub fn ridge_fit(features: ArrayView2<f64>, targets: &[f64], lambda: f64) -> Result<Array1<f64>> {
    let mut sys = RidgeSystem::new(features.ncols());
    sys.accumulate(features, targets)?;
    Ok(sys.solve(lambda, false)?.0)
}

/// How the regression sees each data point.
#[derive(Debug, Clone, PartialEq)]
pub enum KrrMethod {
    /// Raw inputs.
    Linear,
    /// Unquantized random features.
    Full,
    Quantized(Quantizer),
}

impl KrrMethod {
    pub fn label(&self) -> String {
        match self {
            Self::Linear => "linear".into(),
            Self::Full => "full".into(),
            Self::Quantized(q) => match q.kind() {
                QuantizerKind::LmRff => "lm_rff".into(),
                QuantizerKind::Lm2Rff => "lm2_rff".into(),
                QuantizerKind::StocqGrid => "stocq".into(),
                QuantizerKind::Identity => "full".into(),
            },
        }
    }

    pub fn bits(&self) -> u32 {
        match self {
            Self::Quantized(q) if q.kind() != QuantizerKind::Identity => q.bits(),
            _ => FLOAT_BITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrConfig {
    pub gamma: f64,
    pub m: usize,
    pub seed: u64,
    /// Ridge penalties on the per-sample objective `mean((y - f)^2) + lambda |w|^2`.
    pub lambdas: Vec<f64>,
    pub estimator: EstimatorKind,
}

impl KrrConfig {
    pub fn default_lambdas() -> Vec<f64> {
        (-6..=2).map(|k| 10f64.powi(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrResult {
    pub method: String,
    pub bits: u32,
    pub m: usize,
    pub memory_bits: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub test_mse: f64,
    pub seed: u64,
}

impl KrrResult {
    pub const CSV_HEADER: &'static str = "method,b,m,memory_bits,gamma,lambda,test_mse,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method, self.bits, self.m, self.memory_bits, self.gamma, self.lambda, self.test_mse, self.seed
        )
    }
}

/// Feature map shared by the training and test sides of one experiment.
struct FeatureMap<'a> {
    method: &'a KrrMethod,
    stream: Option<FeatureStream>,
    estimator: EstimatorKind,
}

impl FeatureMap<'_> {
    fn width(&self, d: usize) -> usize {
        self.stream.as_ref().map_or(d, |s| s.config().m)
    }

    fn block(&self, rows: ArrayView2<f64>, first_row: u64) -> Result<Array2<f64>> {
        let mut f = match (self.method, &self.stream) {
            (KrrMethod::Linear, _) => return Ok(rows.to_owned()),
            (KrrMethod::Full, Some(s)) => s.project(rows)?,
            (KrrMethod::Quantized(q), Some(s)) if q.kind() == QuantizerKind::Identity => s.project(rows)?,
            (KrrMethod::Quantized(q), Some(s)) => decode_sketch(&sketch_data_from(s, rows, q, false, first_row)?, q)?,
            _ => unreachable!("random-feature methods carry a stream"),
        };
        match self.estimator {
            EstimatorKind::Simple => f.mapv_inplace(|v| v * std::f64::consts::SQRT_2),
            EstimatorKind::Normalized => {
                for mut row in f.axis_iter_mut(Axis(0)) {
                    let norm = row.dot(&row).sqrt();
                    if norm > 0.0 {
                        row /= norm;
                    }
                }
            }
        }
        Ok(f)
    }
}

/// Fit ridge regression with an intercept on the training set for every penalty
/// and report the one with the lowest test error.
///
/// Both sides are mapped through the same feature stream; the test rows take the
/// rounding streams that follow the training rows.
pub fn krr_experiment(train: &Dataset, test: &Dataset, method: &KrrMethod, cfg: &KrrConfig) -> Result<KrrResult> {
    if train.d() != test.d() {
        return Err(Error::DimensionMismatch { expected: train.d(), got: test.d() });
    }
    if cfg.lambdas.is_empty() {
        return Err(Error::Input("lambda grid is empty".into()));
    }
    let stream = match method {
        KrrMethod::Linear => None,
        _ => Some(FeatureStream::new(&RffConfig::new(cfg.gamma, cfg.m, train.d(), cfg.seed)?)),
    };
    let map = FeatureMap { method, stream, estimator: cfg.estimator };
    let p = map.width(train.d());

    let mut sys = RidgeSystem::new(p);
    for (b, (rows, y)) in train
        .features()
        .axis_chunks_iter(Axis(0), KRR_BLOCK)
        .zip(train.targets().chunks(KRR_BLOCK))
        .enumerate()
    {
        let f = map.block(rows, (b * KRR_BLOCK) as u64)?;
        sys.accumulate(f.view(), y)?;
    }

    let n = train.n() as f64;
    let fits = cfg.lambdas.iter().map(|&l| sys.solve(l * n, true)).collect::<Result<Vec<_>>>()?;
    let weights = Array2::from_shape_fn((p, fits.len()), |(i, k)| fits[k].0[i]);
    let mut sse = vec![0.0; fits.len()];
    for (b, (rows, y)) in test.features().axis_chunks_iter(Axis(0), KRR_BLOCK).zip(test.targets().chunks(KRR_BLOCK)).enumerate() {
        let f = map.block(rows, (train.n() + b * KRR_BLOCK) as u64)?;
        let pred = f.dot(&weights);
        for (r, &target) in y.iter().enumerate() {
            for (k, e) in sse.iter_mut().enumerate() {
                let d = pred[[r, k]] + fits[k].1 - target;
                *e += d * d;
            }
        }
    }
    let (best, mse) = sse
        .iter()
        .map(|e| e / test.n() as f64)
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let (bits, m) = match method {
        KrrMethod::Linear => (FLOAT_BITS, train.d()),
        _ => (method.bits(), cfg.m),
    };
    Ok(KrrResult {
        method: method.label(),
        bits,
        m,
        memory_bits: bits as u64 * m as u64,
        gamma: if matches!(method, KrrMethod::Linear) { 0.0 } else { cfg.gamma },
        lambda: cfg.lambdas[best],
        test_mse: mse,
        seed: cfg.seed,
    })
}

/// Best result over a `gamma` grid.
pub fn krr_tuned(train: &Dataset, test: &Dataset, method: &KrrMethod, cfg: &KrrConfig, gammas: &[f64]) -> Result<KrrResult> {
    if matches!(method, KrrMethod::Linear) {
        return krr_experiment(train, test, method, cfg);
    }
    let mut best: Option<KrrResult> = None;
    for &gamma in gammas {
        let r = krr_experiment(train, test, method, &KrrConfig { gamma, ..cfg.clone() })?;
        if best.as_ref().is_none_or(|b| r.test_mse < b.test_mse) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::Input("gamma grid is empty".into()))
}
