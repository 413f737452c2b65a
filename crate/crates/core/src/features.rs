//! Random Fourier features `z = cos(gamma w^T u + tau)` and kernel estimators.
//!
//! Raw features stay in `[-1, 1]`; the `sqrt(2)` scaling of the feature map is
//! applied inside the estimators as a factor of 2.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, s};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::TAU;

use crate::quantizer::Quantizer;
use crate::rng::{self, Purpose};
use crate::sketch::{self, Sketch};
use crate::{Error, Result};

/// Rows processed together when generating or sketching.
pub const ROW_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RffConfig {
    pub gamma: f64,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
}

impl RffConfig {
    pub fn new(gamma: f64, m: usize, d: usize, seed: u64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Input(format!("gamma must be positive, got {gamma}")));
        }
        if m == 0 || d == 0 {
            return Err(Error::Input(format!("need m >= 1 and d >= 1, got m={m} d={d}")));
        }
        Ok(RffConfig { gamma, m, d, seed })
    }
}

/// The projection directions and phases of one feature stream.
#[derive(Debug, Clone)]
pub struct FeatureStream {
    cfg: RffConfig,
    /// `m x d`, row `j` is `w_j`.
    directions: Array2<f64>,
    phases: Array1<f64>,
}

impl FeatureStream {
    /// Draw `(w_j, tau_j)` for every feature from its own substream.
    pub fn new(cfg: &RffConfig) -> Self {
        let draws: Vec<(Vec<f64>, f64)> = (0..cfg.m)
            .into_par_iter()
            .map(|j| {
                let mut s = rng::substream(cfg.seed, Purpose::Features, j as u64, 0);
                let w: Vec<f64> = (0..cfg.d).map(|_| StandardNormal.sample(&mut s)).collect();
                (w, s.random::<f64>() * TAU)
            })
            .collect();
        let mut directions = Array2::zeros((cfg.m, cfg.d));
        let mut phases = Array1::zeros(cfg.m);
        for (j, (w, tau)) in draws.into_iter().enumerate() {
            directions.row_mut(j).assign(&ArrayView1::from(&w));
            phases[j] = tau;
        }
        FeatureStream { cfg: *cfg, directions, phases }
    }

    pub fn config(&self) -> &RffConfig {
        &self.cfg
    }

    pub fn directions(&self) -> ArrayView2<'_, f64> {
        self.directions.view()
    }

    pub fn phases(&self) -> ArrayView1<'_, f64> {
        self.phases.view()
    }

    /// Raw features of a block of rows, `rows.nrows() x m`.
    pub fn project(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.cfg.d {
            return Err(Error::DimensionMismatch { expected: self.cfg.d, got: rows.ncols() });
        }
        let mut out = rows.dot(&self.directions.t());
        let gamma = self.cfg.gamma;
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (x, tau) in row.iter_mut().zip(self.phases.iter()) {
                *x = (gamma * *x + tau).cos();
            }
        }
        Ok(out)
    }
}

/// Scale each row to unit Euclidean norm.
pub fn normalize_rows(data: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = data.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Input(format!("row {i} is all zeros and cannot be normalized")));
        }
        if !norm.is_finite() {
            return Err(Error::Input(format!("row {i} has non-finite entries")));
        }
        row.mapv_inplace(|x| x / norm);
    }
    Ok(out)
}

/// True when every row has unit norm to within `tol`.
pub fn rows_are_unit(data: ArrayView2<f64>, tol: f64) -> bool {
    data.axis_iter(Axis(0)).all(|r| (r.dot(&r).sqrt() - 1.0).abs() <= tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureScale {
    /// `z = cos(gamma w^T u + tau)`.
    Raw,
    /// `sqrt(2) z`.
    Scaled,
}

/// Dense features of a data set, tagged with the stream that produced them.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    scale: FeatureScale,
    cfg: RffConfig,
}

impl FeatureMatrix {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
    pub fn scale(&self) -> FeatureScale {
        self.scale
    }
    pub fn config(&self) -> &RffConfig {
        &self.cfg
    }
    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn scaled(mut self) -> Self {
        if self.scale == FeatureScale::Raw {
            self.values.mapv_inplace(|x| x * std::f64::consts::SQRT_2);
            self.scale = FeatureScale::Scaled;
        }
        self
    }

    fn check_stream(&self, other: &FeatureMatrix) -> Result<()> {
        let (a, b) = (&self.cfg, &other.cfg);
        if a.seed != b.seed || a.m != b.m || a.d != b.d || a.gamma.to_bits() != b.gamma.to_bits() {
            return Err(Error::StreamMismatch("feature matrices come from different streams".into()));
        }
        Ok(())
    }

    /// Full-precision kernel estimate between row `i` of `self` and row `j` of `other`.
    pub fn estimate(&self, i: usize, other: &FeatureMatrix, j: usize) -> Result<f64> {
        self.check_stream(other)?;
        if self.scale != FeatureScale::Raw || other.scale != FeatureScale::Raw {
            return Err(Error::Input("estimators take raw features".into()));
        }
        estimate_full(self.values.row(i).as_slice().unwrap(), other.values.row(j).as_slice().unwrap())
    }
}

/// Raw features for every row of `data`, generated block by block.
pub fn generate_rff(data: ArrayView2<f64>, cfg: &RffConfig) -> Result<FeatureMatrix> {
    let stream = FeatureStream::new(cfg);
    generate_with(&stream, data)
}

pub fn generate_with(stream: &FeatureStream, data: ArrayView2<f64>) -> Result<FeatureMatrix> {
    let cfg = *stream.config();
    if data.ncols() != cfg.d {
        return Err(Error::DimensionMismatch { expected: cfg.d, got: data.ncols() });
    }
    let mut values = Array2::zeros((data.nrows(), cfg.m));
    values
        .axis_chunks_iter_mut(Axis(0), ROW_BLOCK)
        .into_par_iter()
        .zip(data.axis_chunks_iter(Axis(0), ROW_BLOCK).into_par_iter())
        .try_for_each(|(mut out, rows)| -> Result<()> {
            out.assign(&stream.project(rows)?);
            Ok(())
        })?;
    Ok(FeatureMatrix { values, scale: FeatureScale::Raw, cfg })
}

/// Encode every row of `data` without materializing the full feature matrix.
/// Row norms of the decoded levels are attached when `with_norms` is set.
pub fn sketch_data(stream: &FeatureStream, data: ArrayView2<f64>, q: &Quantizer, with_norms: bool) -> Result<Sketch> {
    sketch_data_from(stream, data, q, with_norms, 0)
}

/// As [`sketch_data`], with data row `k` drawing its rounding stream as row
/// `first_row + k`. Sketching a second data set with a disjoint row range keeps
/// its rounding independent of the first.
pub fn sketch_data_from(
    stream: &FeatureStream,
    data: ArrayView2<f64>,
    q: &Quantizer,
    with_norms: bool,
    first_row: u64,
) -> Result<Sketch> {
    let cfg = *stream.config();
    if data.ncols() != cfg.d {
        return Err(Error::DimensionMismatch { expected: cfg.d, got: data.ncols() });
    }
    let n = data.nrows();
    let blocks: Vec<Vec<Vec<u8>>> = (0..n.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * ROW_BLOCK;
            let end = (start + ROW_BLOCK).min(n);
            let feats = stream.project(data.slice(s![start..end, ..]))?;
            feats
                .axis_iter(Axis(0))
                .enumerate()
                .map(|(k, row)| sketch::encode_row(q, row.as_slice().unwrap(), cfg.seed, first_row + (start + k) as u64))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = Sketch::for_quantizer(n, cfg.m, q, cfg.gamma, cfg.seed)?;
    for (i, codes) in blocks.into_iter().flatten().enumerate() {
        out.set_row(i, &codes)?;
    }
    if with_norms {
        out.compute_row_norms(q)?;
    }
    Ok(out)
}

/// `exp(-gamma^2 (1 - u^T v))` for unit vectors.
pub fn exact_kernel(u: &[f64], v: &[f64], gamma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let rho: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((-gamma * gamma * (1.0 - rho)).exp())
}

/// `(2/m) sum_i z_u,i z_v,i`.
pub fn estimate_full(feat_u: &[f64], feat_v: &[f64]) -> Result<f64> {
    if feat_u.len() != feat_v.len() {
        return Err(Error::DimensionMismatch { expected: feat_u.len(), got: feat_v.len() });
    }
    if feat_u.is_empty() {
        return Err(Error::Input("empty feature rows".into()));
    }
    let dot: f64 = feat_u.iter().zip(feat_v).map(|(a, b)| a * b).sum();
    Ok(2.0 * dot / feat_u.len() as f64)
}

/// `(2/m) sum_i Q(z_u,i) Q(z_v,i)` for row `i` of `a` and row `j` of `b`.
pub fn estimate_quantized(a: &Sketch, i: usize, b: &Sketch, j: usize, q: &Quantizer) -> Result<f64> {
    a.compatible(b)?;
    let (u, v) = (a.decode_row(q, i)?, b.decode_row(q, j)?);
    estimate_full(&u, &v)
}

/// Cosine of two quantized feature rows. Stored row norms are used when present.
pub fn estimate_normalized(a: &Sketch, i: usize, b: &Sketch, j: usize, q: &Quantizer) -> Result<f64> {
    a.compatible(b)?;
    let (u, v) = (a.decode_row(q, i)?, b.decode_row(q, j)?);
    let same_codes = a.row(i) == b.row(j);
    let norm = |s: &Sketch, k: usize, x: &[f64]| match s.row_norms() {
        Some(n) => n[k],
        None => x.iter().map(|t| t * t).sum::<f64>().sqrt(),
    };
    let denom = norm(a, i, &u) * norm(b, j, &v);
    if denom == 0.0 {
        return Err(Error::Input("normalized estimator needs a nonzero quantized row".into()));
    }
    if same_codes {
        return Ok(1.0);
    }
    let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
    Ok((dot / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// `(2/m) sum Q(z_u) Q(z_v)`, or the full-precision estimator on raw features.
    Simple,
    /// Cosine of the (quantized) feature rows.
    Normalized,
}

/// Copy the upper triangle onto the lower one.
fn mirror_upper(g: &mut Array2<f64>) {
    let n = g.nrows();
    for i in 0..n {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
}

/// Gram matrix of row-wise features (`n x m`) under an estimator.
pub fn gram_from_rows(rows: ArrayView2<f64>, kind: EstimatorKind) -> Result<Array2<f64>> {
    let m = rows.ncols() as f64;
    let mut g = rows.dot(&rows.t());
    mirror_upper(&mut g);
    match kind {
        EstimatorKind::Simple => g.mapv_inplace(|x| 2.0 * x / m),
        EstimatorKind::Normalized => {
            let norms: Vec<f64> = (0..g.nrows()).map(|i| g[[i, i]].sqrt()).collect();
            if let Some(i) = norms.iter().position(|&x| x == 0.0) {
                return Err(Error::Input(format!("row {i} has zero norm")));
            }
            for ((i, j), x) in g.indexed_iter_mut() {
                *x = if i == j { 1.0 } else { (*x / (norms[i] * norms[j])).clamp(-1.0, 1.0) };
            }
        }
    }
    Ok(g)
}

/// Gram matrix of a feature matrix.
pub fn gram_features(features: &FeatureMatrix, kind: EstimatorKind) -> Result<Array2<f64>> {
    if features.scale() != FeatureScale::Raw {
        return Err(Error::Input("gram matrices take raw features".into()));
    }
    gram_from_rows(features.values(), kind)
}

/// Gram matrix of a sketch, decoded through its codebook.
pub fn gram_sketch(sk: &Sketch, q: &Quantizer, kind: EstimatorKind) -> Result<Array2<f64>> {
    gram_from_rows(decode_sketch(sk, q)?.view(), kind)
}

/// Decoded levels of every row of a sketch.
pub fn decode_sketch(sk: &Sketch, q: &Quantizer) -> Result<Array2<f64>> {
    sk.check_codebook(q)?;
    let mut rows = Array2::zeros((sk.n(), sk.m()));
    for (i, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
        for (x, v) in row.iter_mut().zip(sketch::decode(q, &sk.row(i))?) {
            *x = v;
        }
    }
    Ok(rows)
}

/// Exact Gaussian gram of unit-normalized rows.
pub fn gram_exact(data: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let mut g = data.dot(&data.t());
    mirror_upper(&mut g);
    for ((i, j), x) in g.indexed_iter_mut() {
        *x = if i == j { 1.0 } else { (-gamma * gamma * (1.0 - *x)).exp() };
    }
    g
}
