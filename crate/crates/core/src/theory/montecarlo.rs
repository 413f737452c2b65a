//! Monte-Carlo replications on simulated feature pairs.
//!
//! Replication `r` draws from `substream(seed, MonteCarlo, r, tag)`. For the
//! estimator harness each of the `m` features draws the pair angles first, then
//! for every stochastic-rounding quantizer in list order one uniform for `z_x`
//! and one for `z_y`. All quantizers in one call therefore see the same pairs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{sample_rff_angles, JointLawParams};
use crate::error::{Error, Result};
use crate::quantizer::{Quantizer, QuantizerKind};
use crate::rng::{substream, Purpose};

const ESTIMATOR_TAG: u64 = 1;
const PAIR_TAG: u64 = 2;
const CHUNK: usize = 1 << 16;

/// Sample mean and variance with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub stderr_mean: f64,
    /// Standard error of `variance`, from the fourth central moment.
    pub stderr_variance: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (mut m2, mut m4) = (0.0, 0.0);
        for v in values {
            let d = (v - mean) * (v - mean);
            m2 += d;
            m4 += d * d;
        }
        let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
        let mu2 = m2 / nf;
        let mu4 = m4 / nf;
        Self {
            count: n,
            mean,
            variance,
            stderr_mean: (variance / nf).sqrt(),
            stderr_variance: ((mu4 - mu2 * mu2).max(0.0) / nf).sqrt(),
        }
    }
}

/// Running mean and second central moment, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Self) -> Self {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Self { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `E[f(s_x, s_y)]` over the pre-cosine angles of a feature pair.
pub fn angle_expectation<F>(f: F, params: &JointLawParams, samples: usize, seed: u64) -> McEstimate
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let total = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, Purpose::MonteCarlo, c as u64, PAIR_TAG);
            let mut acc = Running::default();
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                let (sx, sy) = sample_rff_angles(params, &mut rng);
                acc.push(f(sx, sy));
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Running::default(), Running::merge);
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    McEstimate { mean: total.mean, stderr: (var / total.n).sqrt(), samples }
}

/// `E[f(z_x, z_y)]` over raw feature pairs.
pub fn pair_expectation<F>(f: F, params: &JointLawParams, samples: usize, seed: u64) -> McEstimate
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    angle_expectation(|sx, sy| f(sx.cos(), sy.cos()), params, samples, seed)
}

/// `gamma^2 E[g1'(z_x) sin(s_x) g2'(z_y) sin(s_y)]`, the derivative in `rho` of
/// `E[g1(z_x) g2(z_y)]`.
pub fn monotonicity_derivative<G1, G2>(
    g1_prime: G1,
    g2_prime: G2,
    params: &JointLawParams,
    samples: usize,
    seed: u64,
) -> McEstimate
where
    G1: Fn(f64) -> f64 + Sync,
    G2: Fn(f64) -> f64 + Sync,
{
    let g2 = params.gamma * params.gamma;
    let est = angle_expectation(|sx, sy| g1_prime(sx.cos()) * sx.sin() * g2_prime(sy.cos()) * sy.sin(), params, samples, seed);
    McEstimate { mean: g2 * est.mean, stderr: g2 * est.stderr, ..est }
}

/// Replication statistics of one quantizer's simple and normalized estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSample {
    pub kind: QuantizerKind,
    pub bits: u32,
    pub simple: Summary,
    pub normalized: Summary,
}

fn realize<R: Rng + ?Sized>(q: &Quantizer, z: f64, rng: &mut R) -> f64 {
    if q.kind() != QuantizerKind::StocqGrid {
        return q.apply(z);
    }
    let i = q.grid_cell(z);
    let (lo, hi) = (q.borders()[i], q.borders()[i + 1]);
    if rng.random::<f64>() < (z - lo) / (hi - lo) { hi } else { lo }
}

/// Run `reps` replications of `m`-feature estimates for every quantizer on
/// shared feature pairs.
pub fn simulate_estimators(
    quantizers: &[Quantizer],
    params: &JointLawParams,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<EstimatorSample>> {
    if m == 0 || reps < 2 {
        return Err(Error::Input(format!("need m >= 1 and at least 2 replications, got m = {m}, reps = {reps}")));
    }
    let nq = quantizers.len();
    let per_rep: Vec<Vec<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, Purpose::MonteCarlo, r as u64, ESTIMATOR_TAG);
            let mut sums = vec![[0.0f64; 3]; nq];
            for _ in 0..m {
                let (sx, sy) = sample_rff_angles(params, &mut rng);
                let (zx, zy) = (sx.cos(), sy.cos());
                for (q, s) in quantizers.iter().zip(sums.iter_mut()) {
                    let qx = realize(q, zx, &mut rng);
                    let qy = realize(q, zy, &mut rng);
                    s[0] += qx * qy;
                    s[1] += qx * qx;
                    s[2] += qy * qy;
                }
            }
            sums.iter().map(|s| (2.0 * s[0] / m as f64, s[0] / (s[1] * s[2]).sqrt())).collect()
        })
        .collect();
    Ok(quantizers
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let simple: Vec<f64> = per_rep.iter().map(|r| r[k].0).collect();
            let normalized: Vec<f64> = per_rep.iter().map(|r| r[k].1).collect();
            EstimatorSample { kind: q.kind(), bits: q.bits(), simple: Summary::of(&simple), normalized: Summary::of(&normalized) }
        })
        .collect())
}
