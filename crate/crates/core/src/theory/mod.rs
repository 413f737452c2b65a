//! Moments, means and variances of quantized kernel estimators.
//!
//! Every quantizer is described cell by cell through its conditional powers
//! `E[Q(z)^s | z]`. For a Lloyd-Max codebook these are constants; under stochastic
//! rounding between grid points `a < b` they are linear in `z`; the identity is
//! handled through exact cosine series. Pair moments `zeta[s][t]` then reduce to
//! the cell-pair integrals `E[z_x^p z_y^q; cell i, cell j]` with `p, q <= 1`,
//! computed by quadrature in angle space.
//!
//! The two features of a pair are rounded independently, which is how sketches of
//! two different rows behave.

pub mod chebyshev;
pub mod montecarlo;

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arcsine::{cell_angles, segment_moment};
use crate::densities::{angle_rect_expectation, JointLawParams};
use crate::error::{Error, Result};
use crate::quantizer::{Quantizer, QuantizerKind};
use chebyshev::{CosineSeries, Piece};

/// Highest power kept in `theta` and `zeta`.
pub const MAX_POWER: usize = 4;
/// Default odd truncation index of the mean series.
pub const DEFAULT_TRUNCATION: usize = 99;
/// Highest index kept in the stored `psi` matrix.
pub const PSI_ORDER: usize = 7;
const CELL_TOL: f64 = 1e-11;

/// Per-cell description `E[Q^s | z] = c0 + c1 z` on `(lo, hi]`.
struct CellLaw {
    cells: Vec<(f64, f64)>,
    /// Levels of an LM codebook, or the grid points bounding each interval.
    ends: Vec<(f64, f64)>,
    linear: bool,
}

impl CellLaw {
    fn new(q: &Quantizer) -> Option<Self> {
        match q.kind() {
            QuantizerKind::Identity => None,
            QuantizerKind::StocqGrid => {
                let cells: Vec<(f64, f64)> = q.borders().windows(2).map(|w| (w[0], w[1])).collect();
                Some(Self { ends: cells.clone(), cells, linear: true })
            }
            _ => Some(Self {
                cells: q.borders().windows(2).map(|w| (w[0], w[1])).collect(),
                ends: q.levels().iter().map(|&l| (l, l)).collect(),
                linear: false,
            }),
        }
    }

    fn power(&self, i: usize, s: usize) -> (f64, f64) {
        let (a, b) = self.ends[i];
        if !self.linear {
            return (a.powi(s as i32), 0.0);
        }
        let (pa, pb) = (a.powi(s as i32), b.powi(s as i32));
        ((pa * b - pb * a) / (b - a), (pb - pa) / (b - a))
    }

    fn pieces(&self, s: usize) -> Vec<Piece> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let (c0, c1) = self.power(i, s);
                Piece { lo, hi, poly: vec![c0, c1] }
            })
            .collect()
    }
}

/// Cell-pair integrals `E[z_x^p z_y^q; i, j]`. `m10` and `m11` are filled only
/// for grids.
struct CellMoments {
    m00: Array2<f64>,
    m10: Array2<f64>,
    m11: Array2<f64>,
}

impl CellMoments {
    fn compute(law: &CellLaw, params: &JointLawParams, with_kappa: bool) -> Self {
        let n = law.cells.len();
        let angles: Vec<(f64, f64)> = law.cells.iter().map(|&(lo, hi)| cell_angles(lo, hi)).collect();
        let mirror = |i: usize| n - 1 - i;
        let rect = |i: usize, j: usize, px: bool, py: bool| {
            let w = |p: bool| move |a: f64| if p { a.cos() } else { 1.0 };
            angle_rect_expectation(params, angles[i], angles[j], w(px), w(py), CELL_TOL)
        };

        // m00 and m11 are symmetric and mirror invariant; m10 is only mirror odd.
        let sym: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .filter(|&(i, j)| (i, j) <= (mirror(j), mirror(i)))
            .collect();
        let linear = law.linear;
        let want11 = linear || with_kappa;
        let sym_vals: Vec<(f64, f64)> = sym
            .par_iter()
            .map(|&(i, j)| (rect(i, j, false, false), if want11 { rect(i, j, true, true) } else { 0.0 }))
            .collect();
        let mut m00 = Array2::zeros((n, n));
        let mut m11 = Array2::zeros((n, n));
        for (&(i, j), &(v00, v11)) in sym.iter().zip(&sym_vals) {
            for (a, b) in [(i, j), (j, i), (mirror(i), mirror(j)), (mirror(j), mirror(i))] {
                m00[[a, b]] = v00;
                m11[[a, b]] = v11;
            }
        }

        let mut m10 = Array2::zeros((n, n));
        if linear {
            let odd: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| (i, j) <= (mirror(i), mirror(j)))
                .collect();
            let vals: Vec<f64> = odd.par_iter().map(|&(i, j)| rect(i, j, true, false)).collect();
            for (&(i, j), &v) in odd.iter().zip(&vals) {
                if (i, j) == (mirror(i), mirror(j)) {
                    m10[[i, j]] = 0.0;
                } else {
                    m10[[i, j]] = v;
                    m10[[mirror(i), mirror(j)]] = -v;
                }
            }
        }
        Self { m00, m10, m11 }
    }

    fn zeta(&self, law: &CellLaw, s: usize, t: usize) -> f64 {
        let n = law.cells.len();
        let mut total = 0.0;
        for i in 0..n {
            let (a0, a1) = law.power(i, s);
            for j in 0..n {
                let (b0, b1) = law.power(j, t);
                total += a0 * b0 * self.m00[[i, j]];
                if law.linear {
                    total += a1 * b0 * self.m10[[i, j]] + a0 * b1 * self.m10[[j, i]] + a1 * b1 * self.m11[[i, j]];
                }
            }
        }
        total
    }
}

fn zeta_grid(q: &Quantizer, params: &JointLawParams) -> [[f64; MAX_POWER + 1]; MAX_POWER + 1] {
    let mut out = [[0.0; MAX_POWER + 1]; MAX_POWER + 1];
    match CellLaw::new(q) {
        None => {
            let series: Vec<CosineSeries> = (0..=MAX_POWER).map(|p| CosineSeries::power(p as u32)).collect();
            for s in 0..=MAX_POWER {
                for t in 0..=MAX_POWER {
                    out[s][t] = series[s].cross_expectation(&series[t], params);
                }
            }
        }
        Some(law) => {
            let mom = CellMoments::compute(&law, params, false);
            for s in 0..=MAX_POWER {
                for t in s..=MAX_POWER {
                    let v = mom.zeta(&law, s, t);
                    out[s][t] = v;
                    out[t][s] = v;
                }
            }
        }
    }
    out
}

/// `theta_{s,t} = E[z^s Q(z)^t]` under the arcsine law.
pub fn theta(s: usize, t: usize, q: &Quantizer) -> f64 {
    match CellLaw::new(q) {
        None => segment_moment((s + t) as u32, -1.0, 1.0),
        Some(law) => law
            .cells
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let (c0, c1) = law.power(i, t);
                let mut v = c0 * segment_moment(s as u32, lo, hi);
                if c1 != 0.0 {
                    v += c1 * segment_moment(s as u32 + 1, lo, hi);
                }
                v
            })
            .sum(),
    }
}

/// Cosine series of the conditional mean `E[Q(z) | z]`.
fn mean_series(q: &Quantizer, terms: usize) -> CosineSeries {
    match CellLaw::new(q) {
        None => CosineSeries::piecewise(&[Piece { lo: -1.0, hi: 1.0, poly: vec![0.0, 1.0] }], terms),
        Some(law) => CosineSeries::piecewise(&law.pieces(1), terms),
    }
}

fn alphas(q: &Quantizer, terms: usize) -> Vec<f64> {
    let mut alpha = mean_series(q, terms).coefficients().to_vec();
    alpha[0] *= 2.0;
    alpha
}

/// Chebyshev coefficient `alpha_i` of `E[Q(z) | z]`, which is `Q` itself for a
/// Lloyd-Max codebook.
pub fn chebyshev_alpha(i: usize, q: &Quantizer) -> f64 {
    alphas(q, i)[i]
}

/// `psi_{i,j} = E[T_i(z_x) T_j(z_y)]`.
pub fn psi(i: usize, j: usize, params: &JointLawParams) -> f64 {
    match (i, j) {
        (0, 0) => 1.0,
        _ if i != j => 0.0,
        _ => 0.5 * (-((i * i) as f64) * params.gamma * params.gamma * (1.0 - params.rho)).exp(),
    }
}

/// `zeta_{s,t} = E[Q(z_x)^s Q(z_y)^t]`.
pub fn zeta(s: usize, t: usize, q: &Quantizer, params: &JointLawParams) -> f64 {
    match CellLaw::new(q) {
        None => CosineSeries::power(s as u32).cross_expectation(&CosineSeries::power(t as u32), params),
        Some(law) => CellMoments::compute(&law, params, false).zeta(&law, s, t),
    }
}

/// All moments of one `(quantizer, rho, gamma)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub quantizer_id: String,
    pub rho: f64,
    pub gamma: f64,
    /// `theta[s][t] = E[z^s Q(z)^t]`.
    pub theta: Vec<Vec<f64>>,
    /// `zeta[s][t] = E[Q(z_x)^s Q(z_y)^t]`.
    pub zeta: Vec<Vec<f64>>,
    /// `alpha[i]` for `i` up to the default truncation.
    pub alpha: Vec<f64>,
    /// `psi[i][j] = E[T_i(z_x) T_j(z_y)]` for `i, j <= PSI_ORDER`.
    pub psi: Vec<Vec<f64>>,
    /// `kappa[i][j] = E[z_x z_y; i, j]` over the quantizer cells.
    pub kappa: Vec<Vec<f64>>,
    /// `p[i][j] = P(z_x in i, z_y in j)`.
    pub p: Vec<Vec<f64>>,
}

impl MomentTable {
    pub fn compute(q: &Quantizer, params: &JointLawParams) -> Self {
        let theta = (0..=MAX_POWER).map(|s| (0..=MAX_POWER).map(|t| theta(s, t, q)).collect()).collect();
        let psi = (0..=PSI_ORDER).map(|i| (0..=PSI_ORDER).map(|j| psi(i, j, params)).collect()).collect();
        let (zeta, kappa, p) = match CellLaw::new(q) {
            None => (zeta_grid(q, params).iter().map(|r| r.to_vec()).collect(), Vec::new(), Vec::new()),
            Some(law) => {
                let mom = CellMoments::compute(&law, params, true);
                let zeta = (0..=MAX_POWER).map(|s| (0..=MAX_POWER).map(|t| mom.zeta(&law, s, t)).collect()).collect();
                (zeta, to_rows(&mom.m11), to_rows(&mom.m00))
            }
        };
        Self {
            quantizer_id: q.id_hex(),
            rho: params.rho,
            gamma: params.gamma,
            theta,
            zeta,
            alpha: alphas(q, DEFAULT_TRUNCATION),
            psi,
            kappa,
            p,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("moment table serialises")
    }
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Variance of the stochastic-rounding estimator for a single feature (divide by
/// `m` for `m` features).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StocqVariance {
    /// `4 zeta_{2,2} - K^2`, the exact per-feature variance.
    pub variance: f64,
    /// `4 sum_{i,j} [S_i S_j kappa_ij + P_i P_j p_ij] - K^2`, which leaves out the
    /// terms `-S_i P_j E[z_x; i, j] - P_i S_j E[z_y; i, j]`. The two agree for a
    /// single cell, where `S = 0`.
    pub without_cross_terms: f64,
    /// Per-feature variance of the unquantized estimator.
    pub full_precision: f64,
}

/// Per-feature variance of stochastic rounding on a grid, with the unquantized
/// baseline.
pub fn stocq_variance(q: &Quantizer, params: &JointLawParams) -> Result<StocqVariance> {
    if q.kind() != QuantizerKind::StocqGrid {
        return Err(Error::Input(format!("stochastic rounding needs a grid, got {}", q.kind())));
    }
    let law = CellLaw::new(q).expect("grid has cells");
    let mom = CellMoments::compute(&law, params, true);
    let k = params.kernel();
    let n = law.cells.len();
    let mut partial = 0.0;
    for i in 0..n {
        let (a, b) = law.ends[i];
        for j in 0..n {
            let (c, d) = law.ends[j];
            partial += (a + b) * (c + d) * mom.m11[[i, j]] + a * b * c * d * mom.m00[[i, j]];
        }
    }
    Ok(StocqVariance {
        variance: 4.0 * mom.zeta(&law, 2, 2) - k * k,
        without_cross_terms: 4.0 * partial - k * k,
        full_precision: full_precision_variance(params),
    })
}

/// Per-feature variance `4 E[z_x^2 z_y^2] - K^2` of the unquantized estimator.
pub fn full_precision_variance(params: &JointLawParams) -> f64 {
    let z = zeta(2, 2, &Quantizer::identity(), params);
    let k = params.kernel();
    4.0 * z - k * k
}

/// Value of a truncated series with a bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub remainder_bound: f64,
    /// Highest index summed; 0 when the diagonal endpoint was used.
    pub truncation: usize,
}

/// Mean of the simple estimator `(2/m) sum Q(z_x) Q(z_y)` through the Chebyshev
/// series `sum_i alpha_i^2 exp(-i^2 gamma^2 (1 - rho))`.
///
/// The leading term is `4 theta_{1,1}^2 K` for a Lloyd-Max codebook. On the
/// degenerate diagonal the endpoint `2 E[E[Q|z]^2]` (that is `2 theta_{1,1}`)
/// is returned.
pub fn lm_mean(q: &Quantizer, params: &JointLawParams, truncation: usize) -> Result<SeriesValue> {
    if truncation < 3 || truncation % 2 == 0 {
        return Err(Error::Input(format!("truncation {truncation} must be odd and at least 3")));
    }
    let energy = 2.0 * conditional_mean_square(q);
    if params.is_degenerate() {
        return Ok(SeriesValue { value: energy, remainder_bound: 0.0, truncation: 0 });
    }
    let alpha = alphas(q, truncation);
    let decay = params.gamma * params.gamma * (1.0 - params.rho);
    let mut value = 0.5 * alpha[0] * alpha[0];
    let mut captured = 0.5 * alpha[0] * alpha[0];
    for (i, a) in alpha.iter().enumerate().skip(1) {
        value += a * a * (-((i * i) as f64) * decay).exp();
        captured += a * a;
    }
    let next = (truncation + 1) as f64;
    let remainder_bound = (energy - captured).max(0.0) * (-next * next * decay).exp();
    Ok(SeriesValue { value, remainder_bound, truncation })
}

/// `E[E[Q(z)|z]^2]`; equals `theta_{0,2}` for a deterministic codebook.
fn conditional_mean_square(q: &Quantizer) -> f64 {
    match CellLaw::new(q) {
        None => 0.5,
        Some(law) => law
            .cells
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let (c0, c1) = law.power(i, 1);
                c0 * c0 * segment_moment(0, lo, hi)
                    + 2.0 * c0 * c1 * segment_moment(1, lo, hi)
                    + c1 * c1 * segment_moment(2, lo, hi)
            })
            .sum(),
    }
}

/// Leading-order per-feature mean and variance of both estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMoments {
    pub kernel: f64,
    /// `2 zeta_{1,1}`.
    pub simple_mean: f64,
    /// `4 (zeta_{2,2} - zeta_{1,1}^2)`.
    pub simple_variance: f64,
    /// `zeta_{1,1} / zeta_{2,0}`.
    pub normalized_mean: f64,
    /// `V_n` in closed form.
    pub normalized_variance: f64,
    /// `V_n` assembled as the delta-method product `g' Sigma g`.
    pub normalized_variance_gradient: f64,
}

impl EstimatorMoments {
    pub fn from_zeta(z: &[[f64; MAX_POWER + 1]; MAX_POWER + 1], kernel: f64) -> Self {
        let (z11, z20, z22, z31, z40) = (z[1][1], z[2][0], z[2][2], z[3][1], z[4][0]);
        let normalized_variance =
            z22 / z20.powi(2) - 2.0 * z11 * z31 / z20.powi(3) + z11 * z11 * (z40 + z22) / (2.0 * z20.powi(4));

        // Per-feature vector (Q_x Q_y, Q_x^2, Q_y^2) and g(a, b, c) = a / sqrt(b c).
        let grad = [1.0 / z20, -z11 / (2.0 * z20 * z20), -z11 / (2.0 * z20 * z20)];
        let c_ab = z[3][1] - z11 * z20;
        let c_ac = z[1][3] - z11 * z20;
        let cov = [
            [z22 - z11 * z11, c_ab, c_ac],
            [c_ab, z40 - z20 * z20, z22 - z20 * z20],
            [c_ac, z22 - z20 * z20, z[0][4] - z20 * z20],
        ];
        let normalized_variance_gradient =
            (0..3).map(|r| (0..3).map(|c| grad[r] * cov[r][c] * grad[c]).sum::<f64>()).sum();

        Self {
            kernel,
            simple_mean: 2.0 * z11,
            simple_variance: 4.0 * (z22 - z11 * z11),
            normalized_mean: z11 / z20,
            normalized_variance,
            normalized_variance_gradient,
        }
    }

    pub fn compute(q: &Quantizer, params: &JointLawParams) -> Self {
        Self::from_zeta(&zeta_grid(q, params), params.kernel())
    }
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Input("m must be at least 1".into()));
    }
    Ok(())
}

/// `Var[K_Q] = (4 / m) (zeta_{2,2} - zeta_{1,1}^2)`.
pub fn lm_variance(q: &Quantizer, params: &JointLawParams, m: usize) -> Result<f64> {
    check_m(m)?;
    Ok(EstimatorMoments::compute(q, params).simple_variance / m as f64)
}

/// Leading-order `(mean, variance)` of the normalized estimator with `m` features.
pub fn normalized_mean_variance(q: &Quantizer, params: &JointLawParams, m: usize) -> Result<(f64, f64)> {
    check_m(m)?;
    let em = EstimatorMoments::compute(q, params);
    Ok((em.normalized_mean, em.normalized_variance / m as f64))
}

/// Debiased variance `V K^2 / E^2`.
pub fn db_variance(mean: f64, variance: f64, kernel: f64) -> Result<f64> {
    if !(mean > 0.0) {
        return Err(Error::Domain(format!("estimator mean {mean} is not positive")));
    }
    Ok(variance * kernel * kernel / (mean * mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbRow {
    pub rho: f64,
    pub simple: f64,
    pub normalized: f64,
    /// `normalized / simple`; 1 where both vanish.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DbDominance {
    /// `gamma > pi / sqrt(2)`.
    NotApplicable { gamma: f64 },
    Checked { rows: Vec<DbRow>, max_ratio: f64, passed: bool },
}

/// Compare leading-order debiased variances of the normalized and simple
/// estimators on a grid in `[0, 1]`.
pub fn db_variance_dominance_check(q: &Quantizer, gamma: f64, rhos: &[f64]) -> Result<DbDominance> {
    if gamma > PI * FRAC_1_SQRT_2 {
        return Ok(DbDominance::NotApplicable { gamma });
    }
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("rho = {rho} outside [0, 1]")));
        }
        let em = EstimatorMoments::compute(q, &JointLawParams::new(rho, gamma)?);
        let simple = db_variance(em.simple_mean, em.simple_variance, em.kernel)?;
        let normalized = db_variance(em.normalized_mean, em.normalized_variance, em.kernel)?;
        let ratio = if simple.abs() < 1e-14 && normalized.abs() < 1e-14 { 1.0 } else { normalized / simple };
        rows.push(DbRow { rho, simple, normalized, ratio });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(DbDominance::Checked { passed: max_ratio <= 1.0 + 1e-9, rows, max_ratio })
}

/// Smallest `rho` with `sqrt(2 (1 - rho)) gamma <= pi`.
pub fn monotonicity_domain_start(gamma: f64) -> f64 {
    (1.0 - PI * PI / (2.0 * gamma * gamma)).max(-1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub gamma: f64,
    pub domain_start: f64,
    /// `(rho, zeta_{1,1})` on the admissible part of the grid.
    pub rows: Vec<(f64, f64)>,
    /// Grid points left out because they fall outside the domain.
    pub skipped: usize,
    pub strictly_increasing: bool,
}

/// Evaluate `zeta_{1,1}(rho)` along an increasing grid restricted to the domain
/// where monotonicity is guaranteed.
pub fn quantized_mean_monotonicity(q: &Quantizer, gamma: f64, rhos: &[f64]) -> Result<MonotonicityReport> {
    if rhos.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("rho grid must be strictly increasing".into()));
    }
    let start = monotonicity_domain_start(gamma);
    let kept: Vec<f64> = rhos.iter().copied().filter(|&r| r >= start).collect();
    let rows = kept
        .iter()
        .map(|&rho| Ok((rho, zeta(1, 1, q, &JointLawParams::new(rho, gamma)?))))
        .collect::<Result<Vec<_>>>()?;
    let strictly_increasing = rows.windows(2).all(|w| w[1].1 > w[0].1);
    Ok(MonotonicityReport { gamma, domain_start: start, skipped: rhos.len() - kept.len(), rows, strictly_increasing })
}

/// One point of a sweep comparing a formula against simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub theoretical: f64,
    pub empirical: f64,
    pub stderr: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("rho,theoretical,empirical,stderr\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.rho, r.theoretical, r.empirical, r.stderr);
    }
    out
}
