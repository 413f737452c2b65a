//! Lloyd-Max codebooks for raw and squared random Fourier features.
//!
//! Both constructions iterate only on the nonnegative half line. For LM-RFF the
//! signal is the arcsine law folded onto `[0, 1]`; for LM²-RFF it is the law of
//! `z^2` on `[0, 1]`, and the fitted codebook is mapped back with a square root.
//! Every Lloyd integral has a closed-form antiderivative.

use crate::arcsine::{self, segment_mass, segment_moment};
use crate::quad;
use crate::quantizer::{Quantizer, QuantizerKind};
use crate::{Error, Result};
use std::f64::consts::PI;

/// How the Lloyd fixed point is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LloydMethod {
    /// Plain alternating centroid and midpoint updates. Converges linearly with a
    /// rate that approaches 1 as the codebook grows.
    Alternating,
    /// Newton iteration on the midpoint equations `t_i = (mu_i + mu_{i+1}) / 2`
    /// with `mu` the exact centroids. Same fixed point, quadratic convergence.
    #[default]
    Newton,
}

/// Stopping rule for the iteration.
#[derive(Debug, Clone, Copy)]
pub struct LloydOptions {
    /// Stop once the summed absolute change of all borders and levels falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub method: LloydMethod,
}

impl Default for LloydOptions {
    fn default() -> Self {
        LloydOptions { tol: 1e-12, max_iter: 10_000, method: LloydMethod::Newton }
    }
}

#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub quantizer: Quantizer,
    pub iterations: usize,
    pub final_change: f64,
}

/// Signal law on the half line `[0, 1]`: density plus closed-form cell mass and first moment.
struct HalfLaw<D, M, G> {
    density: D,
    mass: M,
    moment: G,
}

impl<D: Fn(f64) -> f64, M: Fn(f64, f64) -> f64, G: Fn(f64, f64) -> f64> HalfLaw<D, M, G> {
    fn centroids(&self, borders: &[f64], levels: &mut [f64]) -> f64 {
        let mut change = 0.0;
        for (i, mu) in levels.iter_mut().enumerate() {
            let (a, b) = (borders[i], borders[i + 1]);
            let next = (self.moment)(a, b) / (self.mass)(a, b);
            change += (next - *mu).abs();
            *mu = next;
        }
        change
    }

    fn residual(&self, borders: &[f64], levels: &[f64]) -> Vec<f64> {
        (1..borders.len() - 1).map(|i| borders[i] - 0.5 * (levels[i - 1] + levels[i])).collect()
    }

    /// Newton direction for the interior borders, from the tridiagonal Jacobian
    /// of the midpoint residual.
    fn newton_step(&self, borders: &[f64], levels: &[f64], residual: &[f64]) -> Vec<f64> {
        let n = residual.len();
        // d mu_c / d(left border), d mu_c / d(right border)
        let partials: Vec<(f64, f64)> = levels
            .iter()
            .enumerate()
            .map(|(c, &mu)| {
                let (a, b) = (borders[c], borders[c + 1]);
                let m = (self.mass)(a, b);
                let left = if c == 0 { 0.0 } else { (self.density)(a) * (mu - a) / m };
                let right = if c + 1 == levels.len() { 0.0 } else { (self.density)(b) * (b - mu) / m };
                (left, right)
            })
            .collect();
        let mut diag = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for k in 0..n {
            // residual k concerns border k + 1, between cells k and k + 1
            diag[k] = 1.0 - 0.5 * (partials[k].1 + partials[k + 1].0);
            lower[k] = -0.5 * partials[k].0;
            upper[k] = -0.5 * partials[k + 1].1;
        }
        // Thomas algorithm for J x = -r
        let mut x: Vec<f64> = residual.iter().map(|r| -r).collect();
        for k in 1..n {
            let w = lower[k] / diag[k - 1];
            diag[k] -= w * upper[k - 1];
            x[k] -= w * x[k - 1];
        }
        for k in (0..n).rev() {
            if k + 1 < n {
                x[k] -= upper[k] * x[k + 1];
            }
            x[k] /= diag[k];
        }
        x
    }
}

/// Lloyd iteration on `[0, 1]` with `t_0 = 0` and `t_cells = 1` pinned, starting
/// from uniform borders. Returns positive borders, levels, iteration count and final change.
fn half_line_lloyd<D, M, G>(
    cells: usize,
    law: &HalfLaw<D, M, G>,
    opts: &LloydOptions,
) -> Result<(Vec<f64>, Vec<f64>, usize, f64)>
where
    D: Fn(f64) -> f64,
    M: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    let mut borders: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
    let mut levels = vec![0.0; cells];
    law.centroids(&borders, &mut levels);
    let mut change = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        change = match opts.method {
            LloydMethod::Alternating => {
                let mut moved = 0.0;
                for i in 1..cells {
                    let next = 0.5 * (levels[i - 1] + levels[i]);
                    moved += (next - borders[i]).abs();
                    borders[i] = next;
                }
                moved
            }
            LloydMethod::Newton => {
                let r = law.residual(&borders, &levels);
                let norm = r.iter().map(|x| x.abs()).sum::<f64>();
                let dir = law.newton_step(&borders, &levels, &r);
                let mut scale = 1.0;
                let mut trial = borders.clone();
                let mut trial_levels = levels.clone();
                loop {
                    for (k, d) in dir.iter().enumerate() {
                        trial[k + 1] = borders[k + 1] + scale * d;
                    }
                    let ordered = trial.windows(2).all(|w| w[0] < w[1]);
                    if ordered {
                        law.centroids(&trial, &mut trial_levels);
                        let next = law.residual(&trial, &trial_levels).iter().map(|x| x.abs()).sum::<f64>();
                        if next < norm || scale < 1e-3 {
                            break;
                        }
                    }
                    scale *= 0.5;
                    if scale < 1e-12 {
                        break;
                    }
                }
                let moved: f64 = borders.iter().zip(&trial).map(|(a, b)| (a - b).abs()).sum();
                if trial.windows(2).all(|w| w[0] < w[1]) {
                    borders = trial;
                }
                moved
            }
        };
        change += law.centroids(&borders, &mut levels);
        // the mirrored half moves by the same amount
        change *= 2.0;
        if change < opts.tol {
            return Ok((borders, levels, iter, change));
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, change })
}

fn check_bits(bits: u32) -> Result<usize> {
    if !(1..=8).contains(&bits) {
        return Err(Error::Input(format!("bits must lie in 1..=8, got {bits}")));
    }
    Ok(1usize << (bits - 1))
}

/// Mirror a positive half codebook onto `[-1, 1]`.
///
/// `positive_borders` must run from 0 to 1 and both inputs must be strictly
/// increasing.
pub fn symmetric_expand(positive_borders: &[f64], positive_levels: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let sorted = |xs: &[f64]| xs.windows(2).all(|w| w[0] < w[1]);
    if !sorted(positive_borders) || !sorted(positive_levels) {
        return Err(Error::Input("symmetric_expand needs strictly increasing input".into()));
    }
    if positive_borders.first() != Some(&0.0) || positive_borders.last() != Some(&1.0) {
        return Err(Error::Input("positive borders must start at 0 and end at 1".into()));
    }
    if positive_levels.first().is_some_and(|&l| l <= 0.0) {
        return Err(Error::Input("positive levels must be > 0".into()));
    }
    let mirror = |xs: &[f64], skip_zero: bool| -> Vec<f64> {
        let neg = xs.iter().rev().filter(|&&x| !(skip_zero && x == 0.0)).map(|x| -x);
        neg.chain(xs.iter().copied()).collect()
    };
    Ok((mirror(positive_borders, true), mirror(positive_levels, false)))
}

/// LM-RFF codebook with default options.
pub fn build_lm_rff(bits: u32) -> Result<Quantizer> {
    build_lm_rff_with(bits, &LloydOptions::default()).map(|o| o.quantizer)
}

pub fn build_lm_rff_with(bits: u32, opts: &LloydOptions) -> Result<LloydOutcome> {
    let cells = check_bits(bits)?;
    let law = HalfLaw {
        density: |z: f64| 1.0 / (PI * (1.0 - z * z).sqrt()),
        mass: segment_mass,
        moment: |a, b| segment_moment(1, a, b),
    };
    let (t, mu, iterations, final_change) = half_line_lloyd(cells, &law, opts)?;
    let (borders, levels) = symmetric_expand(&t, &mu)?;
    let quantizer = Quantizer::from_parts(QuantizerKind::LmRff, bits, borders, levels)?;
    Ok(LloydOutcome { quantizer, iterations, final_change })
}

/// LM²-RFF codebook with default options.
pub fn build_lm2_rff(bits: u32) -> Result<Quantizer> {
    build_lm2_rff_with(bits, &LloydOptions::default()).map(|o| o.quantizer)
}

pub fn build_lm2_rff_with(bits: u32, opts: &LloydOptions) -> Result<LloydOutcome> {
    let cells = check_bits(bits)?;
    let law = HalfLaw {
        density: |s: f64| 1.0 / (PI * (s - s * s).sqrt()),
        mass: arcsine::squared_segment_mass,
        moment: arcsine::squared_segment_first_moment,
    };
    let (t, mu, iterations, final_change) = half_line_lloyd(cells, &law, opts)?;
    let root = |xs: Vec<f64>| xs.into_iter().map(f64::sqrt).collect::<Vec<_>>();
    let (borders, levels) = symmetric_expand(&root(t), &root(mu))?;
    let quantizer = Quantizer::from_parts(QuantizerKind::Lm2Rff, bits, borders, levels)?;
    Ok(LloydOutcome { quantizer, iterations, final_change })
}

/// `D_1 = E[(z - Q(z))^2]` under the arcsine law, summed cell by cell in closed form.
/// Grid quantizers are treated as nearest-point rounding; the identity gives 0.
pub fn distortion_d1(q: &Quantizer) -> f64 {
    q.cells()
        .iter()
        .map(|c| {
            let m0 = segment_mass(c.lo, c.hi);
            let m1 = segment_moment(1, c.lo, c.hi);
            let m2 = segment_moment(2, c.lo, c.hi);
            (m2 - 2.0 * c.level * m1 + c.level * c.level * m0).max(0.0)
        })
        .sum()
}

/// `D_2 = E[(z^2 - Q(z)^2)^2]` under the arcsine law, by quadrature in angle space.
pub fn distortion_d2(q: &Quantizer) -> f64 {
    q.cells()
        .iter()
        .map(|c| {
            let (a, b) = arcsine::cell_angles(c.lo, c.hi);
            let l2 = c.level * c.level;
            quad::integrate(
                |t: f64| {
                    let d = t.cos().powi(2) - l2;
                    d * d
                },
                a,
                b,
                1e-13,
            ) / PI
        })
        .sum()
}

/// Expected `D_1` of stochastic rounding on a grid, averaging over both the
/// signal and the rounding: `E[(t_{i+1} - z)(z - t_i)]`.
pub fn stocq_distortion_d1(q: &Quantizer) -> Result<f64> {
    let grid = stocq_points(q)?;
    Ok(grid
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            -segment_moment(2, a, b) + (a + b) * segment_moment(1, a, b) - a * b * segment_mass(a, b)
        })
        .sum())
}

/// Expected `D_2` of stochastic rounding on a grid.
pub fn stocq_distortion_d2(q: &Quantizer) -> Result<f64> {
    let grid = stocq_points(q)?;
    Ok(grid
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let (a, b) = arcsine::cell_angles(lo, hi);
            quad::integrate(
                |t: f64| {
                    let z = t.cos();
                    let p_hi = (z - lo) / (hi - lo);
                    let z2 = z * z;
                    (1.0 - p_hi) * (z2 - lo * lo).powi(2) + p_hi * (z2 - hi * hi).powi(2)
                },
                a,
                b,
                1e-13,
            ) / PI
        })
        .sum())
}

fn stocq_points(q: &Quantizer) -> Result<&[f64]> {
    if q.kind() != QuantizerKind::StocqGrid {
        return Err(Error::Input(format!("stochastic distortion needs a StocQ grid, got {}", q.kind())));
    }
    Ok(q.levels())
}
