//! Probability laws of raw random Fourier features `z = cos(gamma * X + tau)`.
//!
//! The marginal of `z` is the arcsine law on `[-1, 1]` for every `gamma`, and `z^2`
//! follows the arcsine law on `[0, 1]`. The joint law of a feature pair built from
//! correlated projections is a wrapped-Gaussian series in angle space; after the
//! substitution `z = cos(a)` the `1/sqrt(1 - z^2)` factors cancel and the angle
//! density on `[0, pi]^2` is smooth, which is where every quadrature in the crate
//! is carried out.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Below this width the joint law is treated as concentrated on the diagonal.
pub const DEGENERATE_SIGMA: f64 = 1e-6;

/// Parameters of the joint law of a feature pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLawParams {
    pub rho: f64,
    pub gamma: f64,
    pub series_tol: f64,
}

impl JointLawParams {
    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        Self::with_tolerance(rho, gamma, 1e-16)
    }

    pub fn with_tolerance(rho: f64, gamma: f64, series_tol: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("rho = {rho} outside [-1, 1]")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma = {gamma} must be positive")));
        }
        if !(series_tol > 0.0 && series_tol < 1.0) {
            return Err(Error::Domain(format!("series_tol = {series_tol} must lie in (0, 1)")));
        }
        Ok(Self { rho, gamma, series_tol })
    }

    /// Width of the wrapped Gaussian, `sqrt(2 (1 - rho)) * gamma`.
    pub fn sigma(&self) -> f64 {
        (2.0 * (1.0 - self.rho)).max(0.0).sqrt() * self.gamma
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma() < DEGENERATE_SIGMA
    }

    /// The Gaussian kernel value `exp(-gamma^2 (1 - rho))`.
    pub fn kernel(&self) -> f64 {
        (-self.gamma * self.gamma * (1.0 - self.rho)).exp()
    }

    /// Half-width (in units of the argument) beyond which series terms are dropped.
    fn window(&self) -> f64 {
        let sigma = self.sigma();
        (2.0 * (1.0 / self.series_tol).ln()).sqrt().max(8.0) * sigma
    }
}

fn check_closed(z: f64, lo: f64, hi: f64) -> Result<()> {
    if z.is_nan() || z < lo || z > hi {
        return Err(Error::Domain(format!("{z} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Arcsine density `1 / (pi sqrt(1 - z^2))` of a raw feature.
pub fn marginal_pdf(z: f64) -> Result<f64> {
    check_closed(z, -1.0, 1.0)?;
    if z.abs() == 1.0 {
        return Err(Error::Unbounded(z));
    }
    Ok(1.0 / (PI * (1.0 - z * z).sqrt()))
}

/// Density `1 / (pi sqrt(z - z^2))` of a squared raw feature.
pub fn marginal_squared_pdf(z: f64) -> Result<f64> {
    check_closed(z, 0.0, 1.0)?;
    if z == 0.0 || z == 1.0 {
        return Err(Error::Unbounded(z));
    }
    Ok(1.0 / (PI * (z - z * z).sqrt()))
}

/// Arcsine CDF `1/2 + asin(z)/pi`.
pub fn marginal_cdf(z: f64) -> Result<f64> {
    check_closed(z, -1.0, 1.0)?;
    Ok(0.5 + z.asin() / PI)
}

/// CDF of the squared feature, `(2/pi) asin(sqrt(z))`.
pub fn marginal_squared_cdf(z: f64) -> Result<f64> {
    check_closed(z, 0.0, 1.0)?;
    Ok(2.0 / PI * z.sqrt().asin())
}

fn gaussian(t: f64, sigma: f64) -> f64 {
    (-0.5 * (t / sigma) * (t / sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Range of `k` whose term `phi(d + 2 k pi)` is inside the truncation window.
fn k_range(d: f64, window: f64) -> std::ops::RangeInclusive<i64> {
    let lo = ((-window - d) / TAU).ceil() as i64;
    let hi = ((window - d) / TAU).floor() as i64;
    lo.min(-3)..=hi.max(3)
}

/// Wrapped-Gaussian series `sum_k phi(ax - ay + 2k pi) + phi(ax + ay + 2k pi)`.
///
/// Dividing by `pi` gives the joint density of the angles `(acos z_x, acos z_y)` on
/// `[0, pi]^2`. Callers must reject degenerate parameters first.
pub fn angle_kernel(ax: f64, ay: f64, params: &JointLawParams) -> f64 {
    let sigma = params.sigma();
    let window = params.window();
    let series = |d: f64| -> f64 { k_range(d, window).map(|k| gaussian(d + TAU * k as f64, sigma)).sum() };
    series(ax - ay) + series(ax + ay)
}

/// Joint density of a raw feature pair at `(z_x, z_y)`.
pub fn joint_pdf(z_x: f64, z_y: f64, params: &JointLawParams) -> Result<f64> {
    check_closed(z_x, -1.0, 1.0)?;
    check_closed(z_y, -1.0, 1.0)?;
    if params.is_degenerate() {
        return Err(Error::Degenerate { sigma: params.sigma() });
    }
    for z in [z_x, z_y] {
        if z.abs() == 1.0 {
            return Err(Error::Unbounded(z));
        }
    }
    let jac = PI * (1.0 - z_x * z_x).sqrt() * (1.0 - z_y * z_y).sqrt();
    Ok(angle_kernel(z_x.acos(), z_y.acos(), params) / jac)
}

/// `int_{y1}^{y2} weight(ay) * kernel(ax, ay) / pi  d ay` for a fixed `ax`.
fn inner_integral<W: Fn(f64) -> f64>(ax: f64, y1: f64, y2: f64, weight: &W, params: &JointLawParams, tol: f64) -> f64 {
    let sigma = params.sigma();
    if sigma >= 0.5 {
        return quad::integrate(|ay| weight(ay) * angle_kernel(ax, ay, params), y1, y2, tol) / PI;
    }
    // Narrow ridge: integrate each Gaussian term over its own window.
    let window = params.window();
    let mut total = 0.0;
    // phi(ax - ay + 2k pi) peaks at ay = ax + 2k pi, phi(ax + ay + 2k pi) at ay = -ax - 2k pi
    for centre0 in [ax, -ax] {
        let lo = ((y1 - window - centre0) / TAU).ceil() as i64;
        let hi = ((y2 + window - centre0) / TAU).floor() as i64;
        for k in lo..=hi {
            let c = centre0 + TAU * k as f64;
            let a = (c - window).max(y1);
            let b = (c + window).min(y2);
            if a >= b {
                continue;
            }
            total += quad::integrate_with_breaks(|ay| weight(ay) * gaussian(ay - c, sigma), a, b, &[c], tol);
        }
    }
    total / PI
}

/// `E[wx(acos z_x) wy(acos z_y); acos z_x in [x1, x2], acos z_y in [y1, y2]]`.
///
/// Angles run over `[0, pi]`; the rectangle is given in angle coordinates. For
/// `rho = 1` (or any degenerate width) the law sits on the diagonal.
pub fn angle_rect_expectation<Wx, Wy>(
    params: &JointLawParams,
    (x1, x2): (f64, f64),
    (y1, y2): (f64, f64),
    wx: Wx,
    wy: Wy,
    tol: f64,
) -> f64
where
    Wx: Fn(f64) -> f64,
    Wy: Fn(f64) -> f64,
{
    if params.is_degenerate() {
        let a = x1.max(y1);
        let b = x2.min(y2);
        if a >= b {
            return 0.0;
        }
        return quad::integrate(|t| wx(t) * wy(t), a, b, tol) / PI;
    }
    let sigma = params.sigma();
    let mut breaks = vec![y1, y2];
    if sigma < 0.5 {
        for y in [y1, y2] {
            for s in [-4.0, 4.0] {
                breaks.push(y + s * sigma);
            }
        }
    }
    let inner_tol = tol * 1e-2;
    quad::integrate_with_breaks(|ax| wx(ax) * inner_integral(ax, y1, y2, &wy, params, inner_tol), x1, x2, &breaks, tol)
}

/// Outcome of a grid check of the dominance `f(z_x, z_y) > f(z_x, -z_y)` on `(0, 1]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DominanceReport {
    /// `sqrt(2 (1 - rho)) gamma > pi`: the condition does not apply.
    NotApplicable { sigma: f64 },
    Checked {
        passed: bool,
        /// Smallest `f(z_x, z_y) - f(z_x, -z_y)` in angle-kernel units.
        worst_margin: f64,
        /// Number of grid points with a non-positive margin.
        failures: usize,
        points: usize,
    },
}

/// Evaluate the dominance inequality on the grid `{1/g, 2/g, ..., 1}^2`.
///
/// The comparison uses the angle-space series, which differs from the density by a
/// positive factor common to both sides, so grid points on `z = 1` are included.
pub fn check_joint_dominance(params: &JointLawParams, grid_size: usize) -> Result<DominanceReport> {
    if grid_size == 0 {
        return Err(Error::Input("grid_size must be positive".into()));
    }
    let sigma = params.sigma();
    if sigma > PI {
        return Ok(DominanceReport::NotApplicable { sigma });
    }
    if params.is_degenerate() {
        return Err(Error::Degenerate { sigma });
    }
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for i in 1..=grid_size {
        let ax = (i as f64 / grid_size as f64).acos();
        for j in 1..=grid_size {
            let ay = (j as f64 / grid_size as f64).acos();
            let margin = angle_kernel(ax, ay, params) - angle_kernel(ax, PI - ay, params);
            worst = worst.min(margin);
            if margin <= 0.0 {
                failures += 1;
            }
        }
    }
    Ok(DominanceReport::Checked { passed: failures == 0, worst_margin: worst, failures, points: grid_size * grid_size })
}

/// Draw one raw feature `cos(gamma X + tau)`.
pub fn sample_rff<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    let x: f64 = StandardNormal.sample(rng);
    let tau = rng.random::<f64>() * TAU;
    (gamma * x + tau).cos()
}

/// Draw the pre-cosine angles `(gamma X + tau, gamma Y + tau)` with `corr(X, Y) = rho`.
pub fn sample_rff_angles<R: Rng + ?Sized>(params: &JointLawParams, rng: &mut R) -> (f64, f64) {
    let x: f64 = StandardNormal.sample(rng);
    let e: f64 = StandardNormal.sample(rng);
    let y = params.rho * x + (1.0 - params.rho * params.rho).max(0.0).sqrt() * e;
    let tau = rng.random::<f64>() * TAU;
    (params.gamma * x + tau, params.gamma * y + tau)
}

/// Draw a raw feature pair `(cos(gamma X + tau), cos(gamma Y + tau))`.
pub fn sample_rff_pair<R: Rng + ?Sized>(params: &JointLawParams, rng: &mut R) -> (f64, f64) {
    let (sx, sy) = sample_rff_angles(params, rng);
    (sx.cos(), sy.cos())
}
