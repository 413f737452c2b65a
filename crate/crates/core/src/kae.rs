//! Scale-invariant kernel approximation errors.
//!
//! An estimated gram `K_hat` is compared with the exact gram `K` after the best
//! positive rescaling, so a constant multiplicative bias costs nothing. Three
//! numbers are reported: the Frobenius and spectral errors at their optimal
//! scales, and the spectral sandwich slacks `(1 - d1) K <= beta K_hat <= (1 + d2) K`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, cholesky, sym_eigenvalues, sym_spectral_norm, whiten, SYMMETRY_TOL};

/// Default relative width at which the spectral scale search stops.
pub const DEFAULT_BETA_TOL: f64 = 1e-6;
/// Ridge added to `K` is this fraction of its mean diagonal.
pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-8;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// An optimal scale and the error it attains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta: f64,
    pub error: f64,
    /// The optimum sits at the `beta -> 0+` boundary; `error` is then `||K||`.
    pub degenerate: bool,
}

/// Sandwich slacks and the scales that attain them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaFit {
    pub delta1: f64,
    pub delta2: f64,
    pub beta_delta1: f64,
    pub beta_delta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KaeReport {
    pub n: usize,
    pub beta_f_star: f64,
    pub beta_2_star: f64,
    pub err_f_star: f64,
    pub err_2_star: f64,
    pub delta1_star: f64,
    pub delta2_star: f64,
    pub epsilon: f64,
    pub degenerate: bool,
}

fn check_pair(k_hat: &ArrayView2<f64>, k: &ArrayView2<f64>) -> Result<()> {
    if k_hat.dim() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.nrows(), got: k_hat.nrows() });
    }
    if k.nrows() != k.ncols() {
        return Err(Error::DimensionMismatch { expected: k.nrows(), got: k.ncols() });
    }
    for m in [k_hat, k] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("gram has non-finite entries".into()));
        }
        let asym = asymmetry(m);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
    }
    if k_hat.iter().all(|&v| v == 0.0) {
        return Err(Error::Input("estimated gram is zero".into()));
    }
    Ok(())
}

fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `argmin_{beta > 0} ||beta K_hat - K||_F = <K_hat, K> / ||K_hat||^2`.
pub fn beta_f_star(k_hat: ArrayView2<f64>, k: ArrayView2<f64>) -> Result<BetaFit> {
    check_pair(&k_hat, &k)?;
    let inner: f64 = k_hat.iter().zip(k.iter()).map(|(a, b)| a * b).sum();
    let norm2: f64 = k_hat.iter().map(|v| v * v).sum();
    if inner <= 0.0 {
        return Ok(BetaFit { beta: 0.0, error: frobenius(&k), degenerate: true });
    }
    let beta = inner / norm2;
    let diff = &k_hat * beta - &k;
    Ok(BetaFit { beta, error: frobenius(&diff.view()), degenerate: false })
}

/// `||beta K_hat - K||_2`.
pub fn spectral_error(k_hat: ArrayView2<f64>, k: ArrayView2<f64>, beta: f64) -> Result<f64> {
    let diff: Array2<f64> = &k_hat * beta - &k;
    sym_spectral_norm(diff.view())
}

/// `argmin_{beta > 0} ||beta K_hat - K||_2` by golden-section search on
/// `[0, 10 beta_F]`; the objective is convex in `beta`.
pub fn beta_2_star(k_hat: ArrayView2<f64>, k: ArrayView2<f64>, tol: f64) -> Result<BetaFit> {
    let f_fit = beta_f_star(k_hat, k)?;
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance {tol} must be positive")));
    }
    let hi = if f_fit.degenerate {
        10.0 * sym_spectral_norm(k)? / sym_spectral_norm(k_hat)?
    } else {
        10.0 * f_fit.beta
    };
    let f = |beta: f64| spectral_error(k_hat, k, beta);
    let (mut a, mut b) = (0.0, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > tol * b {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2)?;
        }
    }
    let (beta, error) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let at_zero = sym_spectral_norm(k)?;
    if at_zero <= error {
        return Ok(BetaFit { beta: 0.0, error: at_zero, degenerate: true });
    }
    Ok(BetaFit { beta, error, degenerate: false })
}

/// `1e-8 * trace(K) / n`.
pub fn default_epsilon(k: ArrayView2<f64>) -> f64 {
    let n = k.nrows().max(1);
    DEFAULT_EPSILON_FACTOR * k.diag().sum() / n as f64
}

/// Smallest sandwich slacks over the candidate scales, against `K + eps I`.
pub fn delta_star(k_hat: ArrayView2<f64>, k: ArrayView2<f64>, betas: &[f64], epsilon: f64) -> Result<DeltaFit> {
    check_pair(&k_hat, &k)?;
    if betas.is_empty() || betas.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::Input("need at least one non-negative scale".into()));
    }
    let n = k.nrows();
    let mut reg = k.to_owned();
    for i in 0..n {
        reg[[i, i]] += epsilon;
    }
    let l = cholesky(reg.view())?;
    // generalised eigenvalues of (K_hat, K + eps I); scaling by beta scales them
    let mu = sym_eigenvalues(whiten(&l, &k_hat.to_owned()).view())?;
    let (lo, hi) = (mu[0], mu[n - 1]);
    let mut fit = DeltaFit { delta1: f64::INFINITY, delta2: f64::INFINITY, beta_delta1: 0.0, beta_delta2: 0.0 };
    for &beta in betas {
        let d1 = (1.0 - beta * lo).max(0.0);
        let d2 = (beta * hi - 1.0).max(0.0);
        if d1 < fit.delta1 {
            fit.delta1 = d1;
            fit.beta_delta1 = beta;
        }
        if d2 < fit.delta2 {
            fit.delta2 = d2;
            fit.beta_delta2 = beta;
        }
    }
    Ok(fit)
}

/// All metrics with the default spectral tolerance and ridge (when `epsilon` is `None`).
pub fn kae_report(k_hat: ArrayView2<f64>, k: ArrayView2<f64>, epsilon: Option<f64>) -> Result<KaeReport> {
    let f = beta_f_star(k_hat, k)?;
    let s = beta_2_star(k_hat, k, DEFAULT_BETA_TOL)?;
    let epsilon = epsilon.unwrap_or_else(|| default_epsilon(k));
    let d = delta_star(k_hat, k, &[s.beta, f.beta], epsilon)?;
    Ok(KaeReport {
        n: k.nrows(),
        beta_f_star: f.beta,
        beta_2_star: s.beta,
        err_f_star: f.error,
        err_2_star: s.error,
        delta1_star: d.delta1,
        delta2_star: d.delta2,
        epsilon,
        degenerate: f.degenerate || s.degenerate,
    })
}
