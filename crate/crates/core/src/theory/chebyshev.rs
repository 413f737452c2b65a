//! Cosine-series representation of functions of a raw feature.
//!
//! A function `g` on `[-1, 1]` is stored through `g(cos s) = sum_k c_k cos(k s)`.
//! Because `E[cos(k s_x) cos(l s_y)]` vanishes for `k != l`, pair expectations
//! reduce to a single weighted sum of coefficient products.

use std::f64::consts::PI;

use crate::arcsine::{cell_angles, cos_power_cheb_integral};
use crate::densities::JointLawParams;

/// A polynomial in `z` restricted to `(lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    /// Coefficients of `1, z, z^2, ...`.
    pub poly: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineSeries {
    coef: Vec<f64>,
}

impl CosineSeries {
    /// Coefficients `c_0..=c_terms` of a piecewise polynomial.
    pub fn piecewise(pieces: &[Piece], terms: usize) -> Self {
        let coef = (0..=terms)
            .map(|k| {
                let scale = if k == 0 { 1.0 / PI } else { 2.0 / PI };
                let total: f64 = pieces
                    .iter()
                    .map(|piece| {
                        let (a, b) = cell_angles(piece.lo, piece.hi);
                        piece
                            .poly
                            .iter()
                            .enumerate()
                            .map(|(p, &c)| if c == 0.0 { 0.0 } else { c * cos_power_cheb_integral(p as u32, k as u32, a, b) })
                            .sum::<f64>()
                    })
                    .sum();
                scale * total
            })
            .collect();
        Self { coef }
    }

    /// Exact coefficients of `z^p`.
    pub fn power(p: u32) -> Self {
        Self::piecewise(&[Piece { lo: -1.0, hi: 1.0, poly: monomial(p) }], p as usize)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// `E[g(z_x) h(z_y)]` under the joint law, over the shared terms.
    pub fn cross_expectation(&self, other: &Self, params: &JointLawParams) -> f64 {
        let decay = params.gamma * params.gamma * (1.0 - params.rho);
        self.coef
            .iter()
            .zip(&other.coef)
            .enumerate()
            .map(|(k, (a, b))| if k == 0 { a * b } else { 0.5 * a * b * (-((k * k) as f64) * decay).exp() })
            .sum()
    }
}

fn monomial(p: u32) -> Vec<f64> {
    let mut poly = vec![0.0; p as usize + 1];
    poly[p as usize] = 1.0;
    poly
}

/// Number of terms after which `exp(-k^2 gamma^2 (1 - rho))` drops below `tol`,
/// capped at `cap`.
pub fn terms_for(params: &JointLawParams, tol: f64, cap: usize) -> usize {
    let decay = params.gamma * params.gamma * (1.0 - params.rho);
    if decay <= 0.0 {
        return cap;
    }
    let k = ((1.0 / tol).ln() / decay).sqrt().ceil();
    if k.is_finite() { (k as usize + 1).min(cap) } else { cap }
}
