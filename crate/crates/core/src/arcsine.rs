//! Closed-form segment integrals under the arcsine law.
//!
//! With `z = cos(theta)`, `E[g(z); lo < z <= hi] = (1/pi) int g(cos theta) d theta`
//! over `theta in [acos(hi), acos(lo)]`. Powers of cosine reduce to sums of
//! `cos(n theta)` by the binomial expansion, so every polynomial moment and every
//! Chebyshev projection of a piecewise polynomial is a finite sum of sines.

use std::f64::consts::PI;

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `int_a^b cos(n theta) d theta` for integer `n` of either sign.
fn cos_integral(n: i64, a: f64, b: f64) -> f64 {
    if n == 0 {
        b - a
    } else {
        let n = n as f64;
        ((n * b).sin() - (n * a).sin()) / n
    }
}

/// `int_a^b cos(theta)^p cos(k theta) d theta`.
pub fn cos_power_cheb_integral(p: u32, k: u32, a: f64, b: f64) -> f64 {
    let scale = 0.5f64.powi(p as i32);
    (0..=p)
        .map(|r| {
            let freq = p as i64 - 2 * r as i64;
            let c = binomial(p, r);
            0.5 * c * (cos_integral(k as i64 + freq, a, b) + cos_integral(k as i64 - freq, a, b))
        })
        .sum::<f64>()
        * scale
}

/// `int_a^b cos(theta)^p d theta`.
pub fn cos_power_integral(p: u32, a: f64, b: f64) -> f64 {
    cos_power_cheb_integral(p, 0, a, b)
}

/// Angle interval `[acos(hi), acos(lo)]` covering the cell `(lo, hi]`.
pub fn cell_angles(lo: f64, hi: f64) -> (f64, f64) {
    (hi.clamp(-1.0, 1.0).acos(), lo.clamp(-1.0, 1.0).acos())
}

/// `E[z^p; lo < z <= hi]` for `z` arcsine distributed on `[-1, 1]`.
pub fn segment_moment(p: u32, lo: f64, hi: f64) -> f64 {
    let (a, b) = cell_angles(lo, hi);
    cos_power_integral(p, a, b) / PI
}

/// `P(lo < z <= hi)`, the arcsine mass of a cell.
pub fn segment_mass(lo: f64, hi: f64) -> f64 {
    (hi.clamp(-1.0, 1.0).asin() - lo.clamp(-1.0, 1.0).asin()) / PI
}

/// Mass of `(lo, hi]` under the law of `z^2` on `[0, 1]`.
pub fn squared_segment_mass(lo: f64, hi: f64) -> f64 {
    2.0 / PI * (hi.clamp(0.0, 1.0).sqrt().asin() - lo.clamp(0.0, 1.0).sqrt().asin())
}

/// First moment of `(lo, hi]` under the law of `z^2` on `[0, 1]`.
pub fn squared_segment_first_moment(lo: f64, hi: f64) -> f64 {
    let anti = |s: f64| {
        let s = s.clamp(0.0, 1.0);
        (s.sqrt().asin() - (s - s * s).max(0.0).sqrt()) / PI
    };
    anti(hi) - anti(lo)
}
