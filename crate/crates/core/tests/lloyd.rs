use proptest::prelude::*;
use rffq::arcsine::{segment_mass, segment_moment};
use rffq::lloyd::*;
use rffq::quad;
use rffq::{Quantizer, QuantizerKind};
use std::f64::consts::PI;

// Positive halves computed independently to six decimals.
const LM_HALVES: [(&[f64], &[f64]); 3] = [
    (&[0.0, 0.575636, 1.0], &[0.297195, 0.854077]),
    (&[0.0, 0.286123, 0.563426, 0.81875, 1.0], &[0.144074, 0.428173, 0.69868, 0.93882]),
    (
        &[0.0, 0.141753, 0.28253, 0.421276, 0.556748, 0.687331, 0.810604, 0.921942, 1.0],
        &[0.070996, 0.21251, 0.352551, 0.490001, 0.623495, 0.751166, 0.870041, 0.973843],
    ),
];

const LM2_HALVES: [(&[f64], &[f64]); 3] = [
    (&[0.0, 0.707107, 1.0], &[0.426251, 0.904605]),
    (&[0.0, 0.460632, 0.707107, 0.887591, 1.0], &[0.270114, 0.592792, 0.805356, 0.962828]),
    (
        &[0.0, 0.30104, 0.467212, 0.597443, 0.707107, 0.801911, 0.884145, 0.953611, 1.0],
        &[0.1749, 0.38815, 0.534709, 0.654189, 0.756331, 0.845036, 0.921596, 0.984586],
    ),
];

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= tol, "{g} vs {w} in {got:?}");
    }
}

#[test]
fn codebooks_match_independent_values() {
    for (b, ((t1, m1), (t2, m2))) in (2..=4).zip(LM_HALVES.iter().zip(LM2_HALVES.iter())) {
        let q = build_lm_rff(b).unwrap();
        let (t, mu) = q.positive_half();
        assert_close(t, t1, 1e-6);
        assert_close(mu, m1, 1e-6);
        let q = build_lm2_rff(b).unwrap();
        let (t, mu) = q.positive_half();
        assert_close(t, t2, 1e-6);
        assert_close(mu, m2, 1e-6);
    }
}

#[test]
fn analytic_one_bit_levels() {
    assert!((build_lm_rff(1).unwrap().levels()[1] - 2.0 / PI).abs() < 1e-9);
    assert!((build_lm2_rff(1).unwrap().levels()[1] - 0.5f64.sqrt()).abs() < 1e-9);
}

#[test]
fn codebooks_are_stationary() {
    for b in 1..=8 {
        let q = build_lm_rff(b).unwrap();
        for c in q.cells() {
            let centroid = segment_moment(1, c.lo, c.hi) / segment_mass(c.lo, c.hi);
            assert!((centroid - c.level).abs() < 1e-6, "b={b}");
        }
        for i in 1..q.levels().len() {
            let mid = 0.5 * (q.levels()[i - 1] + q.levels()[i]);
            assert!((q.borders()[i] - mid).abs() < 1e-6, "b={b}");
        }
        // LM2 is stationary in the squared domain
        let q2 = build_lm2_rff(b).unwrap();
        let (t, mu) = q2.positive_half();
        let (s, nu): (Vec<f64>, Vec<f64>) = (t.iter().map(|x| x * x).collect(), mu.iter().map(|x| x * x).collect());
        for i in 0..nu.len() {
            let (lo, hi) = (s[i], s[i + 1]);
            let centroid = rffq::arcsine::squared_segment_first_moment(lo, hi) / rffq::arcsine::squared_segment_mass(lo, hi);
            assert!((centroid - nu[i]).abs() < 1e-6, "b={b}");
            if i > 0 {
                assert!((s[i] - 0.5 * (nu[i - 1] + nu[i])).abs() < 1e-6, "b={b}");
            }
        }
    }
}

#[test]
fn alternating_and_newton_agree() {
    let slow = LloydOptions { method: LloydMethod::Alternating, ..Default::default() };
    for b in 1..=4 {
        let a = build_lm_rff_with(b, &slow).unwrap().quantizer;
        let n = build_lm_rff(b).unwrap();
        assert_close(a.borders(), n.borders(), 1e-10);
        assert_close(a.levels(), n.levels(), 1e-10);
        let a = build_lm2_rff_with(b, &slow).unwrap().quantizer;
        let n = build_lm2_rff(b).unwrap();
        assert_close(a.borders(), n.borders(), 1e-10);
    }
}

#[test]
fn loose_threshold_still_converges_within_cap() {
    let opts = LloydOptions { tol: 1e-5, max_iter: 10_000, method: LloydMethod::Newton };
    for b in 1..=8 {
        assert!(build_lm_rff_with(b, &opts).unwrap().iterations < 100);
        assert!(build_lm2_rff_with(b, &opts).unwrap().iterations < 100);
    }
}

#[test]
fn lm_properties_one_and_two() {
    for b in 1..=6 {
        for q in [build_lm_rff(b).unwrap(), build_lm2_rff(b).unwrap()] {
            let cells = q.cells();
            let mean_q: f64 = cells.iter().map(|c| c.level * segment_mass(c.lo, c.hi)).sum();
            assert!(mean_q.abs() < 1e-12);
        }
        let q = build_lm_rff(b).unwrap();
        let cells = q.cells();
        let qz: f64 = cells.iter().map(|c| c.level * segment_moment(1, c.lo, c.hi)).sum();
        let qq: f64 = cells.iter().map(|c| c.level * c.level * segment_mass(c.lo, c.hi)).sum();
        assert!((qz - qq).abs() < 1e-10, "b={b}: {qz} vs {qq}");
    }
}

fn d1_by_quadrature(q: &Quantizer) -> f64 {
    quad::integrate(
        |t: f64| {
            let z = t.cos();
            (z - q.apply(z)).powi(2)
        },
        0.0,
        PI,
        1e-12,
    ) / PI
}

fn d2_closed_form(q: &Quantizer) -> f64 {
    q.cells()
        .iter()
        .map(|c| {
            let l2 = c.level * c.level;
            segment_moment(4, c.lo, c.hi) - 2.0 * l2 * segment_moment(2, c.lo, c.hi) + l2 * l2 * segment_mass(c.lo, c.hi)
        })
        .sum()
}

#[test]
fn distortions_match_independent_evaluations() {
    let one = build_lm_rff(1).unwrap();
    assert!((d1_by_quadrature(&one) - (0.5 - 4.0 / (PI * PI))).abs() < 1e-9);
    for b in 1..=4 {
        for q in [build_lm_rff(b).unwrap(), build_lm2_rff(b).unwrap(), Quantizer::stocq_uniform(b).unwrap()] {
            // quadrature over whole range blurs the jumps; breaks are not passed, so be lenient
            assert!((distortion_d1(&q) - d1_by_quadrature(&q)).abs() < 1e-7);
            assert!((distortion_d2(&q) - d2_closed_form(&q)).abs() < 1e-12);
        }
    }
    assert!((distortion_d2(&build_lm2_rff(1).unwrap()) - 0.125).abs() < 1e-12);
}

#[test]
fn distortion_orderings() {
    for b in 2..=4 {
        let lm = build_lm_rff(b).unwrap();
        let lm2 = build_lm2_rff(b).unwrap();
        let grid = Quantizer::stocq_uniform(b).unwrap();
        assert!(distortion_d1(&lm) < distortion_d1(&lm2));
        assert!(distortion_d1(&lm) < distortion_d1(&grid));
        assert!(distortion_d1(&lm2) < stocq_distortion_d1(&grid).unwrap());
        assert!(distortion_d2(&lm2) < stocq_distortion_d2(&grid).unwrap());
        // stochastic rounding never beats rounding to the nearest grid point
        assert!(distortion_d1(&grid) < stocq_distortion_d1(&grid).unwrap());
    }
    for b in 1..=4 {
        assert!(distortion_d2(&build_lm2_rff(b).unwrap()) < distortion_d2(&build_lm_rff(b).unwrap()));
    }
    for b in 1..8 {
        assert!(distortion_d1(&build_lm_rff(b + 1).unwrap()) < distortion_d1(&build_lm_rff(b).unwrap()));
        assert!(distortion_d2(&build_lm2_rff(b + 1).unwrap()) < distortion_d2(&build_lm2_rff(b).unwrap()));
    }
}

#[test]
fn built_codebooks_round_trip_through_json() {
    for b in 1..=8 {
        for q in [build_lm_rff(b).unwrap(), build_lm2_rff(b).unwrap()] {
            let back = Quantizer::from_json(&q.to_json()).unwrap();
            assert_eq!(back, q);
            for (x, y) in back.borders().iter().zip(q.borders()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
    assert_eq!(build_lm2_rff(2).unwrap().kind(), QuantizerKind::Lm2Rff);
}

proptest! {
    #[test]
    fn expansion_is_closed_under_negation(mut inner in prop::collection::vec(0.001f64..0.999, 0..6), shift in 0.01f64..0.99) {
        inner.sort_by(f64::total_cmp);
        inner.dedup();
        let mut borders = vec![0.0];
        borders.extend(inner.iter().copied());
        borders.push(1.0);
        let levels: Vec<f64> = borders.windows(2).map(|w| w[0] + shift * (w[1] - w[0])).collect();
        prop_assume!(levels.windows(2).all(|w| w[0] < w[1]) && levels[0] > 0.0);
        let (b, l) = symmetric_expand(&borders, &levels).unwrap();
        prop_assert_eq!(b.len(), 2 * borders.len() - 1);
        prop_assert_eq!(l.len(), 2 * levels.len());
        for (x, y) in b.iter().zip(b.iter().rev()) { prop_assert_eq!(*x, -*y); }
        for (x, y) in l.iter().zip(l.iter().rev()) { prop_assert_eq!(*x, -*y); }
    }
}

#[test]
fn stochastic_one_bit_distortion() {
    // z in [-1, 1] rounds to +-1 with E[(1 - z)(z + 1)] = 1 - E[z^2]
    let grid = Quantizer::stocq_uniform(1).unwrap();
    assert!((stocq_distortion_d1(&grid).unwrap() - 0.5).abs() < 1e-14);
    // Q^2 = 1 always, so D2 = E[(1 - z^2)^2] = 1 - 1 + 3/8
    assert!((stocq_distortion_d2(&grid).unwrap() - 0.375).abs() < 1e-12);
    assert!(stocq_distortion_d1(&build_lm_rff(1).unwrap()).is_err());
}
