use ndarray::{array, Array1, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use rffq::features::EstimatorKind;
use rffq::learn::*;
use rffq::lloyd::build_lm_rff;
use rffq::rng::{substream, Purpose};
use rffq::Quantizer;

fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = substream(seed, Purpose::MonteCarlo, 0, 5);
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
}

/// Ridge solution as the least-squares fit of the stacked system `[F; sqrt(l) I] w = [y; 0]`,
/// solved by modified Gram-Schmidt.
fn stacked_least_squares(f: &Array2<f64>, y: &[f64], lambda: f64) -> Array1<f64> {
    let (n, p) = f.dim();
    let mut a = Array2::zeros((n + p, p));
    a.slice_mut(ndarray::s![..n, ..]).assign(f);
    for j in 0..p {
        a[[n + j, j]] = lambda.sqrt();
    }
    let mut b = Array1::zeros(n + p);
    b.slice_mut(ndarray::s![..n]).assign(&Array1::from(y.to_vec()));
    let mut r = Array2::zeros((p, p));
    for j in 0..p {
        for i in 0..j {
            let d = a.column(i).dot(&a.column(j));
            r[[i, j]] = d;
            let qi = a.column(i).to_owned();
            a.column_mut(j).scaled_add(-d, &qi);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        r[[j, j]] = norm;
        a.column_mut(j).mapv_inplace(|v| v / norm);
    }
    let qtb = a.t().dot(&b);
    let mut w = Array1::zeros(p);
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[[i, k]] * w[k]).sum();
        w[i] = (qtb[i] - s) / r[[i, i]];
    }
    w
}

#[test]
fn ridge_matches_stacked_least_squares() {
    let f = gaussian(20, 5, 1);
    let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
    for lambda in [1e-3, 0.5, 10.0] {
        let w = ridge_fit(f.view(), &y, lambda).unwrap();
        let oracle = stacked_least_squares(&f, &y, lambda);
        assert!((&w - &oracle).iter().all(|d| d.abs() < 1e-8), "{w} vs {oracle}");
        let resid = f.t().dot(&f).dot(&w) + &w * lambda - f.t().dot(&Array1::from(y.clone()));
        let scale = f.t().dot(&Array1::from(y.clone())).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(resid.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8 * scale);
    }
}

#[test]
fn ridge_recovers_exact_weights() {
    let f = gaussian(50, 6, 2);
    let w0 = array![1.0, -2.0, 0.5, 3.0, 0.0, -1.5];
    let y = f.dot(&w0).to_vec();
    let w = ridge_fit(f.view(), &y, 1e-10).unwrap();
    assert!((&w - &w0).iter().all(|d| d.abs() < 1e-6));
    let mut bad = y.clone();
    bad[3] = f64::NAN;
    assert!(ridge_fit(f.view(), &bad, 1.0).is_err());
}

#[test]
fn intercept_absorbs_a_constant_shift() {
    let f = gaussian(200, 3, 3);
    let y: Vec<f64> = f.rows().into_iter().map(|r| 2.0 * r[0] - r[2] + 7.0).collect();
    let mut sys = RidgeSystem::new(3);
    for (rows, ys) in f.axis_chunks_iter(Axis(0), 64).zip(y.chunks(64)) {
        sys.accumulate(rows, ys).unwrap();
    }
    let (w, b) = sys.solve(1e-10, true).unwrap();
    assert!((w[0] - 2.0).abs() < 1e-8 && w[1].abs() < 1e-8 && (w[2] + 1.0).abs() < 1e-8);
    assert!((b - 7.0).abs() < 1e-8);
}

#[test]
fn synthetic_model_by_hand() {
    let d = 10;
    let b1: Vec<f64> = (1..=d).map(|i| i as f64).collect();
    let b2 = vec![1.0; d];
    let mut x = Array1::zeros(d);
    x[0] = 1.0;
    assert_eq!(cubic_response(x.view(), &b1, &b2, &vec![0.0; d]), 2.0);
    let syn = generate_synthetic(&SyntheticSpec { n_train: 10, n_test: 5, seed: 3, ..Default::default() }).unwrap();
    assert_eq!(syn.beta1, b1);
    assert_eq!(syn.beta2, b2);
    let noiseless = generate_synthetic(&SyntheticSpec { n_train: 10, n_test: 5, seed: 3, noise_sd: 0.0, ..Default::default() }).unwrap();
    for (i, row) in noiseless.train.features().rows().into_iter().enumerate() {
        let y = cubic_response(row, &noiseless.beta1, &noiseless.beta2, &noiseless.beta3);
        assert!((y - noiseless.train.targets()[i]).abs() < 1e-12);
    }
}

#[test]
fn synthetic_target_mean() {
    let syn = generate_synthetic(&SyntheticSpec { n_train: 100_000, n_test: 10, seed: 4, ..Default::default() }).unwrap();
    let y = syn.train.targets();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 10.0).abs() < 3.0 * sd / n.sqrt(), "{mean} sd {sd}");
}

#[test]
fn synthetic_is_reproducible_and_streams_differ() {
    let spec = SyntheticSpec { n_train: 50, n_test: 50, seed: 5, ..Default::default() };
    let a = generate_synthetic(&spec).unwrap();
    let b = generate_synthetic(&spec).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.beta3, b.beta3);
    assert_ne!(a.train.features(), a.test.features());
    let c = generate_synthetic(&SyntheticSpec { seed: 6, ..spec }).unwrap();
    assert_ne!(a.beta3, c.beta3);
}

#[test]
fn load_and_normalize_sparse_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    std::fs::write(&path, "1 1:3 2:4\n-1 3:2\n").unwrap();
    let ds = load_dataset(&path, DatasetFormat::Sparse, Some(3), true).unwrap();
    assert!(ds.is_normalized());
    for row in ds.features().rows() {
        assert!((row.dot(&row) - 1.0).abs() < 1e-12);
    }
    assert_eq!(ds.features().row(0).to_vec(), vec![0.6, 0.8, 0.0]);
    std::fs::write(&path, "").unwrap();
    assert!(load_dataset(&path, DatasetFormat::Sparse, None, false).is_err());
    assert!(load_dataset(&dir.path().join("missing"), DatasetFormat::DenseCsv, None, false).is_err());
}

#[test]
fn split_is_seeded() {
    let ds = Dataset::new(gaussian(30, 2, 7), (0..30).map(f64::from).collect(), Task::Regression).unwrap();
    let (a, _) = split(&ds, 0.6, 9).unwrap();
    let (b, _) = split(&ds, 0.6, 9).unwrap();
    let (c, _) = split(&ds, 0.6, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.targets(), c.targets());
}

fn small_problem() -> Synthetic {
    generate_synthetic(&SyntheticSpec { n_train: 3000, n_test: 1000, seed: 8, ..Default::default() }).unwrap()
}

#[test]
fn random_features_beat_linear_on_cubic_data() {
    let syn = small_problem();
    let cfg = KrrConfig { gamma: 0.2, m: 256, seed: 8, lambdas: KrrConfig::default_lambdas(), estimator: EstimatorKind::Simple };
    let linear = krr_experiment(&syn.train, &syn.test, &KrrMethod::Linear, &cfg).unwrap();
    let full = krr_experiment(&syn.train, &syn.test, &KrrMethod::Full, &cfg).unwrap();
    assert!(full.test_mse < linear.test_mse, "{} vs {}", full.test_mse, linear.test_mse);
    assert_eq!((linear.bits, linear.m, linear.memory_bits), (FLOAT_BITS, 10, 320));
    assert_eq!(full.memory_bits, 32 * 256);
    let lm = krr_experiment(&syn.train, &syn.test, &KrrMethod::Quantized(build_lm_rff(2).unwrap()), &cfg).unwrap();
    assert_eq!((lm.method.as_str(), lm.bits, lm.memory_bits), ("lm_rff", 2, 512));
    let normalized = KrrConfig { estimator: EstimatorKind::Normalized, ..cfg.clone() };
    assert!(krr_experiment(&syn.train, &syn.test, &KrrMethod::Full, &normalized).unwrap().test_mse.is_finite());
}

#[test]
fn krr_is_deterministic() {
    let syn = small_problem();
    let cfg = KrrConfig { gamma: 0.3, m: 64, seed: 2, lambdas: vec![1e-3, 1e-1], estimator: EstimatorKind::Simple };
    let q = KrrMethod::Quantized(Quantizer::stocq_uniform(1).unwrap());
    let a = krr_experiment(&syn.train, &syn.test, &q, &cfg).unwrap();
    let b = krr_experiment(&syn.train, &syn.test, &q, &cfg).unwrap();
    assert_eq!(a, b);
    let tuned = krr_tuned(&syn.train, &syn.test, &q, &cfg, &[0.2, 0.3]).unwrap();
    assert!(tuned.test_mse <= a.test_mse);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_partitions_rows(n in 2usize..60, frac in 0.05f64..0.95, seed in 0u64..500) {
        let ds = Dataset::new(Array2::zeros((n, 1)), (0..n).map(|i| i as f64).collect(), Task::Regression).unwrap();
        if let Ok((a, b)) = split(&ds, frac, seed) {
            let mut all: Vec<f64> = a.targets().iter().chain(b.targets()).copied().collect();
            all.sort_by(f64::total_cmp);
            prop_assert_eq!(all, (0..n).map(|i| i as f64).collect::<Vec<_>>());
            prop_assert_eq!(a.n(), (n as f64 * frac).round() as usize);
        }
    }
}
