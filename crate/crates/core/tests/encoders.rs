mod common;

use asln_core::encoders::{
    amari_direction, amari_train, cascade, oja_train, oja_update, oja_weights, pca_whiten_batch,
    AmariConfig, CascadeConfig, EncoderMode, IcaNonlinearity, OjaConfig, PcaEncoder,
};
use asln_core::generative::{build_process, sample_batch};
use asln_core::metrics::{align_sources, bss_mse, subspace_error};
use asln_core::spectral::{column_means, principal_cosines, row_covariance, sym_eig};
use asln_core::{AslnError, Matrix, Nonlinearity, SourceDistribution};
use common::{gaussian, max_abs_diff, permutations, rng};
use ndarray::{array, s, Axis};
use proptest::prelude::*;
use rand::Rng;

fn uniform_sources(t: usize, k: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    let h = 3f64.sqrt();
    Matrix::from_shape_simple_fn((t, k), || r.random_range(-h..h))
}

fn rotation(k: usize, seed: u64) -> Matrix {
    asln_core::spectral::svd_thin(&gaussian(k, k, seed)).unwrap().left
}

#[test]
fn axis_aligned_batch_pca() {
    let z = gaussian(100_000, 2, 1);
    let x = &z * &array![2.0, 1.0];
    let enc = pca_whiten_batch(x.view(), 1).unwrap();
    assert!((enc.p_m[[0, 0]].abs() - 1.0).abs() < 1e-3);
    assert!((enc.lambda_m[0] - 4.0).abs() < 0.1);
}

#[test]
fn held_out_outputs_are_white() {
    let p = build_process(3, 40, 40, Nonlinearity::Sign, SourceDistribution::Uniform, 2).unwrap();
    let b = sample_batch(&p, 40_000, 2).unwrap();
    let x = b.inputs(&p);
    let enc = pca_whiten_batch(x.slice(s![..20_000, ..]), 3).unwrap();
    let u = enc.transform(x.slice(s![20_000.., ..]));
    assert!(max_abs_diff(&row_covariance(&u), &Matrix::eye(3)) < 0.05);
}

#[test]
fn identity_process_gives_orthogonal_mix() {
    let p = build_process(4, 20, 20, Nonlinearity::Identity, SourceDistribution::Uniform, 3).unwrap();
    let b = sample_batch(&p, 20_000, 3).unwrap();
    let enc = pca_whiten_batch(b.inputs(&p).view(), 4).unwrap();
    let u = enc.transform(b.inputs(&p).view());
    // Least-squares oracle: u ~ s Q^T.
    let sc = &b.sources - &column_means(&b.sources);
    let q = asln_core::spectral::pinv(&sc, 1e-12).unwrap().dot(&u).t().to_owned();
    assert!(max_abs_diff(&q.dot(&q.t()), &Matrix::eye(4)) < 0.02);
    let resid = &u - &sc.dot(&q.t());
    let resid_ms = resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
    assert!(resid_ms < 1e-20);
}

#[test]
fn oja_fixed_point_update_is_sampling_noise() {
    let p = build_process(3, 30, 30, Nonlinearity::Tanh, SourceDistribution::Uniform, 4).unwrap();
    let train = sample_batch(&p, 200_000, 4).unwrap().inputs(&p);
    let enc = pca_whiten_batch(train.view(), 3).unwrap();
    let w = enc.p_m.t().to_owned();
    let x = sample_batch(&p, 50_000, 5).unwrap().inputs(&p);
    let xc = &x - &enc.input_mean;
    let n = xc.nrows();
    let update = oja_update(&w, xc.view(), 1.0);
    // Per-row contributions give the Monte-Carlo error of the mean update.
    let mut var_sum = 0.0;
    let mut rows = Vec::with_capacity(n);
    for r in xc.rows() {
        let r2 = r.insert_axis(Axis(0)).to_owned();
        rows.push(oja_update(&w, r2.view(), 1.0));
    }
    for i in 0..3 {
        for j in 0..30 {
            let v: Vec<f64> = rows.iter().map(|m| m[[i, j]]).collect();
            var_sum += common::mean_sd(&v).1.powi(2);
        }
    }
    let se = (var_sum / n as f64).sqrt();
    let norm = update.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 5.0 * se, "{norm} vs {se}");
}

#[test]
fn oja_converges_to_orthonormal_principal_rows() {
    let p = build_process(3, 60, 60, Nonlinearity::Sign, SourceDistribution::Uniform, 6).unwrap();
    let x = sample_batch(&p, 20_000, 6).unwrap().inputs(&p);
    let batch = pca_whiten_batch(x.view(), 3).unwrap();
    let cfg = OjaConfig { seed: 6, ..OjaConfig::default() };
    let (w, _, log) = oja_weights(&x, 3, &cfg, Some(&batch.p_m)).unwrap();
    assert!(max_abs_diff(&w.dot(&w.t()), &Matrix::eye(3)) < 1e-2);
    assert_eq!(log.records.len(), cfg.epochs);
    let last = log.records.last().unwrap().metric;
    assert!(last < 1e-2, "{last}");
    let (enc, log2) = oja_train(&x, 3, &cfg, Some(&batch.p_m)).unwrap();
    assert_eq!(log, log2);
    assert!(subspace_error(&enc.p_m, &batch.p_m).unwrap() < 1e-2);
}

#[test]
fn oja_is_seed_deterministic() {
    let x = gaussian(3000, 8, 2) * &array![3.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let cfg = OjaConfig { seed: 9, epochs: 3, ..OjaConfig::default() };
    let a = oja_train(&x, 2, &cfg, None).unwrap();
    let b = oja_train(&x, 2, &cfg, None).unwrap();
    let bits = |log: &asln_core::encoders::TrainLog| {
        log.records.iter().map(|r| (r.epoch, r.metric.to_bits(), r.weight_change.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a.1), bits(&b.1));
    assert_eq!(a.0, b.0);
}

#[test]
fn amari_fixed_point_for_binary_sources() {
    // Independent +-1 outputs satisfy E[y^3 y^T] = I.
    let mut r = rng(3);
    let u = Matrix::from_shape_simple_fn((100_000, 3), || if r.random::<bool>() { 1.0 } else { -1.0 });
    let (dir, _) = amari_direction(&Matrix::eye(3), u.view(), IcaNonlinearity::Cube);
    let bound = 5.0 / (u.nrows() as f64).sqrt();
    assert!(dir.iter().all(|v| v.abs() < bound), "{dir}");
}

#[test]
fn amari_separates_two_rotated_uniform_sources() {
    let s = uniform_sources(20_000, 2, 1);
    let u = s.dot(&rotation(2, 7).t());
    let (ica, _) = amari_train(&u, &AmariConfig { seed: 1, ..AmariConfig::default() }).unwrap();
    let y = ica.transform(u.view());
    // Exhaustive alignment at k = 2.
    let corr = asln_core::metrics::correlation_matrix(y.view(), s.view()).unwrap();
    let best = permutations(2)
        .into_iter()
        .map(|p| (0..2).map(|i| corr[[p[i], i]].abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    assert!(best > 0.99, "{corr}");
}

#[test]
fn gaussian_sources_are_not_separated() {
    let s = gaussian(20_000, 4, 2);
    let u = s.dot(&rotation(4, 8).t());
    let (ica, _) = amari_train(&u, &AmariConfig { seed: 2, epochs: 30, ..AmariConfig::default() }).unwrap();
    let y = ica.transform(u.view());
    let corr = asln_core::metrics::correlation_matrix(y.view(), s.view()).unwrap();
    let a = align_sources(y.view(), s.view()).unwrap();
    let off = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|&(i, j)| a.permutation[j] != i)
        .map(|(i, j)| corr[[i, j]].abs())
        .fold(0.0, f64::max);
    assert!(off > 0.1, "{corr}");
}

#[test]
fn identity_cascade_recovers_sources() {
    let p = build_process(4, 30, 30, Nonlinearity::Identity, SourceDistribution::Uniform, 5).unwrap();
    let b = sample_batch(&p, 20_000, 5).unwrap();
    let cfg = CascadeConfig { amari: AmariConfig { seed: 5, ..AmariConfig::default() }, ..CascadeConfig::default() };
    let out = cascade(&p, &b, 4, &cfg).unwrap();
    let s_eval = b.sources.slice(s![out.eval_rows.clone(), ..]);
    let aligned = align_sources(out.estimates.view(), s_eval).unwrap().apply(out.estimates.view());
    assert!(bss_mse(aligned.view(), s_eval).unwrap() < 0.01);
    assert!(max_abs_diff(&row_covariance(&out.estimates), &Matrix::eye(4)) < 0.05);
}

#[test]
fn oja_cascade_matches_batch_cascade() {
    let p = build_process(3, 50, 50, Nonlinearity::Sign, SourceDistribution::Uniform, 8).unwrap();
    let b = sample_batch(&p, 20_000, 8).unwrap();
    let mut cfg = CascadeConfig::default();
    cfg.amari.seed = 8;
    cfg.oja.seed = 8;
    let batch = cascade(&p, &b, 3, &cfg).unwrap();
    cfg.mode = EncoderMode::Oja;
    let oja = cascade(&p, &b, 3, &cfg).unwrap();
    assert!(oja.pca_log.is_some());
    let s_eval = b.sources.slice(s![batch.eval_rows.clone(), ..]);
    let mse = |u: &Matrix| {
        let a = align_sources(u.view(), s_eval).unwrap().apply(u.view());
        bss_mse(a.view(), s_eval).unwrap()
    };
    assert!(mse(&oja.estimates) < 2.0 * mse(&batch.estimates));
}

#[test]
fn whitening_twice_spans_the_same_subspace() {
    let p = build_process(3, 40, 40, Nonlinearity::Cube, SourceDistribution::Uniform, 9).unwrap();
    let x = sample_batch(&p, 10_000, 9).unwrap().inputs(&p);
    let a = pca_whiten_batch(x.view(), 3).unwrap();
    let b = pca_whiten_batch(x.view(), 3).unwrap();
    let cos = principal_cosines(&a.p_m, &b.p_m).unwrap();
    assert!(cos.iter().all(|&c| 1.0 - c < 1e-8));
}

#[test]
fn batch_pca_shares_the_eigensolver_path() {
    let g = gaussian(500, 30, 4);
    let cov = row_covariance(&g);
    let enc = PcaEncoder::from_covariance(&cov, column_means(&g), 5).unwrap();
    let eig = sym_eig(&cov, Some(5)).unwrap();
    assert_eq!(enc.p_m, eig.eigenvectors);
    let reference = eig.eigenvectors.clone();
    assert_eq!(subspace_error(&enc.p_m, &reference).unwrap(), subspace_error(&eig.eigenvectors, &reference).unwrap());
}

#[test]
fn invalid_training_parameters() {
    let x = gaussian(100, 4, 1);
    let bad = OjaConfig { eta: 0.0, ..OjaConfig::default() };
    assert!(matches!(oja_train(&x, 2, &bad, None), Err(AslnError::Config(_))));
    assert!(matches!(oja_train(&x, 5, &OjaConfig::default(), None), Err(AslnError::Dimension(_))));
    let diverge = OjaConfig { eta: 50.0, ..OjaConfig::default() };
    let big = &x * 100.0;
    assert!(matches!(oja_train(&big, 2, &diverge, None), Err(AslnError::Divergence { .. })));
    let cov = Matrix::from_diag(&array![1.0, 0.0]);
    assert!(matches!(
        PcaEncoder::from_covariance(&cov, ndarray::Array1::zeros(2), 2),
        Err(AslnError::Rank { index: 1, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn whitening_map_inverts_covariance(n in 2usize..12, k in 1usize..12, seed in any::<u64>()) {
        let k = k.min(n);
        let g = gaussian(n + 5, n, seed);
        let cov = g.t().dot(&g) / (n + 5) as f64 + Matrix::eye(n) * 0.1;
        let enc = PcaEncoder::from_covariance(&cov, ndarray::Array1::zeros(n), k).unwrap();
        let white = enc.w_pca.dot(&cov).dot(&enc.w_pca.t());
        prop_assert!(max_abs_diff(&white, &Matrix::eye(k)) < 1e-9);
    }

    #[test]
    fn oja_update_vanishes_at_exact_eigenvectors(n in 2usize..10, seed in any::<u64>()) {
        let x = gaussian(200, n, seed);
        let xc = &x - &column_means(&x);
        let enc = pca_whiten_batch(x.view(), 1).unwrap();
        let upd = oja_update(&enc.p_m.t().to_owned(), xc.view(), 1.0);
        prop_assert!(upd.iter().all(|v| v.abs() < 1e-9));
    }
}
