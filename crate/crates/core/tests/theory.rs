mod common;

use std::f64::consts::PI;

use asln_core::generative::{build_process, ground_truth_decomposition, sample_batch};
use asln_core::spectral::{column_means, row_covariance, svd_thin, sym_eig, top_eigenvalue};
use asln_core::theory::{
    anisotropy_delta, eigenvalue_ratio, error_cov_asymptotic, error_cov_general,
    gaussian_coefficients, mixing_basis, perturbation_correction, subspace_error_estimate,
};
use asln_core::encoders::PcaEncoder;
use asln_core::metrics::subspace_error;
use asln_core::{AslnError, Matrix, Nonlinearity, SourceDistribution, Vector};
use common::{gaussian, gh_expect, max_abs_diff};
use ndarray::{array, s};
use proptest::prelude::*;

#[test]
fn identity_coefficients() {
    let c = gaussian_coefficients(Nonlinearity::Identity);
    assert!((c.f_bar_prime - 1.0).abs() < 1e-12);
    assert!((c.f_bar_sq - 1.0).abs() < 1e-12);
    assert!(c.f_bar_third.abs() < 1e-12);
}

#[test]
fn sign_coefficients_closed_form_and_hermite_oracle() {
    let c = gaussian_coefficients(Nonlinearity::Sign);
    let r = (2.0 / PI).sqrt();
    assert!((c.f_bar_prime - r).abs() < 1e-10);
    assert!((c.f_bar_sq - 1.0).abs() < 1e-10);
    assert!((c.f_bar_third + r).abs() < 1e-10);
    // Gauss-Hermite converges only like 1/n across the jump of sign.
    let sign = |x: f64| x.signum();
    let e100 = (gh_expect(100, |x| sign(x) * x) - c.f_bar_prime).abs();
    let e200 = (gh_expect(200, |x| sign(x) * x) - c.f_bar_prime).abs();
    assert!(e200 < 5e-3 && e200 < e100);
    assert!((gh_expect(200, |x| sign(x) * (x.powi(3) - 3.0 * x)) - c.f_bar_third).abs() < 2e-2);
}

#[test]
fn cube_coefficients_match_hermite_oracle() {
    let c = gaussian_coefficients(Nonlinearity::Cube);
    let cube = |x: f64| x.powi(3);
    let oracle = (
        gh_expect(200, |x| cube(x) * x),
        gh_expect(200, |x| cube(x).powi(2)),
        gh_expect(200, |x| cube(x) * (x.powi(3) - 3.0 * x)),
    );
    assert!((oracle.0 - 3.0).abs() < 1e-10 && (oracle.1 - 15.0).abs() < 1e-10 && (oracle.2 - 6.0).abs() < 1e-10);
    assert!((c.f_bar_prime - oracle.0).abs() < 1e-10);
    assert!((c.f_bar_sq - oracle.1).abs() < 1e-10);
    assert!((c.f_bar_third - oracle.2).abs() < 1e-10);
}

#[test]
fn tanh_coefficients_match_hermite_oracle() {
    let c = gaussian_coefficients(Nonlinearity::Tanh);
    assert!((c.f_bar_prime - gh_expect(200, |x| x.tanh() * x)).abs() < 1e-10);
    assert!((c.f_bar_sq - gh_expect(200, |x| x.tanh().powi(2))).abs() < 1e-10);
    assert!((c.f_bar_third - gh_expect(200, |x| x.tanh() * (x.powi(3) - 3.0 * x))).abs() < 1e-10);
}

#[test]
fn relu_is_not_odd() {
    let c = gaussian_coefficients(Nonlinearity::Relu);
    assert!(!c.odd);
    assert!((c.f_bar_prime - 0.5).abs() < 1e-10);
    assert!((c.f_bar_sq - 0.5).abs() < 1e-10);
    let err = error_cov_asymptotic(2, 10, &c, &Matrix::eye(2)).unwrap_err();
    assert!(matches!(err, AslnError::NotOdd(_)));
}

#[test]
fn delta_vanishes_for_orthonormal_readout() {
    let b = svd_thin(&gaussian(30, 12, 3)).unwrap().left;
    let u_a = mixing_basis(&gaussian(12, 4, 4)).unwrap();
    let d = anisotropy_delta(&b, &u_a).unwrap();
    assert!(d.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn delta_for_scaled_identity() {
    let c: f64 = 1.7;
    let b = Matrix::eye(9) * c;
    let u_a = mixing_basis(&gaussian(9, 3, 1)).unwrap();
    let d = anisotropy_delta(&b, &u_a).unwrap();
    let want = Matrix::eye(3) * (c * c - 1.0).powi(2);
    assert!(max_abs_diff(&d, &want) < 1e-12);
}

#[test]
fn delta_is_near_identity_for_gaussian_readout() {
    let n = 2000;
    let p = build_process(10, n, n, Nonlinearity::Sign, SourceDistribution::Uniform, 2).unwrap();
    let d = anisotropy_delta(&p.readout, &mixing_basis(&p.mixing).unwrap()).unwrap();
    for v in d.diag() {
        assert!((v - 1.0).abs() < 0.25, "{v}");
    }
}

#[test]
fn general_prediction_small_cases() {
    let bh = Matrix::eye(2);
    let b = Matrix::eye(2);
    let zero = error_cov_general(&bh, &b, &Matrix::zeros((2, 2))).unwrap();
    assert!(zero.cov_eps.iter().all(|&v| v == 0.0));
    let sigma = array![[0.1, 0.0], [0.0, 0.2]];
    let p = error_cov_general(&bh, &b, &sigma).unwrap();
    assert!(max_abs_diff(&p.cov_eps, &sigma) < 1e-15);
    assert!((p.per_element_mse - 0.15).abs() < 1e-15);
}

#[test]
fn general_prediction_rejects_rank_deficiency() {
    let bh = array![[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]];
    let err = error_cov_general(&bh, &Matrix::eye(3), &Matrix::eye(3)).unwrap_err();
    assert!(matches!(err, AslnError::Rank { index: 1, .. }));
}

#[test]
fn general_prediction_matches_fresh_monte_carlo() {
    let p = build_process(3, 40, 40, Nonlinearity::Tanh, SourceDistribution::Uniform, 5).unwrap();
    let gt = ground_truth_decomposition(&p, &sample_batch(&p, 200_000, 5).unwrap()).unwrap();
    let pred = error_cov_general(&gt.bh, &p.readout, &gt.sigma).unwrap();

    let t = 100_000;
    let fresh = sample_batch(&p, t, 6).unwrap();
    let f = fresh.basis(&p);
    let phi = &f - &column_means(&f) - &fresh.sources.dot(&gt.h.t());
    let proj = asln_core::spectral::pinv(&gt.bh, 1e-12).unwrap().dot(&p.readout);
    let eps = phi.dot(&proj.t());
    let emp = row_covariance(&eps);
    let centred = &eps - &column_means(&eps);
    for i in 0..3 {
        for j in 0..3 {
            let prod: Vec<f64> = centred.column(i).iter().zip(centred.column(j)).map(|(a, b)| a * b).collect();
            let (_, sd) = common::mean_sd(&prod);
            let se = sd / (t as f64).sqrt();
            assert!((emp[[i, j]] - pred.cov_eps[[i, j]]).abs() < 5.0 * se, "({i},{j})");
        }
    }
}

#[test]
fn asymptotic_closed_values() {
    let eye = Matrix::eye(100);
    let zero = error_cov_asymptotic(100, 10_000, &gaussian_coefficients(Nonlinearity::Identity), &eye).unwrap();
    assert!(zero.per_element_mse.abs() < 1e-12);
    let sign = error_cov_asymptotic(100, 10_000, &gaussian_coefficients(Nonlinearity::Sign), &eye).unwrap();
    let want = 2.0 * (PI / 2.0 - 1.0) * 0.01 + 1.0 / 200.0;
    assert!((sign.per_element_mse - want).abs() < 1e-10);
    assert!((sign.per_element_mse - 0.016416).abs() < 1e-6);
    let cube = error_cov_asymptotic(100, 10_000, &gaussian_coefficients(Nonlinearity::Cube), &eye).unwrap();
    assert!((cube.per_element_mse - 1.0 / 30.0).abs() < 1e-10);
    let terms = cube.decomposition.unwrap();
    assert!((terms.finite_width + terms.finite_source - cube.per_element_mse).abs() < 1e-15);
}

#[test]
fn eigenvalue_ratio_small_cases() {
    let bh = array![[2.0, 0.0], [0.0, 2.0], [0.0, 0.0], [0.0, 0.0]];
    let b = Matrix::eye(4);
    assert_eq!(eigenvalue_ratio(&bh, &b, &Matrix::zeros((4, 4))).unwrap(), 0.0);
    let r = eigenvalue_ratio(&bh, &b, &(Matrix::eye(4) * 0.1)).unwrap();
    assert!((r - 0.025).abs() < 1e-12);
}

#[test]
fn identity_process_has_no_noise_spectrum() {
    // The residual is pure sampling error, so the ratio falls like 1/T.
    let p = build_process(3, 20, 15, Nonlinearity::Identity, SourceDistribution::Uniform, 1).unwrap();
    let ratio = |t: usize| {
        let gt = ground_truth_decomposition(&p, &sample_batch(&p, t, 1).unwrap()).unwrap();
        eigenvalue_ratio(&gt.bh, &p.readout, &gt.sigma).unwrap()
    };
    let (small, large) = (ratio(20_000), ratio(320_000));
    assert!(small < 1e-2);
    assert!(large < small / 6.0, "{small} -> {large}");
}

#[test]
fn sign_ratio_decreases_with_width() {
    let mut ratios = Vec::new();
    for n in [100, 300, 1000] {
        let p = build_process(10, n, n, Nonlinearity::Sign, SourceDistribution::Uniform, 3).unwrap();
        let gt = ground_truth_decomposition(&p, &sample_batch(&p, 100_000, 3).unwrap()).unwrap();
        ratios.push(eigenvalue_ratio(&gt.bh, &p.readout, &gt.sigma).unwrap());
    }
    assert!(ratios[0] > ratios[1] && ratios[1] > ratios[2], "{ratios:?}");
    assert!(ratios[2] < 0.1);
}

#[test]
fn perturbation_without_cross_terms_is_exact() {
    let u_l = array![[1.0], [0.0], [0.0]];
    let s_l = Vector::from(vec![2.0]);
    let noise = array![[0.3, 0.0, 0.0], [0.0, 0.2, 0.05], [0.0, 0.05, 0.1]];
    let r = perturbation_correction(&u_l, &s_l, &noise).unwrap();
    assert!(r.e.iter().all(|v| v.abs() < 1e-15));
    assert!(max_abs_diff(&r.corrected_major_vectors, &u_l) < 1e-15);
    assert!((r.corrected_major_eigenvalues[0] - 4.3).abs() < 1e-14);
    let zero = perturbation_correction(&u_l, &s_l, &Matrix::zeros((3, 3))).unwrap();
    assert_eq!(zero.corrected_major_eigenvalues[0], 4.0);
    assert_eq!(zero.subspace_error_estimate, 0.0);
}

#[test]
fn perturbation_hand_case_matches_exact_eigenpairs() {
    let delta = 0.01;
    let u_l = array![[1.0], [0.0], [0.0]];
    let s_l = Vector::from(vec![2.0]);
    let mut noise = Matrix::zeros((3, 3));
    noise[[0, 1]] = delta;
    noise[[1, 0]] = delta;
    let r = perturbation_correction(&u_l, &s_l, &noise).unwrap();
    let full = &u_l.dot(&u_l.t()) * 4.0 + &noise;
    let exact = sym_eig(&full, None).unwrap();
    assert!((r.corrected_major_eigenvalues[0] - exact.eigenvalues[0]).abs() < 1e-4);
    let v = r.corrected_major_vectors.column(0).to_owned();
    let w = exact.eigenvectors.column(0).to_owned();
    let cos = v.dot(&w).abs() / v.dot(&v).sqrt();
    assert!(1.0 - cos < 1e-4);
    let mut minor = r.corrected_minor_eigenvalues.to_vec();
    minor.sort_by(f64::total_cmp);
    let mut exact_minor = exact.eigenvalues.slice(s![1..]).to_vec();
    exact_minor.sort_by(f64::total_cmp);
    for (a, b) in minor.iter().zip(&exact_minor) {
        assert!((a - b).abs() < 1e-4);
    }
}

#[test]
fn cheap_estimate_equals_full_correction() {
    let p = build_process(3, 60, 50, Nonlinearity::Sign, SourceDistribution::Uniform, 7).unwrap();
    let gt = ground_truth_decomposition(&p, &sample_batch(&p, 20_000, 7).unwrap()).unwrap();
    let noise = gt.noise_covariance(&p);
    let full = perturbation_correction(&gt.u_l, &gt.s_l, &noise).unwrap();
    let cheap = subspace_error_estimate(&gt.u_l, &gt.s_l, &noise.dot(&gt.u_l)).unwrap();
    assert!((full.subspace_error_estimate - cheap).abs() < 1e-12 * full.subspace_error_estimate.max(1e-300));
    let bound = top_eigenvalue(&noise).unwrap();
    for (c, s) in full.corrected_major_eigenvalues.iter().zip(gt.s_l.iter()) {
        assert!((c - s * s).abs() <= bound + 1e-12);
    }
}

#[test]
fn subspace_estimate_tracks_measurement_at_figure_scale() {
    let p = build_process(10, 1000, 1000, Nonlinearity::Sign, SourceDistribution::Uniform, 1).unwrap();
    let batch = sample_batch(&p, 100_000, 1).unwrap();
    let gt = ground_truth_decomposition(&p, &batch).unwrap();
    let moments = asln_core::BasisMoments::compute(&p, &batch, 0..batch.len()).unwrap();
    let pca = PcaEncoder::from_covariance(&moments.input_covariance(&p), moments.input_mean(&p), 10).unwrap();
    let measured = subspace_error(&pca.p_m, &gt.u_l).unwrap();
    let nu = p.readout.dot(&gt.sigma.dot(&p.readout.t().dot(&gt.u_l)));
    let estimate = subspace_error_estimate(&gt.u_l, &gt.s_l, &nu).unwrap();
    let ratio = estimate / measured;
    assert!((0.5..=2.0).contains(&ratio), "{estimate} vs {measured}");
}

#[test]
fn asymptotic_and_general_converge() {
    let mut ratios = Vec::new();
    for (n_s, n_f) in [(10, 1000), (30, 3000)] {
        let p = build_process(n_s, n_f, n_f, Nonlinearity::Sign, SourceDistribution::Uniform, 4).unwrap();
        let gt = ground_truth_decomposition(&p, &sample_batch(&p, 100_000, 4).unwrap()).unwrap();
        let general = error_cov_general(&gt.bh, &p.readout, &gt.sigma).unwrap().per_element_mse;
        let delta = anisotropy_delta(&p.readout, &mixing_basis(&p.mixing).unwrap()).unwrap();
        let asym = error_cov_asymptotic(n_s, n_f, &gaussian_coefficients(Nonlinearity::Sign), &delta)
            .unwrap()
            .per_element_mse;
        ratios.push(general / asym);
    }
    // The asymptotic form overshoots at small N_s and closes in as N_s grows.
    assert!(ratios[0] < ratios[1] && ratios[1] <= 1.0, "{ratios:?}");
    assert!((0.5..=2.0).contains(&ratios[1]), "{ratios:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn general_prediction_is_psd(n_s in 1usize..4, extra in 0usize..6, seed in any::<u64>()) {
        let n = n_s + extra + 1;
        let bh = gaussian(n, n_s, seed);
        let g = gaussian(n, n, seed ^ 1);
        let sigma = g.dot(&g.t());
        let p = error_cov_general(&bh, &Matrix::eye(n), &sigma).unwrap();
        let e = sym_eig(&p.cov_eps, None).unwrap();
        prop_assert!(e.eigenvalues.iter().all(|&v| v > -1e-9 * e.eigenvalues[0].abs().max(1.0)));
        prop_assert!(p.per_element_mse >= 0.0);
    }

    #[test]
    fn asymptotic_error_falls_with_width(n_s in 2usize..50, k in 2usize..20) {
        let c = gaussian_coefficients(Nonlinearity::Sign);
        let eye = Matrix::eye(n_s);
        let a = error_cov_asymptotic(n_s, n_s * k, &c, &eye).unwrap().per_element_mse;
        let b = error_cov_asymptotic(n_s, n_s * k * 2, &c, &eye).unwrap().per_element_mse;
        prop_assert!(b < a);
    }
}
