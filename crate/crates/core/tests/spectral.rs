mod common;

use asln_core::spectral::{
    frobenius, hadamard_pow, pinv, principal_cosines, sym_eig, sym_eig_op, svd_thin, PINV_TOL,
};
use asln_core::{AslnError, Matrix};
use common::{gaussian, jacobi_eig, max_abs_diff, random_symmetric};
use ndarray::array;
use proptest::prelude::*;

#[test]
fn identity_has_unit_spectrum() {
    let d = sym_eig(&Matrix::eye(3), None).unwrap();
    assert_eq!(d.eigenvalues.to_vec(), vec![1.0; 3]);
    let gram = d.eigenvectors.t().dot(&d.eigenvectors);
    assert!(max_abs_diff(&gram, &Matrix::eye(3)) < 1e-14);
}

#[test]
fn diagonal_sorted_with_axis_vectors() {
    let m = Matrix::from_diag(&array![3.0, 1.0, 2.0]);
    let d = sym_eig(&m, None).unwrap();
    assert_eq!(d.eigenvalues.to_vec(), vec![3.0, 2.0, 1.0]);
    let expected_axis = [0, 2, 1];
    for (col, &axis) in expected_axis.iter().enumerate() {
        assert!((d.eigenvectors[[axis, col]].abs() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn random_50_matches_jacobi() {
    let m = random_symmetric(50, 11);
    let d = sym_eig(&m, None).unwrap();
    assert!(max_abs_diff(&d.reconstruct(), &m) < 1e-10);
    let (reference, _) = jacobi_eig(&m);
    for (a, b) in d.eigenvalues.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn top_k_is_prefix_of_full() {
    let m = random_symmetric(120, 4);
    let full = sym_eig(&m, None).unwrap();
    let top = sym_eig(&m, Some(7)).unwrap();
    assert_eq!(top.len(), 7);
    for i in 0..7 {
        assert!((full.eigenvalues[i] - top.eigenvalues[i]).abs() < 1e-10);
    }
}

#[test]
fn matrix_free_top_k_matches_dense() {
    let g = gaussian(1500, 40, 2);
    let m = g.dot(&g.t());
    let dense = sym_eig(&m, Some(5)).unwrap();
    let op = sym_eig_op(1500, 5, |v| g.dot(&g.t().dot(v))).unwrap();
    for i in 0..5 {
        let rel = (dense.eigenvalues[i] - op.eigenvalues[i]).abs() / dense.eigenvalues[i];
        assert!(rel < 1e-8, "{i}: {rel}");
    }
    let cos = principal_cosines(&dense.eigenvectors, &op.eigenvectors).unwrap();
    assert!(cos.iter().all(|&c| c > 1.0 - 1e-8));
}

#[test]
fn asymmetric_input_is_rejected() {
    let m = array![[1.0, 2.0], [0.0, 1.0]];
    assert!(sym_eig(&m, None).is_err());
}

#[test]
fn svd_small_cases() {
    let s = svd_thin(&Matrix::eye(2)).unwrap();
    assert_eq!(s.singular_values.to_vec(), vec![1.0, 1.0]);
    let s = svd_thin(&array![[3.0], [4.0]]).unwrap();
    assert!((s.singular_values[0] - 5.0).abs() < 1e-14);
}

#[test]
fn svd_matches_gram_eigenvalues() {
    let m = gaussian(200, 10, 5);
    let s = svd_thin(&m).unwrap();
    let (gram_vals, _) = jacobi_eig(&m.t().dot(&m));
    for (sv, ev) in s.singular_values.iter().zip(&gram_vals) {
        assert!((sv - ev.sqrt()).abs() < 1e-8);
    }
    assert!(max_abs_diff(&s.reconstruct(), &m) < 1e-10);
}

#[test]
fn pinv_small_cases() {
    let i3 = Matrix::eye(3);
    assert!(max_abs_diff(&pinv(&i3, PINV_TOL).unwrap(), &i3) < 1e-14);
    let p = pinv(&array![[2.0, 0.0], [0.0, 0.0]], PINV_TOL).unwrap();
    assert!(max_abs_diff(&p, &array![[0.5, 0.0], [0.0, 0.0]]) < 1e-14);
}

#[test]
fn pinv_penrose_identities() {
    let m = gaussian(20, 5, 8);
    let p = pinv(&m, PINV_TOL).unwrap();
    let mp = m.dot(&p);
    let pm = p.dot(&m);
    assert!(max_abs_diff(&mp.dot(&m), &m) < 1e-9);
    assert!(max_abs_diff(&pm.dot(&p), &p) < 1e-9);
    assert!(max_abs_diff(&mp, &mp.t().to_owned()) < 1e-9);
    assert!(max_abs_diff(&pm, &pm.t().to_owned()) < 1e-9);
}

#[test]
fn hadamard_small_cases() {
    let m = array![[1.0, 2.0], [3.0, 4.0]];
    assert_eq!(hadamard_pow(&m, 1).unwrap(), m);
    assert_eq!(hadamard_pow(&m, 2).unwrap(), array![[1.0, 4.0], [9.0, 16.0]]);
    assert!(matches!(hadamard_pow(&m, 0), Err(AslnError::InvalidArgument(_))));
}

#[test]
fn reconstruction_at_large_size() {
    let m = random_symmetric(1200, 21);
    let d = sym_eig(&m, None).unwrap();
    assert!(frobenius(&(d.reconstruct() - &m)) <= 1e-8 * frobenius(&m));
}

fn symmetric_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..24, any::<u64>()).prop_map(|(n, seed)| random_symmetric(n, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eig_reconstructs(m in symmetric_strategy()) {
        let d = sym_eig(&m, None).unwrap();
        prop_assert!(frobenius(&(d.reconstruct() - &m)) <= 1e-8 * frobenius(&m).max(1e-300));
        for w in d.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eig_is_bitwise_deterministic(m in symmetric_strategy()) {
        prop_assert_eq!(sym_eig(&m, None).unwrap(), sym_eig(&m, None).unwrap());
    }

    #[test]
    fn pinv_is_an_involution(rows in 1usize..15, extra in 0usize..10, seed in any::<u64>()) {
        let m = gaussian(rows + extra, rows, seed);
        let back = pinv(&pinv(&m, PINV_TOL).unwrap(), PINV_TOL).unwrap();
        prop_assert!(max_abs_diff(&back, &m) < 1e-8);
    }

    #[test]
    fn hadamard_keeps_symmetry(m in symmetric_strategy(), n in 1u32..5) {
        let h = hadamard_pow(&m, n).unwrap();
        prop_assert_eq!(h.t().to_owned(), h);
    }
}
