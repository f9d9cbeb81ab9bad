//! Reference implementations used as independent oracles.
#![allow(dead_code)]

use asln_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
}

pub fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let g = gaussian(n, n, seed);
    (&g + &g.t()) * 0.5
}

/// Cyclic Jacobi rotations. Eigenvalues descending, eigenvectors in columns.
pub fn jacobi_eig(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = Matrix::eye(n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let vals = idx.iter().map(|&i| a[[i, i]]).collect();
    let vecs = Matrix::from_shape_fn((n, n), |(r, c)| v[[r, idx[c]]]);
    (vals, vecs)
}

/// Gauss-Hermite nodes and weights for the standard normal density
/// (Golub-Welsch on the probabilists' Jacobi matrix).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = Matrix::zeros((n, n));
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[[k - 1, k]] = b;
        j[[k, k - 1]] = b;
    }
    let (vals, vecs) = jacobi_eig(&j);
    let weights = (0..n).map(|i| vecs[[0, i]] * vecs[[0, i]]).collect();
    (vals, weights)
}

pub fn gh_expect(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(n);
    x.iter().zip(&w).map(|(&x, &w)| w * f(x)).sum()
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
