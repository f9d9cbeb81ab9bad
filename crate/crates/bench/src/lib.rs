//! Fixtures shared by the kernel benchmarks.

use asln_core::oracles::gaussian_mixing;
use asln_core::Matrix;
use ndarray::Array2;

/// Symmetric `n x n` matrix `G + G^T` with Gaussian `G`.
pub fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let g = gaussian_mixing(n, n, seed, "bench-sym");
    &g + &g.t()
}

/// Assignment costs `1 - |c|` for a noisy permuted identity, like the
/// correlation matrices seen after ICA.
pub fn assignment_costs(k: usize, seed: u64) -> Matrix {
    let noise = gaussian_mixing(k, k, seed, "bench-cost");
    Array2::from_shape_fn((k, k), |(i, j)| {
        let c = if (i * 7 + 3) % k == j { 0.95 } else { 0.0 } + 0.05 * noise[[i, j]];
        1.0 - c.abs()
    })
}
