//! Recovery-quality measures for subspaces and separated sources.

use ndarray::{ArrayView2, Axis};
use serde::Serialize;

use crate::error::{AslnError, Result};
use crate::spectral::Matrix;

/// `1 - tr(P^T U U^T P) / k` for column-orthonormal `P`, `U` of equal shape.
pub fn subspace_error(p_m: &Matrix, u_l: &Matrix) -> Result<f64> {
    if p_m.dim() != u_l.dim() || p_m.ncols() == 0 {
        return Err(AslnError::Dimension(format!(
            "subspace bases {:?} and {:?}",
            p_m.dim(),
            u_l.dim()
        )));
    }
    let overlap = p_m.t().dot(u_l);
    let captured = overlap.iter().map(|v| v * v).sum::<f64>() / p_m.ncols() as f64;
    Ok((1.0 - captured).clamp(0.0, 1.0))
}

/// Matching of estimated components to sources.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    /// `permutation[i]` is the estimate column that encodes source `i`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// Sum of matched absolute correlations.
    pub score: f64,
}

impl Alignment {
    /// Reorders and sign-flips the columns of `u_hat` to line up with the
    /// sources.
    pub fn apply(&self, u_hat: ArrayView2<f64>) -> Matrix {
        let mut out = Matrix::zeros((u_hat.nrows(), self.permutation.len()));
        for (i, (&col, &sign)) in self.permutation.iter().zip(&self.signs).enumerate() {
            out.column_mut(i).assign(&(&u_hat.column(col) * sign));
        }
        out
    }
}

/// Pearson correlations `corr(u_hat_a, s_b)`.
pub fn correlation_matrix(u_hat: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Matrix> {
    if u_hat.dim() != s.dim() || u_hat.nrows() < 2 {
        return Err(AslnError::Dimension(format!(
            "estimates {:?} vs sources {:?}",
            u_hat.dim(),
            s.dim()
        )));
    }
    let cov = cross_covariance(u_hat, s);
    let sd = |m: ArrayView2<f64>| {
        let mu = m.mean_axis(Axis(0)).expect("rows");
        let c = &m - &mu;
        (&c * &c).mean_axis(Axis(0)).expect("rows").mapv(f64::sqrt)
    };
    let su = sd(u_hat);
    let ss = sd(s);
    for (name, v) in [("estimate", &su), ("source", &ss)] {
        if let Some(i) = v.iter().position(|&x| x.is_nan() || x <= 0.0) {
            return Err(AslnError::Alignment(format!("{name} column {i} has zero variance")));
        }
    }
    let mut corr = cov;
    for ((a, b), v) in corr.indexed_iter_mut() {
        *v /= su[a] * ss[b];
    }
    Ok(corr)
}

fn cross_covariance(u: ArrayView2<f64>, s: ArrayView2<f64>) -> Matrix {
    let uc = &u - &u.mean_axis(Axis(0)).expect("rows");
    let sc = &s - &s.mean_axis(Axis(0)).expect("rows");
    uc.t().dot(&sc) / u.nrows() as f64
}

/// Permutation and signs maximising the summed absolute correlation.
pub fn align_sources(u_hat: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Alignment> {
    let corr = correlation_matrix(u_hat, s)?;
    let k = corr.ncols();
    // Rows are sources, columns are estimates.
    let cost = Matrix::from_shape_fn((k, k), |(i, j)| -corr[[j, i]].abs());
    let permutation = hungarian(&cost);
    let signs = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| if corr[[j, i]] < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let score = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| corr[[j, i]].abs())
        .sum();
    Ok(Alignment {
        permutation,
        signs,
        score,
    })
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres
/// with row potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &Matrix) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "square cost matrix");
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// `E[|s - u|^2] / k` for already aligned estimates.
pub fn bss_mse(u_aligned: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<f64> {
    if u_aligned.dim() != s.dim() || s.is_empty() {
        return Err(AslnError::Dimension(format!(
            "estimates {:?} vs sources {:?}",
            u_aligned.dim(),
            s.dim()
        )));
    }
    let diff = &u_aligned - &s;
    Ok(diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64)
}

/// `Cov[u_i, s_j]` as a `k x k` matrix, optionally in absolute value.
pub fn source_encoder_cov(u_hat: ArrayView2<f64>, s: ArrayView2<f64>, absolute: bool) -> Result<Matrix> {
    if u_hat.nrows() != s.nrows() || u_hat.nrows() < 2 {
        return Err(AslnError::Dimension(format!(
            "estimates {:?} vs sources {:?}",
            u_hat.dim(),
            s.dim()
        )));
    }
    let mut cov = cross_covariance(u_hat, s);
    if absolute {
        cov.mapv_inplace(f64::abs);
    }
    Ok(cov)
}

/// `(min |diag|, max |off-diag|)` of a square matrix.
pub fn diagonal_dominance(m: &Matrix) -> (f64, f64) {
    let mut diag_min = f64::INFINITY;
    let mut off_max = 0.0_f64;
    for ((i, j), &v) in m.indexed_iter() {
        if i == j {
            diag_min = diag_min.min(v.abs());
        } else {
            off_max = off_max.max(v.abs());
        }
    }
    (diag_min, off_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub subspace_error: f64,
    pub bss_mse: f64,
    pub diag_cov_min: f64,
    pub offdiag_cov_max: f64,
}

impl MetricsRecord {
    /// Aligns `u_hat` to `s` and scores it; `subspace_error` is passed
    /// through.
    pub fn evaluate(u_hat: ArrayView2<f64>, s: ArrayView2<f64>, subspace_error: f64) -> Result<Self> {
        let alignment = align_sources(u_hat, s)?;
        let aligned = alignment.apply(u_hat);
        let cov = source_encoder_cov(aligned.view(), s, true)?;
        let (diag_cov_min, offdiag_cov_max) = diagonal_dominance(&cov);
        Ok(Self {
            subspace_error,
            bss_mse: bss_mse(aligned.view(), s)?,
            diag_cov_min,
            offdiag_cov_max,
        })
    }
}
