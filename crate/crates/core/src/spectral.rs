//! Dense linear-algebra kernel.
//!
//! Everything here is a pure function of its inputs. Symmetric
//! eigendecompositions come back in descending order with a fixed sign
//! convention (the largest-magnitude component of every eigenvector is
//! positive), so identical inputs give identical outputs.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, JobSvd, SVDDC, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{AslnError, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Relative asymmetry tolerated by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default relative cutoff for [`pinv`].
pub const PINV_TOL: f64 = 1e-12;

/// Matrices at most this large are always decomposed densely.
const DENSE_LIMIT: usize = 800;

/// Eigenvalues in descending order and matching orthonormal eigenvectors
/// (one per column).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `P diag(lambda) P^T`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Thin singular value decomposition `M = U diag(s) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdDecomposition {
    pub left: Matrix,
    pub singular_values: Vector,
    pub right: Matrix,
}

impl SvdDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        let scaled = &self.left * &self.singular_values;
        scaled.dot(&self.right.t())
    }
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Fails unless `m` is square and symmetric to within `rel_tol` of its
/// largest entry.
pub fn ensure_symmetric(m: &Matrix, rel_tol: f64) -> Result<()> {
    let (r, c) = m.dim();
    if r != c {
        return Err(AslnError::Dimension(format!(
            "expected a square matrix, got {r}x{c}"
        )));
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    for i in 0..r {
        for j in (i + 1)..c {
            if (m[[i, j]] - m[[j, i]]).abs() > rel_tol * scale {
                return Err(AslnError::Dimension(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
        }
    }
    Ok(())
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    let mut out = m + &m.t();
    out *= 0.5;
    out
}

/// Symmetric eigendecomposition, full or restricted to the top `k` pairs.
///
/// Large matrices with a small `k` go through Lanczos with full
/// reorthogonalisation; every Ritz pair must reach a residual below
/// `1e-10 * |lambda_max|` or the dense solver is used instead.
pub fn sym_eig(m: &Matrix, k: Option<usize>) -> Result<SpectralDecomposition> {
    ensure_symmetric(m, SYMMETRY_TOL)?;
    let n = m.nrows();
    let k = k.unwrap_or(n);
    if k > n {
        return Err(AslnError::Dimension(format!(
            "requested {k} eigenpairs of a {n}x{n} matrix"
        )));
    }
    if n == 0 || k == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vector::zeros(0),
            eigenvectors: Matrix::zeros((n, 0)),
        });
    }
    let sym = symmetrize(m);
    if n > DENSE_LIMIT && k * 10 <= n {
        if let Some(top) = lanczos_top(n, k, &|v: &Vector| sym.dot(v)) {
            return Ok(top);
        }
    }
    dense_eig(&sym, k)
}

fn dense_eig(sym: &Matrix, k: usize) -> Result<SpectralDecomposition> {
    let n = sym.nrows();
    let (values, vectors) = sym.eigh(UPLO::Lower)?;
    // LAPACK returns ascending order; ties keep LAPACK's column order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(assemble(&values, &vectors, &order))
}

fn assemble(values: &Vector, vectors: &Matrix, order: &[usize]) -> SpectralDecomposition {
    let n = vectors.nrows();
    let mut eigenvalues = Vector::zeros(order.len());
    let mut eigenvectors = Matrix::zeros((n, order.len()));
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = values[src];
        eigenvectors.column_mut(dst).assign(&vectors.column(src));
    }
    fix_signs(&mut eigenvectors);
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
/// Returns the applied signs.
pub fn fix_signs(vectors: &mut Matrix) -> Vec<f64> {
    let mut signs = Vec::with_capacity(vectors.ncols());
    for mut col in vectors.columns_mut() {
        let mut best = 0.0_f64;
        let mut best_val = 0.0_f64;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
        if best_val < 0.0 {
            col.mapv_inplace(|v| -v);
            signs.push(-1.0);
        } else {
            signs.push(1.0);
        }
    }
    signs
}

/// Top `k` eigenpairs of the symmetric operator `apply` on `R^n`, without
/// forming its matrix unless Lanczos fails to converge.
pub fn sym_eig_op<F>(n: usize, k: usize, apply: F) -> Result<SpectralDecomposition>
where
    F: Fn(&Vector) -> Vector,
{
    if k == 0 || k > n {
        return Err(AslnError::Dimension(format!(
            "requested {k} eigenpairs of an operator on R^{n}"
        )));
    }
    if k * 10 <= n {
        if let Some(top) = lanczos_top(n, k, &apply) {
            return Ok(top);
        }
    }
    let mut m = Matrix::zeros((n, n));
    let mut e = Vector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        m.column_mut(j).assign(&apply(&e));
        e[j] = 0.0;
    }
    dense_eig(&symmetrize(&m), k)
}

fn lanczos_top(
    n: usize,
    k: usize,
    apply: &dyn Fn(&Vector) -> Vector,
) -> Option<SpectralDecomposition> {
    let max_steps = n.min((8 * k).max(400));
    let mut basis = Matrix::zeros((n, max_steps));
    let mut alpha = Vec::with_capacity(max_steps);
    let mut beta: Vec<f64> = Vec::with_capacity(max_steps);

    let mut rng = ChaCha12Rng::seed_from_u64(0x1a2c_2057);
    let mut q = Vector::from_shape_fn(n, |_| rng.random::<f64>() - 0.5);
    q /= q.dot(&q).sqrt();

    let mut next_check = (2 * k + 10).min(max_steps);
    for j in 0..max_steps {
        basis.column_mut(j).assign(&q);
        let mut w = apply(&q);
        let a = q.dot(&w);
        alpha.push(a);
        w.scaled_add(-a, &q);
        if j > 0 {
            w.scaled_add(-beta[j - 1], &basis.column(j - 1));
        }
        let active = basis.slice(s![.., ..=j]);
        for _ in 0..2 {
            let coeffs = active.t().dot(&w);
            w -= &active.dot(&coeffs);
        }
        let b = w.dot(&w).sqrt();

        let exhausted = b <= 1e-14 * alpha.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if j + 1 >= k && (j + 1 == next_check || exhausted || j + 1 == max_steps) {
            next_check = (next_check + next_check / 4 + 10).min(max_steps);
            let steps = j + 1;
            let mut tri = Matrix::zeros((steps, steps));
            for i in 0..steps {
                tri[[i, i]] = alpha[i];
                if i + 1 < steps {
                    tri[[i, i + 1]] = beta[i];
                    tri[[i + 1, i]] = beta[i];
                }
            }
            let (theta, svecs) = tri.eigh(UPLO::Lower).ok()?;
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&x, &y| theta[y].total_cmp(&theta[x]).then(x.cmp(&y)));
            let scale = theta.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
            let converged = order[..k]
                .iter()
                .all(|&i| b * svecs[[steps - 1, i]].abs() <= tol);
            if converged {
                let ritz = basis.slice(s![.., ..steps]).dot(&svecs);
                let mut vals = Vector::zeros(k);
                let mut vecs = Matrix::zeros((n, k));
                for (dst, &src) in order[..k].iter().enumerate() {
                    let v = ritz.column(src);
                    let norm = v.dot(&v).sqrt();
                    vecs.column_mut(dst).assign(&(&v / norm));
                    vals[dst] = theta[src];
                }
                let idx: Vec<usize> = (0..k).collect();
                return Some(assemble(&vals, &vecs, &idx));
            }
        }
        if exhausted {
            return None;
        }
        beta.push(b);
        q = w / b;
    }
    None
}

/// Largest eigenvalue of a symmetric matrix.
pub fn top_eigenvalue(m: &Matrix) -> Result<f64> {
    Ok(sym_eig(m, Some(1))?.eigenvalues[0])
}

/// Thin SVD with `min(rows, cols)` singular values in descending order.
/// Each left singular vector has its largest-magnitude entry positive.
pub fn svd_thin(m: &Matrix) -> Result<SvdDecomposition> {
    let (r, c) = m.dim();
    if r == 0 || c == 0 {
        return Err(AslnError::Dimension(format!(
            "svd of an empty {r}x{c} matrix"
        )));
    }
    let (u, s, vt) = m.svddc(JobSvd::Some)?;
    let mut left = u.ok_or_else(|| AslnError::Dimension("svd returned no U".into()))?;
    let mut right = vt
        .ok_or_else(|| AslnError::Dimension("svd returned no V".into()))?
        .reversed_axes();
    let signs = fix_signs(&mut left);
    for (mut col, sign) in right.columns_mut().into_iter().zip(signs) {
        if sign < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(SvdDecomposition {
        left,
        singular_values: s,
        right,
    })
}

/// Moore-Penrose pseudo-inverse; singular values below `tol * s_max` are
/// treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(AslnError::InvalidArgument(format!(
            "pinv tolerance must lie in (0,1), got {tol}"
        )));
    }
    let svd = svd_thin(m)?;
    let s_max = svd.singular_values.iter().fold(0.0_f64, |a, &v| a.max(v));
    let inv = svd
        .singular_values
        .mapv(|v| if v > tol * s_max && v > 0.0 { 1.0 / v } else { 0.0 });
    let scaled = &svd.right * &inv;
    Ok(scaled.dot(&svd.left.t()))
}

/// Element-wise `n`-th power.
pub fn hadamard_pow(m: &Matrix, n: u32) -> Result<Matrix> {
    if n == 0 {
        return Err(AslnError::InvalidArgument(
            "hadamard power must be at least 1".into(),
        ));
    }
    Ok(m.mapv(|v| v.powi(n as i32)))
}

/// `M^{-1/2}` of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(&symmetrize(m), None)?;
    let floor = eig.eigenvalues[0].abs() * 1e-14;
    if let Some((i, &v)) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .find(|(_, &v)| v <= floor)
    {
        return Err(AslnError::Rank {
            index: i,
            value: v,
            threshold: floor,
        });
    }
    let scale = eig.eigenvalues.mapv(|v| v.powf(-0.5));
    let scaled = &eig.eigenvectors * &scale;
    Ok(scaled.dot(&eig.eigenvectors.t()))
}

/// Closest column-orthonormal matrix (polar factor `U V^T`).
pub fn orthonormalize_columns(m: &Matrix) -> Result<Matrix> {
    let svd = svd_thin(m)?;
    Ok(svd.left.dot(&svd.right.t()))
}

/// Orthonormal basis of the complement of the span of the orthonormal
/// columns of `u`, built from the Householder QR factorisation of `u`.
pub fn orthonormal_complement(u: &Matrix) -> Result<Matrix> {
    let (n, k) = u.dim();
    if k > n {
        return Err(AslnError::Dimension(format!(
            "cannot complete {k} columns in dimension {n}"
        )));
    }
    let mut work = u.clone();
    let mut reflectors: Vec<Vector> = Vec::with_capacity(k);
    for j in 0..k {
        let x = work.slice(s![j.., j]).to_owned();
        let norm = x.dot(&x).sqrt();
        let mut v = x;
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.dot(&v).sqrt();
        if vnorm > 0.0 {
            v /= vnorm;
        }
        let mut block = work.slice_mut(s![j.., j..]);
        let proj = block.t().dot(&v);
        for (mut col, p) in block.columns_mut().into_iter().zip(proj.iter()) {
            col.scaled_add(-2.0 * p, &v);
        }
        reflectors.push(v);
    }
    let mut q = Matrix::zeros((n, n - k));
    for i in 0..(n - k) {
        q[[k + i, i]] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        let mut block = q.slice_mut(s![j.., ..]);
        let proj = block.t().dot(v);
        for (mut col, p) in block.columns_mut().into_iter().zip(proj.iter()) {
            col.scaled_add(-2.0 * p, v);
        }
    }
    Ok(q)
}

/// Cosines of the principal angles between two column-orthonormal bases.
pub fn principal_cosines(u: &Matrix, v: &Matrix) -> Result<Vector> {
    if u.nrows() != v.nrows() {
        return Err(AslnError::Dimension(format!(
            "bases live in {} and {} dimensions",
            u.nrows(),
            v.nrows()
        )));
    }
    Ok(svd_thin(&u.t().dot(v))?.singular_values)
}

/// Accumulates `acc += alpha * rows^T rows` into the upper triangle of `acc`
/// with a rank-k BLAS update. Call [`fill_lower`] once accumulation is done.
pub fn syrk_upper(acc: &mut Matrix, rows: ArrayView2<f64>, alpha: f64) {
    let (t, n) = rows.dim();
    assert_eq!(acc.dim(), (n, n), "accumulator shape");
    if t == 0 || n == 0 {
        return;
    }
    let rows = rows.as_standard_layout();
    assert!(acc.is_standard_layout());
    // SAFETY: both buffers are contiguous row-major with the leading
    // dimensions passed below, and `acc` is exclusively borrowed.
    unsafe {
        cblas_sys::cblas_dsyrk(
            cblas_sys::CBLAS_LAYOUT::CblasRowMajor,
            cblas_sys::CBLAS_UPLO::CblasUpper,
            cblas_sys::CBLAS_TRANSPOSE::CblasTrans,
            n as i32,
            t as i32,
            alpha,
            rows.as_ptr(),
            n as i32,
            1.0,
            acc.as_mut_ptr(),
            n as i32,
        );
    }
}

/// Mirrors the upper triangle into the lower one.
pub fn fill_lower(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            m[[i, j]] = m[[j, i]];
        }
    }
}

/// `B C B^T` for symmetric `C`, returned exactly symmetric.
pub fn congruence(b: &Matrix, c: &Matrix) -> Matrix {
    let bc = b.dot(c);
    let out = bc.dot(&b.t());
    symmetrize(&out)
}

/// Column means of the rows of `m`.
pub fn column_means(m: &Matrix) -> Vector {
    m.mean_axis(Axis(0)).unwrap_or_else(|| Vector::zeros(m.ncols()))
}

/// Population covariance (divides by the row count) of the rows of `m`.
pub fn row_covariance(m: &Matrix) -> Matrix {
    let mean = column_means(m);
    let centered = m - &mean;
    let mut cov = centered.t().dot(&centered);
    cov /= m.nrows().max(1) as f64;
    symmetrize(&cov)
}
