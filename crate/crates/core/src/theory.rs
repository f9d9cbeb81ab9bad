//! Closed-form predictions for the linear PCA/ICA cascade.
//!
//! Everything here is a deterministic function of process parameters or of a
//! [`GroundTruth`](crate::GroundTruth); nothing is sampled.

use std::sync::OnceLock;

use ndarray::Axis;

use crate::error::{AslnError, Result};
use crate::generative::Nonlinearity;
use crate::quadrature::GaussianRule;
use crate::spectral::{
    orthonormal_complement, pinv, svd_thin, sym_eig, sym_eig_op, symmetrize, Matrix, Vector,
    PINV_TOL,
};

/// Relative singular-value floor below which `BH` counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) fn default_rule() -> &'static GaussianRule {
    static RULE: OnceLock<GaussianRule> = OnceLock::new();
    RULE.get_or_init(GaussianRule::default)
}

/// Gaussian expectations of a nonlinearity and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCoefficients {
    /// `E[f'(xi)]`
    pub f_bar_prime: f64,
    /// `E[f(xi)^2]`
    pub f_bar_sq: f64,
    /// `E[f'''(xi)]`
    pub f_bar_third: f64,
    pub odd: bool,
}

/// Derivative expectations via `E[f^(n)(xi)] = E[f(xi) He_n(xi)]`, so the
/// distributional derivatives of `sign` and `relu` never appear.
pub fn gaussian_coefficients(nl: Nonlinearity) -> GaussianCoefficients {
    let rule = default_rule();
    let m = rule.hermite_moments(|x| nl.apply(x), 3);
    GaussianCoefficients {
        f_bar_prime: m[1],
        f_bar_sq: rule.expect(|x| nl.apply(x).powi(2)),
        f_bar_third: m[3],
        odd: nl.is_odd(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTerms {
    /// Per-element contribution scaling as `N_s / N_f`.
    pub finite_width: f64,
    /// Per-element contribution scaling as `1 / N_s`.
    pub finite_source: f64,
}

/// Predicted covariance of the linearisation error `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPrediction {
    pub cov_eps: Matrix,
    /// `trace(cov_eps) / N_s`.
    pub per_element_mse: f64,
    /// Split of `per_element_mse`; only the asymptotic form has one.
    pub decomposition: Option<ErrorTerms>,
}

fn check_orthonormal(u: &Matrix, what: &str) -> Result<()> {
    let gram = u.t().dot(u);
    let k = gram.nrows();
    let dev = (&gram - &Matrix::eye(k)).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if dev > 1e-8 {
        return Err(AslnError::InvalidArgument(format!(
            "{what} is not column-orthonormal (max deviation {dev:e})"
        )));
    }
    Ok(())
}

/// Left singular vectors of the first-layer mixing `A`.
pub fn mixing_basis(a: &Matrix) -> Result<Matrix> {
    Ok(svd_thin(a)?.left)
}

/// `U_A^T (B^T B - I)^2 U_A`, evaluated as `Y^T Y` with `Y = B^T B U_A - U_A`.
pub fn anisotropy_delta(b: &Matrix, u_a: &Matrix) -> Result<Matrix> {
    if b.ncols() != u_a.nrows() {
        return Err(AslnError::Dimension(format!(
            "B is {}x{} but U_A has {} rows",
            b.nrows(),
            b.ncols(),
            u_a.nrows()
        )));
    }
    check_orthonormal(u_a, "U_A")?;
    let y = b.t().dot(&b.dot(u_a)) - u_a;
    Ok(symmetrize(&y.t().dot(&y)))
}

fn rank_checked_pinv(bh: &Matrix) -> Result<Matrix> {
    let s = svd_thin(bh)?.singular_values;
    let max = s.iter().cloned().fold(0.0_f64, f64::max);
    if let Some((index, &value)) = s.iter().enumerate().find(|(_, &v)| v <= RANK_TOL * max) {
        return Err(AslnError::Rank {
            index,
            value,
            threshold: RANK_TOL * max,
        });
    }
    if bh.ncols() > bh.nrows() || max == 0.0 {
        return Err(AslnError::Singular(format!(
            "BH ({}x{}) has no full column rank",
            bh.nrows(),
            bh.ncols()
        )));
    }
    pinv(bh, PINV_TOL)
}

/// `Cov[eps] = (BH)^+ B Sigma B^T (BH)^+T`, exact for the given ground truth.
pub fn error_cov_general(bh: &Matrix, b: &Matrix, sigma: &Matrix) -> Result<ErrorPrediction> {
    if b.nrows() != bh.nrows() || b.ncols() != sigma.nrows() || !sigma.is_square() {
        return Err(AslnError::Dimension(format!(
            "BH {:?}, B {:?}, Sigma {:?}",
            bh.dim(),
            b.dim(),
            sigma.dim()
        )));
    }
    let proj = rank_checked_pinv(bh)?.dot(b);
    let cov_eps = symmetrize(&proj.dot(sigma).dot(&proj.t()));
    let per_element_mse = cov_eps.diag().sum() / cov_eps.nrows() as f64;
    Ok(ErrorPrediction {
        cov_eps,
        per_element_mse,
        decomposition: None,
    })
}

/// Large-`N_f`, large-`N_s` form of the error covariance for odd `f`:
/// `(N_s/N_f)(fsq/fp^2 - 1)(I + Delta) + f3^2/(2 N_s fp^2) I`.
pub fn error_cov_asymptotic(
    n_s: usize,
    n_f: usize,
    coeffs: &GaussianCoefficients,
    delta: &Matrix,
) -> Result<ErrorPrediction> {
    if !coeffs.odd {
        return Err(AslnError::NotOdd(format!("{coeffs:?}")));
    }
    if delta.dim() != (n_s, n_s) {
        return Err(AslnError::Dimension(format!(
            "Delta is {:?}, expected {n_s}x{n_s}",
            delta.dim()
        )));
    }
    let fp2 = coeffs.f_bar_prime.powi(2);
    if fp2 == 0.0 {
        return Err(AslnError::Singular("f_bar_prime is zero".into()));
    }
    let width = n_s as f64 / n_f as f64 * (coeffs.f_bar_sq / fp2 - 1.0);
    let source = coeffs.f_bar_third.powi(2) / (2.0 * n_s as f64 * fp2);
    let eye = Matrix::eye(n_s);
    let cov_eps = (&eye + delta) * width + &eye * source;
    let k = n_s as f64;
    let finite_width = width * (k + delta.diag().sum()) / k;
    Ok(ErrorPrediction {
        per_element_mse: finite_width + source,
        cov_eps,
        decomposition: Some(ErrorTerms {
            finite_width,
            finite_source: source,
        }),
    })
}

/// `max eig(B Sigma B^T) / min eig(H^T B^T B H)`; infinite when the signal
/// spectrum touches zero.
pub fn eigenvalue_ratio(bh: &Matrix, b: &Matrix, sigma: &Matrix) -> Result<f64> {
    let s_l = svd_thin(bh)?.singular_values;
    eigenvalue_ratio_parts(b, sigma, &s_l)
}

/// [`eigenvalue_ratio`] with the singular values of `BH` already at hand.
pub fn eigenvalue_ratio_parts(b: &Matrix, sigma: &Matrix, s_l: &Vector) -> Result<f64> {
    let noise = max_noise_eigenvalue(b, sigma)?;
    let min_signal = s_l.iter().fold(f64::INFINITY, |a, &v| a.min(v * v));
    if noise == 0.0 {
        return Ok(0.0);
    }
    if min_signal == 0.0 || s_l.is_empty() {
        return Ok(f64::INFINITY);
    }
    Ok(noise / min_signal)
}

/// `max eig(B Sigma B^T)` without forming the `N_x x N_x` product.
pub fn max_noise_eigenvalue(b: &Matrix, sigma: &Matrix) -> Result<f64> {
    if b.ncols() != sigma.nrows() {
        return Err(AslnError::Dimension(format!(
            "B {:?} and Sigma {:?}",
            b.dim(),
            sigma.dim()
        )));
    }
    // Nonzero spectra of B Sigma B^T and Sigma^(1/2) B^T B Sigma^(1/2) agree;
    // iterate on whichever side is smaller.
    let (n_x, n_f) = b.dim();
    let top = if n_x <= n_f {
        sym_eig_op(n_x, 1, |v| b.dot(&sigma.dot(&b.t().dot(v))))?
    } else {
        let btb = b.t().dot(b);
        let chol = psd_sqrt(sigma)?;
        sym_eig_op(n_f, 1, |v| chol.dot(&btb.dot(&chol.dot(v))))?
    };
    Ok(top.eigenvalues[0].max(0.0))
}

fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(m, None)?;
    let roots = eig.eigenvalues.mapv(|v| v.max(0.0).sqrt());
    let scaled = &eig.eigenvectors * &roots.view().insert_axis(Axis(0));
    Ok(scaled.dot(&eig.eigenvectors.t()))
}

/// First-order perturbation of the signal eigenpairs by the noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    /// `X_NL S_L^-2`, `(N_x - N_s) x N_s`.
    pub e: Matrix,
    /// `S_L^2 + diag(X_LL)`.
    pub corrected_major_eigenvalues: Vector,
    /// `U_L + U_N E`.
    pub corrected_major_vectors: Matrix,
    /// `diag(X_NN)`, descending.
    pub corrected_minor_eigenvalues: Vector,
    /// `trace(E^T E) / N_s`.
    pub subspace_error_estimate: f64,
}

fn check_signal(u_l: &Matrix, s_l: &Vector, n: usize) -> Result<()> {
    if u_l.ncols() != s_l.len() || u_l.nrows() != n {
        return Err(AslnError::Dimension(format!(
            "U_L {:?}, S_L {}, noise {n}x{n}",
            u_l.dim(),
            s_l.len()
        )));
    }
    if let Some(i) = s_l.iter().position(|&v| v == 0.0) {
        return Err(AslnError::Singular(format!("singular value {i} of BH is zero")));
    }
    Ok(())
}

pub fn perturbation_correction(
    u_l: &Matrix,
    s_l: &Vector,
    noise_cov: &Matrix,
) -> Result<PerturbationReport> {
    check_signal(u_l, s_l, noise_cov.nrows())?;
    check_orthonormal(u_l, "U_L")?;
    let u_n0 = orthonormal_complement(u_l)?;
    let nn = noise_cov.dot(&u_n0);
    let rot = sym_eig(&symmetrize(&u_n0.t().dot(&nn)), None)?;
    let u_n = u_n0.dot(&rot.eigenvectors);

    let nu = noise_cov.dot(u_l);
    let x_ll = u_l.t().dot(&nu);
    let x_nl = u_n.t().dot(&nu);
    let inv_s2 = s_l.mapv(|v| 1.0 / (v * v));
    let e = &x_nl * &inv_s2.view().insert_axis(Axis(0));
    let corrected_major_eigenvalues = s_l.mapv(|v| v * v) + x_ll.diag();
    let corrected_major_vectors = u_l + &u_n.dot(&e);
    let subspace_error_estimate = e.iter().map(|v| v * v).sum::<f64>() / s_l.len() as f64;
    Ok(PerturbationReport {
        e,
        corrected_major_eigenvalues,
        corrected_major_vectors,
        corrected_minor_eigenvalues: rot.eigenvalues,
        subspace_error_estimate,
    })
}

/// `trace(E^T E) / N_s` from `N U_L` alone, using
/// `X_NL^T X_NL = (N U_L)^T (N U_L) - X_LL^2`.
pub fn subspace_error_estimate(u_l: &Matrix, s_l: &Vector, noise_u_l: &Matrix) -> Result<f64> {
    check_signal(u_l, s_l, noise_u_l.nrows())?;
    let x_ll = u_l.t().dot(noise_u_l);
    let gram = noise_u_l.t().dot(noise_u_l) - x_ll.t().dot(&x_ll);
    let inv_s2 = s_l.mapv(|v| 1.0 / (v * v));
    let trace: f64 = gram
        .diag()
        .iter()
        .zip(inv_s2.iter())
        .map(|(g, w)| g * w * w)
        .sum();
    Ok(trace.max(0.0) / s_l.len() as f64)
}
