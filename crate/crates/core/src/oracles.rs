//! Numerical checks of the three lemmas behind the linearisation result,
//! independent of the encoders.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{AslnError, Result};
use crate::generative::{Nonlinearity, SourceDistribution};
use crate::quadrature::GaussianRule;
use crate::rng::{shard_stream, stream};
use crate::spectral::{hadamard_pow, principal_cosines, svd_thin, sym_eig, Matrix, Vector};

/// How a measured quantity is compared with its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "tol", rename_all = "kebab-case")]
pub enum Comparison {
    /// `|measured - predicted| <= tol * |predicted|`
    Relative(f64),
    /// `|measured - predicted| <= tol`
    Absolute(f64),
    /// `measured >= predicted`
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaEntry {
    pub name: String,
    pub predicted: f64,
    pub measured: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl LemmaEntry {
    pub fn new(name: &str, predicted: f64, measured: f64, comparison: Comparison) -> Self {
        let pass = match comparison {
            Comparison::Relative(tol) => (measured - predicted).abs() <= tol * predicted.abs(),
            Comparison::Absolute(tol) => (measured - predicted).abs() <= tol,
            Comparison::AtLeast => measured >= predicted,
        };
        Self {
            name: name.to_string(),
            predicted,
            measured,
            comparison,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma: u8,
    pub entries: Vec<LemmaEntry>,
    pub pass: bool,
}

impl LemmaReport {
    fn new(lemma: u8, entries: Vec<LemmaEntry>) -> Self {
        let pass = entries.iter().all(|e| e.pass);
        Self {
            lemma,
            entries,
            pass,
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Cov[g(v), g(w)]` for jointly Gaussian `v`, `w` with standard deviations
/// `sigma_v`, `sigma_w` and correlation `c`, as the truncated series
/// `sum_{n=1}^{n_max} E[g^(n)(v)] E[g^(n)(w)] (sigma_v sigma_w c)^n / n!`.
/// Derivative expectations use `E[g^(n)(sigma xi)] = E[g(sigma xi) He_n(xi)] / sigma^n`.
pub fn lemma2_series(
    g: Nonlinearity,
    sigma_v: f64,
    sigma_w: f64,
    c: f64,
    n_max: usize,
) -> Result<f64> {
    check_lemma2_args(sigma_v, sigma_w, c)?;
    if n_max == 0 {
        return Err(AslnError::InvalidArgument("n_max must be at least 1".into()));
    }
    let rule = GaussianRule::default();
    let hv = rule.hermite_moments(|x| g.apply(sigma_v * x), n_max);
    let hw = rule.hermite_moments(|x| g.apply(sigma_w * x), n_max);
    let mut total = 0.0;
    for n in 1..=n_max {
        let dv = hv[n] / sigma_v.powi(n as i32);
        let dw = hw[n] / sigma_w.powi(n as i32);
        total += dv * dw * (sigma_v * sigma_w * c).powi(n as i32) / factorial(n);
    }
    Ok(total)
}

fn check_lemma2_args(sigma_v: f64, sigma_w: f64, c: f64) -> Result<()> {
    if c.is_nan() || c.abs() >= 1.0 {
        return Err(AslnError::InvalidArgument(format!("correlation {c} outside (-1, 1)")));
    }
    if sigma_v.is_nan() || sigma_w.is_nan() || sigma_v <= 0.0 || sigma_w <= 0.0 {
        return Err(AslnError::InvalidArgument(format!(
            "standard deviations must be positive, got {sigma_v}, {sigma_w}"
        )));
    }
    Ok(())
}

/// Monte-Carlo estimate of a quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Paired Monte-Carlo estimate of `Cov[g(v), g(w)]`.
pub fn lemma2_monte_carlo(
    g: Nonlinearity,
    sigma_v: f64,
    sigma_w: f64,
    c: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_lemma2_args(sigma_v, sigma_w, c)?;
    if samples < 2 {
        return Err(AslnError::InvalidArgument("need at least 2 samples".into()));
    }
    let mut rng = stream(seed, "lemma2");
    let r = (1.0 - c * c).sqrt();
    let mut gv = Vec::with_capacity(samples);
    let mut gw = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        gv.push(g.apply(sigma_v * a));
        gw.push(g.apply(sigma_w * (c * a + r * b)));
    }
    let n = samples as f64;
    let mv = gv.iter().sum::<f64>() / n;
    let mw = gw.iter().sum::<f64>() / n;
    let prods: Vec<f64> = gv.iter().zip(&gw).map(|(x, y)| (x - mv) * (y - mw)).collect();
    Ok(mean_and_stderr(&prods))
}

fn mean_and_stderr(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

/// Spectral summary of the Hadamard powers of `A A^T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma3Summary {
    /// Mean of the top `N_s` eigenvalues of the cube, against `3 N_f / N_s^2`.
    pub cube_major_mean: f64,
    pub cube_major_min: f64,
    /// Largest minor eigenvalue of the cube, against `max(1, N_f / N_s^3)`.
    pub cube_minor_max: f64,
    /// `cube_major_min / cube_minor_max`.
    pub gap_ratio: f64,
    /// Top eigenvalue of the square, against `N_f / N_s`.
    pub square_top: f64,
    /// `|v . 1| / sqrt(N_f)` for the top eigenvector of the square.
    pub square_uniform_overlap: f64,
    /// Mean principal-angle cosine between the cube's major eigenspace and
    /// `col(A)`.
    pub alignment: f64,
}

pub fn lemma3_summary(a: &Matrix) -> Result<Lemma3Summary> {
    let (n_f, n_s) = a.dim();
    if n_s == 0 || n_s >= n_f {
        return Err(AslnError::Dimension(format!("A is {n_f}x{n_s}; need N_f > N_s >= 1")));
    }
    let gram = a.dot(&a.t());
    let cube = sym_eig(&hadamard_pow(&gram, 3)?, Some(n_s + 1))?;
    let square = sym_eig(&hadamard_pow(&gram, 2)?, Some(1))?;
    let major = cube.eigenvalues.slice(ndarray::s![..n_s]);
    let cube_major_mean = major.sum() / n_s as f64;
    let cube_major_min = major[n_s - 1];
    let cube_minor_max = cube.eigenvalues[n_s];
    let top = square.eigenvectors.column(0);
    let square_uniform_overlap = top.sum().abs() / (n_f as f64).sqrt();
    let u_a = svd_thin(a)?.left;
    let vecs = cube.eigenvectors.slice(ndarray::s![.., ..n_s]).to_owned();
    let cos = principal_cosines(&vecs, &u_a)?;
    Ok(Lemma3Summary {
        cube_major_mean,
        cube_major_min,
        cube_minor_max,
        gap_ratio: cube_major_min / cube_minor_max,
        square_top: square.eigenvalues[0],
        square_uniform_overlap,
        alignment: cos.sum() / n_s as f64,
    })
}

/// Compares [`lemma3_summary`] with the predicted spectra.
pub fn lemma3_check(a: &Matrix) -> Result<LemmaReport> {
    let (n_f, n_s) = a.dim();
    let (nf, ns) = (n_f as f64, n_s as f64);
    let s = lemma3_summary(a)?;
    let entries = vec![
        LemmaEntry::new("cube major mean", 3.0 * nf / (ns * ns), s.cube_major_mean, Comparison::Relative(0.25)),
        LemmaEntry::new("cube gap ratio", 5.0, s.gap_ratio, Comparison::AtLeast),
        LemmaEntry::new("square top eigenvalue", nf / ns, s.square_top, Comparison::Relative(0.25)),
        LemmaEntry::new("square uniform overlap", 0.9, s.square_uniform_overlap, Comparison::AtLeast),
        LemmaEntry::new("cube eigenspace alignment", 0.9, s.alignment, Comparison::AtLeast),
    ];
    Ok(LemmaReport::new(3, entries))
}

/// Seeded `N_f x N_s` matrix with `N(0, 1/N_s)` entries.
pub fn gaussian_mixing(n_f: usize, n_s: usize, seed: u64, purpose: &str) -> Matrix {
    let mut rng = stream(seed, purpose);
    let sd = (1.0 / n_s as f64).sqrt();
    Matrix::from_shape_simple_fn((n_f, n_s), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    })
}

/// Test functions of `y = A s` with known Gaussian expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma1Function {
    /// `y_i^4`
    Fourth,
    /// `y_i^2 y_{i+1}^2`
    PairSquare,
}

impl Lemma1Function {
    pub fn name(&self) -> &'static str {
        match self {
            Lemma1Function::Fourth => "fourth",
            Lemma1Function::PairSquare => "pair-square",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma1Point {
    pub n_s: usize,
    /// `E_MC[F] - E_N[F]`, averaged over the probed units.
    pub deviation: f64,
    pub stderr: f64,
    /// `kappa` times the exact quartic weight of the drawn `A`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Probe {
    pub function: Lemma1Function,
    pub source: SourceDistribution,
    pub points: Vec<Lemma1Point>,
    /// Least-squares slope of `log |deviation|` against `log N_s`.
    pub slope: f64,
    /// Standard error of `slope` propagated from the per-point errors.
    pub slope_stderr: f64,
    /// Set when the Monte-Carlo error exceeds the deviation at the largest
    /// `N_s`.
    pub inconclusive: bool,
    /// Pooled `E[s^4]` of the drawn sources.
    pub fourth_moment: Estimate,
}

/// Probes how fast `E[F(y)]` approaches its Gaussian value as `N_s` grows,
/// with `y = A s` over `units` rows of `A`.
pub fn lemma1_probe(
    source: SourceDistribution,
    function: Lemma1Function,
    ns_grid: &[usize],
    t: usize,
    units: usize,
    seed: u64,
) -> Result<Lemma1Probe> {
    if ns_grid.len() < 3 {
        return Err(AslnError::InvalidArgument("need at least 3 values of N_s".into()));
    }
    if t < 2 || units < 2 || ns_grid.contains(&0) {
        return Err(AslnError::InvalidArgument(format!(
            "need T >= 2, units >= 2, N_s >= 1; got {t}, {units}, {ns_grid:?}"
        )));
    }
    let kappa = source.kurtosis();
    let mut points = Vec::with_capacity(ns_grid.len());
    let mut m4 = Vec::new();
    for &n_s in ns_grid {
        let a = gaussian_mixing(units, n_s, seed, &format!("lemma1-mixing-{n_s}"));
        let gram = a.dot(&a.t());
        let a4 = a.mapv(|v| v.powi(4));
        let a2 = a.mapv(|v| v * v);
        // Gaussian expectation and exact fourth-cumulant correction per unit.
        let (gauss, quartic): (Vec<f64>, Vec<f64>) = (0..units)
            .map(|i| match function {
                Lemma1Function::Fourth => (3.0 * gram[[i, i]].powi(2), a4.row(i).sum()),
                Lemma1Function::PairSquare => {
                    let j = (i + 1) % units;
                    (
                        gram[[i, i]] * gram[[j, j]] + 2.0 * gram[[i, j]].powi(2),
                        a2.row(i).dot(&a2.row(j)),
                    )
                }
            })
            .unzip();
        let gauss_mean = gauss.iter().sum::<f64>() / units as f64;
        let predicted = kappa * quartic.iter().sum::<f64>() / units as f64;

        let mut per_sample = Vec::with_capacity(t);
        let chunk = 4096;
        let mut shard = 0u64;
        let mut done = 0;
        while done < t {
            let rows = chunk.min(t - done);
            let mut rng = shard_stream(seed, &format!("lemma1-sources-{n_s}"), shard);
            let s = Matrix::from_shape_simple_fn((rows, n_s), || source.sample(&mut rng));
            if n_s == ns_grid[0] {
                m4.extend(s.iter().map(|v| v.powi(4)));
            }
            let y = s.dot(&a.t());
            for row in y.rows() {
                let f: f64 = match function {
                    Lemma1Function::Fourth => row.iter().map(|v| v.powi(4)).sum(),
                    Lemma1Function::PairSquare => (0..units)
                        .map(|i| (row[i] * row[(i + 1) % units]).powi(2))
                        .sum(),
                };
                per_sample.push(f / units as f64 - gauss_mean);
            }
            done += rows;
            shard += 1;
        }
        let est = mean_and_stderr(&per_sample);
        points.push(Lemma1Point {
            n_s,
            deviation: est.value,
            stderr: est.stderr,
            predicted,
        });
    }
    let (slope, slope_stderr) = log_slope(&points);
    let last = points.last().expect("non-empty grid");
    Ok(Lemma1Probe {
        function,
        source,
        inconclusive: last.stderr > last.deviation.abs(),
        points,
        slope,
        slope_stderr,
        fourth_moment: mean_and_stderr(&m4),
    })
}

/// Unweighted least-squares slope in log-log coordinates, with the error
/// propagated from `stderr / |deviation|` on each point.
fn log_slope(points: &[Lemma1Point]) -> (f64, f64) {
    let xs: Vector = points.iter().map(|p| (p.n_s as f64).ln()).collect();
    let ys: Vector = points.iter().map(|p| p.deviation.abs().ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.sum() / n;
    let ym = ys.sum() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let slope = xs.iter().zip(ys.iter()).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>() / sxx;
    let var: f64 = points
        .iter()
        .zip(xs.iter())
        .map(|(p, x)| ((x - xm) / sxx).powi(2) * (p.stderr / p.deviation.abs()).powi(2))
        .sum();
    (slope, var.sqrt())
}

/// Summarises a probe against the `1/N_s` law: slope within `slope_tol` of
/// `-1` and each deviation within 3 standard errors of its exact value.
pub fn lemma1_report(probe: &Lemma1Probe, slope_tol: f64) -> LemmaReport {
    let mut entries = vec![LemmaEntry::new(
        "log-log slope",
        -1.0,
        probe.slope,
        Comparison::Absolute(slope_tol),
    )];
    for p in &probe.points {
        entries.push(LemmaEntry::new(
            &format!("deviation at N_s={}", p.n_s),
            p.predicted,
            p.deviation,
            Comparison::Absolute(3.0 * p.stderr),
        ));
    }
    entries.push(LemmaEntry::new(
        "source fourth moment",
        probe.source.fourth_moment(),
        probe.fourth_moment.value,
        Comparison::Absolute(3.0 * probe.fourth_moment.stderr),
    ));
    LemmaReport::new(1, entries)
}

/// Series against Monte Carlo for one `(g, c)` pair at unit variances.
pub fn lemma2_check(g: Nonlinearity, c: f64, n_max: usize, samples: usize, seed: u64) -> Result<LemmaReport> {
    let series = lemma2_series(g, 1.0, 1.0, c, n_max)?;
    let mc = lemma2_monte_carlo(g, 1.0, 1.0, c, samples, seed)?;
    let entries = vec![LemmaEntry::new(
        &format!("{g} covariance at c={c}"),
        series,
        mc.value,
        Comparison::Absolute(3.0 * mc.stderr),
    )];
    Ok(LemmaReport::new(2, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_series_is_correlation() {
        let v = lemma2_series(Nonlinearity::Identity, 1.0, 1.0, 0.37, 8).unwrap();
        assert!((v - 0.37).abs() < 1e-14);
        // Scaled inputs: Cov[v, w] = sigma_v sigma_w c.
        let v = lemma2_series(Nonlinearity::Identity, 2.0, 0.5, 0.37, 8).unwrap();
        assert!((v - 0.37).abs() < 1e-14);
    }

    #[test]
    fn cube_series_closed_form() {
        let v = lemma2_series(Nonlinearity::Cube, 1.0, 1.0, 0.3, 8).unwrap();
        assert!((v - 2.862).abs() < 1e-12);
    }

    #[test]
    fn rejects_unit_correlation() {
        assert!(lemma2_series(Nonlinearity::Tanh, 1.0, 1.0, 1.0, 8).is_err());
        assert!(lemma2_monte_carlo(Nonlinearity::Tanh, 1.0, 1.0, -1.5, 10, 1).is_err());
        assert!(lemma2_series(Nonlinearity::Tanh, 1.0, 1.0, 0.2, 0).is_err());
    }

    #[test]
    fn comparison_rules() {
        assert!(LemmaEntry::new("x", 10.0, 12.0, Comparison::Relative(0.25)).pass);
        assert!(!LemmaEntry::new("x", 10.0, 13.0, Comparison::Relative(0.25)).pass);
        assert!(LemmaEntry::new("x", 5.0, 5.0, Comparison::AtLeast).pass);
        assert!(!LemmaEntry::new("x", 0.0, 0.2, Comparison::Absolute(0.1)).pass);
    }
}
