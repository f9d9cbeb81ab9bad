//! The two-layer generative process `x = B f(A s + a)`.
//!
//! Basis values `F` and inputs `X` are deterministic functions of the source
//! draws, so a [`SampleBatch`] stores only the sources and recomputes basis
//! rows chunk by chunk. Second-order statistics of the inputs are obtained as
//! `B Cov[f] B^T`, which equals the empirical `Cov[x]` without ever forming
//! the `T x N_x` input matrix.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{s, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AslnError, Result};
use crate::quadrature::gauss_legendre;
use crate::rng::{shard_stream, stream};
use crate::spectral::{congruence, fill_lower, svd_thin, symmetrize, syrk_upper, Matrix, Vector};

/// Rows generated per RNG shard and per basis chunk.
pub const SHARD_ROWS: usize = 2048;

/// Symmetric truncation point of the truncated-normal sources, in units of
/// the pre-truncation standard deviation.
pub const TRUNCATION: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceDistribution {
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
    /// Normal truncated at `+-TRUNCATION`, rescaled to unit variance.
    TruncatedNormal,
    Gaussian,
}

/// `(variance, fourth moment)` of a standard normal truncated at
/// `+-TRUNCATION`.
fn truncated_moments() -> (f64, f64) {
    static MOMENTS: OnceLock<(f64, f64)> = OnceLock::new();
    *MOMENTS.get_or_init(|| {
        let (x, w) = gauss_legendre(64);
        let half = TRUNCATION / 2.0;
        let mut m = [0.0; 3];
        for (&xi, &wi) in x.iter().zip(&w) {
            let z = half * (xi + 1.0);
            let dens = (-0.5 * z * z).exp();
            m[0] += wi * dens;
            m[1] += wi * dens * z * z;
            m[2] += wi * dens * z.powi(4);
        }
        (m[1] / m[0], m[2] / m[0])
    })
}

impl SourceDistribution {
    pub const ALL: [SourceDistribution; 3] = [
        SourceDistribution::Uniform,
        SourceDistribution::TruncatedNormal,
        SourceDistribution::Gaussian,
    ];

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SourceDistribution::Uniform => {
                let half = 3f64.sqrt();
                rng.random_range(-half..half)
            }
            SourceDistribution::Gaussian => StandardNormal.sample(rng),
            SourceDistribution::TruncatedNormal => {
                let scale = truncated_moments().0.sqrt();
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    if z.abs() <= TRUNCATION {
                        return z / scale;
                    }
                }
            }
        }
    }

    /// `E[s^4]` at unit variance.
    pub fn fourth_moment(&self) -> f64 {
        match self {
            SourceDistribution::Uniform => 9.0 / 5.0,
            SourceDistribution::Gaussian => 3.0,
            SourceDistribution::TruncatedNormal => {
                let (var, m4) = truncated_moments();
                m4 / (var * var)
            }
        }
    }

    /// Excess kurtosis `E[s^4] - 3`.
    pub fn kurtosis(&self) -> f64 {
        self.fourth_moment() - 3.0
    }

    pub fn name(&self) -> &'static str {
        match self {
            SourceDistribution::Uniform => "uniform",
            SourceDistribution::TruncatedNormal => "truncated-normal",
            SourceDistribution::Gaussian => "gaussian",
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            SourceDistribution::Uniform => 0,
            SourceDistribution::TruncatedNormal => 1,
            SourceDistribution::Gaussian => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.tag() == tag)
    }
}

impl fmt::Display for SourceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SourceDistribution {
    type Err = AslnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| AslnError::Config(format!("unknown source distribution '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    Sign,
    Cube,
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    pub const ALL: [Nonlinearity; 5] = [
        Nonlinearity::Sign,
        Nonlinearity::Cube,
        Nonlinearity::Relu,
        Nonlinearity::Tanh,
        Nonlinearity::Identity,
    ];

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Cube => x * x * x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
        }
    }

    pub fn is_odd(&self) -> bool {
        !matches!(self, Nonlinearity::Relu)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::Sign => "sign",
            Nonlinearity::Cube => "cube",
            Nonlinearity::Relu => "relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Identity => "identity",
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Nonlinearity::Sign => 0,
            Nonlinearity::Cube => 1,
            Nonlinearity::Relu => 2,
            Nonlinearity::Tanh => 3,
            Nonlinearity::Identity => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.tag() == tag)
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nonlinearity {
    type Err = AslnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| AslnError::Config(format!("unknown nonlinearity '{s}'")))
    }
}

/// Frozen parameters of one generative process.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeProcess {
    pub n_s: usize,
    pub n_f: usize,
    pub n_x: usize,
    /// `A`, `N_f x N_s`.
    pub mixing: Matrix,
    /// `a`, length `N_f`.
    pub offset: Vector,
    /// `B`, `N_x x N_f`.
    pub readout: Matrix,
    pub nonlinearity: Nonlinearity,
    pub source_dist: SourceDistribution,
    pub seed: u64,
}

fn normal_matrix(seed: u64, purpose: &str, rows: usize, cols: usize, sd: f64) -> Matrix {
    let mut rng = stream(seed, purpose);
    Matrix::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    })
}

impl GenerativeProcess {
    /// Draws `A`, `a ~ N(0, 1/N_s)` and `B ~ N(0, 1/N_f)` from independent
    /// streams of `seed`.
    pub fn build(
        n_s: usize,
        n_f: usize,
        n_x: usize,
        nonlinearity: Nonlinearity,
        source_dist: SourceDistribution,
        seed: u64,
    ) -> Result<Self> {
        if n_s == 0 || n_s > n_f || n_x == 0 {
            return Err(AslnError::Config(format!(
                "need 1 <= N_s <= N_f and N_x >= 1, got N_s={n_s}, N_f={n_f}, N_x={n_x}"
            )));
        }
        let sd_a = (1.0 / n_s as f64).sqrt();
        let mixing = normal_matrix(seed, "mixing", n_f, n_s, sd_a);
        let offset = normal_matrix(seed, "offset", 1, n_f, sd_a).into_shape_with_order(n_f)
            .expect("row vector");
        let readout = normal_matrix(seed, "readout", n_x, n_f, (1.0 / n_f as f64).sqrt());
        Ok(Self {
            n_s,
            n_f,
            n_x,
            mixing,
            offset,
            readout,
            nonlinearity,
            source_dist,
            seed,
        })
    }

    /// Process with explicitly supplied parameters.
    pub fn from_parts(
        mixing: Matrix,
        offset: Vector,
        readout: Matrix,
        nonlinearity: Nonlinearity,
        source_dist: SourceDistribution,
    ) -> Result<Self> {
        let (n_f, n_s) = mixing.dim();
        let n_x = readout.nrows();
        if offset.len() != n_f || readout.ncols() != n_f || n_s == 0 || n_x == 0 {
            return Err(AslnError::Dimension(format!(
                "A is {n_f}x{n_s}, a has {} entries, B is {}x{}",
                offset.len(),
                readout.nrows(),
                readout.ncols()
            )));
        }
        Ok(Self {
            n_s,
            n_f,
            n_x,
            mixing,
            offset,
            readout,
            nonlinearity,
            source_dist,
            seed: 0,
        })
    }

    /// Basis rows `f(A s + a)` for source rows `s`.
    pub fn basis(&self, sources: ArrayView2<f64>) -> Matrix {
        let mut pre = sources.dot(&self.mixing.t());
        pre += &self.offset;
        let nl = self.nonlinearity;
        pre.mapv_inplace(|v| nl.apply(v));
        pre
    }

    /// Input rows `B f(A s + a)` for source rows `s`.
    pub fn inputs(&self, sources: ArrayView2<f64>) -> Matrix {
        self.basis(sources).dot(&self.readout.t())
    }
}

pub fn build_process(
    n_s: usize,
    n_f: usize,
    n_x: usize,
    nonlinearity: Nonlinearity,
    source_dist: SourceDistribution,
    seed: u64,
) -> Result<GenerativeProcess> {
    GenerativeProcess::build(n_s, n_f, n_x, nonlinearity, source_dist, seed)
}

/// `T` i.i.d. draws from a process. Basis values and inputs are recomputed
/// from the stored sources on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// `S`, `T x N_s`.
    pub sources: Matrix,
    /// Empirical `E[f]`.
    pub basis_mean: Vector,
    /// Empirical `E[x] = B E[f]`.
    pub input_mean: Vector,
    pub seed: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.sources.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.nrows() == 0
    }

    /// `F`, `T x N_f`.
    pub fn basis(&self, process: &GenerativeProcess) -> Matrix {
        process.basis(self.sources.view())
    }

    /// `X = F B^T`, `T x N_x`.
    pub fn inputs(&self, process: &GenerativeProcess) -> Matrix {
        process.inputs(self.sources.view())
    }

    /// Inputs for a row range.
    pub fn input_rows(&self, process: &GenerativeProcess, rows: Range<usize>) -> Matrix {
        process.inputs(self.sources.slice(s![rows, ..]))
    }

    /// Calls `visit(first_row, sources, basis)` for consecutive chunks of
    /// `rows`.
    pub fn for_each_chunk<F>(&self, process: &GenerativeProcess, rows: Range<usize>, mut visit: F)
    where
        F: FnMut(usize, ArrayView2<f64>, &Matrix),
    {
        let mut start = rows.start;
        while start < rows.end {
            let end = (start + SHARD_ROWS).min(rows.end);
            let src = self.sources.slice(s![start..end, ..]);
            let basis = process.basis(src);
            visit(start, src, &basis);
            start = end;
        }
    }
}

/// Draws `t` source vectors in shards of [`SHARD_ROWS`] rows; shard `i` uses
/// its own stream of `seed`, so the result does not depend on thread count.
pub fn sample_batch(process: &GenerativeProcess, t: usize, seed: u64) -> Result<SampleBatch> {
    if t < 2 {
        return Err(AslnError::Config(format!("need at least 2 samples, got {t}")));
    }
    let n_s = process.n_s;
    let dist = process.source_dist;
    let shards = t.div_ceil(SHARD_ROWS);
    let blocks: Vec<Matrix> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let rows = SHARD_ROWS.min(t - shard * SHARD_ROWS);
            let mut rng = shard_stream(seed, "sources", shard as u64);
            Matrix::from_shape_simple_fn((rows, n_s), || dist.sample(&mut rng))
        })
        .collect();
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let sources = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| AslnError::Dimension(e.to_string()))?;

    let mut batch = SampleBatch {
        sources,
        basis_mean: Vector::zeros(process.n_f),
        input_mean: Vector::zeros(process.n_x),
        seed,
    };
    let mut sum = Vector::zeros(process.n_f);
    batch.for_each_chunk(process, 0..t, |_, _, basis| {
        sum += &basis.sum_axis(Axis(0));
    });
    batch.basis_mean = sum / t as f64;
    batch.input_mean = process.readout.dot(&batch.basis_mean);
    Ok(batch)
}

/// First and second moments of `(f, s)` over a row range. Covariances are
/// population covariances (divided by the row count).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMoments {
    pub count: usize,
    pub basis_mean: Vector,
    pub source_mean: Vector,
    /// `Cov[f]`, `N_f x N_f`.
    pub basis_cov: Matrix,
    /// `Cov[f, s]`, `N_f x N_s`.
    pub cross_cov: Matrix,
    /// `Cov[s]`, `N_s x N_s`.
    pub source_cov: Matrix,
}

impl BasisMoments {
    /// Two passes over `rows`: means first, then centred rank-k updates.
    pub fn compute(
        process: &GenerativeProcess,
        batch: &SampleBatch,
        rows: Range<usize>,
    ) -> Result<Self> {
        let count = rows.len();
        if count < 2 || rows.end > batch.len() {
            return Err(AslnError::Dimension(format!(
                "row range {rows:?} invalid for a batch of {}",
                batch.len()
            )));
        }
        let (n_f, n_s) = (process.n_f, process.n_s);
        let mut basis_sum = Vector::zeros(n_f);
        batch.for_each_chunk(process, rows.clone(), |_, _, basis| {
            basis_sum += &basis.sum_axis(Axis(0));
        });
        let basis_mean = basis_sum / count as f64;
        let src = batch.sources.slice(s![rows.clone(), ..]);
        let source_mean = src.mean_axis(Axis(0)).expect("non-empty");

        let inv = 1.0 / count as f64;
        let mut basis_cov = Matrix::zeros((n_f, n_f));
        let mut cross_cov = Matrix::zeros((n_f, n_s));
        batch.for_each_chunk(process, rows, |_, sources, basis| {
            let fc = basis - &basis_mean;
            let sc = &sources - &source_mean;
            syrk_upper(&mut basis_cov, fc.view(), inv);
            ndarray::linalg::general_mat_mul(inv, &fc.t(), &sc, 1.0, &mut cross_cov);
        });
        fill_lower(&mut basis_cov);
        let sc = &src - &source_mean;
        let source_cov = symmetrize(&(sc.t().dot(&sc) * inv));
        Ok(Self {
            count,
            basis_mean,
            source_mean,
            basis_cov,
            cross_cov,
            source_cov,
        })
    }

    /// Pools moments of two disjoint row sets.
    pub fn combine(&self, other: &Self) -> Self {
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let (w1, w2, w12) = (n1 / n, n2 / n, n1 * n2 / (n * n));
        let df = &self.basis_mean - &other.basis_mean;
        let ds = &self.source_mean - &other.source_mean;
        let outer = |a: &Vector, b: &Vector| {
            let a2 = a.view().insert_axis(Axis(1));
            let b2 = b.view().insert_axis(Axis(0));
            a2.dot(&b2)
        };
        Self {
            count: self.count + other.count,
            basis_mean: &self.basis_mean * w1 + &other.basis_mean * w2,
            source_mean: &self.source_mean * w1 + &other.source_mean * w2,
            basis_cov: &self.basis_cov * w1 + &other.basis_cov * w2 + outer(&df, &df) * w12,
            cross_cov: &self.cross_cov * w1 + &other.cross_cov * w2 + outer(&df, &ds) * w12,
            source_cov: &self.source_cov * w1 + &other.source_cov * w2 + outer(&ds, &ds) * w12,
        }
    }

    /// Empirical `Cov[x] = B Cov[f] B^T`.
    pub fn input_covariance(&self, process: &GenerativeProcess) -> Matrix {
        congruence(&process.readout, &self.basis_cov)
    }

    /// Empirical `E[x] = B E[f]`.
    pub fn input_mean(&self, process: &GenerativeProcess) -> Vector {
        process.readout.dot(&self.basis_mean)
    }
}

/// Oracle-side signal/noise decomposition of a process.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `H = E[f s^T]`, `N_f x N_s`.
    pub h: Matrix,
    /// `Sigma = Cov[phi]` with `phi = f - E[f] - H s`.
    pub sigma: Matrix,
    /// `B H`, `N_x x N_s`.
    pub bh: Matrix,
    /// Left singular vectors of `B H`.
    pub u_l: Matrix,
    /// Singular values of `B H`, descending.
    pub s_l: Vector,
    pub samples: usize,
    /// Set when fewer than `10 N_f` samples back `Sigma`.
    pub sigma_warning: bool,
}

impl GroundTruth {
    pub fn from_moments(process: &GenerativeProcess, m: &BasisMoments) -> Result<Self> {
        let ms = m.source_mean.view().insert_axis(Axis(0));
        let mf = m.basis_mean.view().insert_axis(Axis(1));
        let h = &m.cross_cov + &mf.dot(&ms);
        // Cov[f - H s] expanded in the stored moments.
        let ch = m.cross_cov.dot(&h.t());
        let hsh = h.dot(&m.source_cov).dot(&h.t());
        let sigma = symmetrize(&(&m.basis_cov - &ch - ch.t() + hsh));
        let bh = process.readout.dot(&h);
        let svd = svd_thin(&bh)?;
        Ok(Self {
            h,
            sigma,
            bh,
            u_l: svd.left,
            s_l: svd.singular_values,
            samples: m.count,
            sigma_warning: m.count < 10 * process.n_f,
        })
    }

    /// `B Sigma B^T`.
    pub fn noise_covariance(&self, process: &GenerativeProcess) -> Matrix {
        congruence(&process.readout, &self.sigma)
    }

    /// `B H H^T B^T`.
    pub fn signal_covariance(&self) -> Matrix {
        symmetrize(&self.bh.dot(&self.bh.t()))
    }
}

pub fn ground_truth_decomposition(
    process: &GenerativeProcess,
    batch: &SampleBatch,
) -> Result<GroundTruth> {
    let moments = BasisMoments::compute(process, batch, 0..batch.len())?;
    GroundTruth::from_moments(process, &moments)
}
