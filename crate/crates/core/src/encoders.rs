//! Linear encoders: batch PCA whitening, Oja's subspace rule, Amari's
//! natural-gradient ICA, and the PCA -> ICA cascade.

use std::ops::Range;

use ndarray::{s, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AslnError, Result};
use crate::generative::{BasisMoments, GenerativeProcess, SampleBatch};
use crate::metrics::subspace_error;
use crate::rng::stream;
use crate::spectral::{
    fill_lower, orthonormalize_columns, svd_thin, sym_eig, sym_inv_sqrt, symmetrize, syrk_upper,
    Matrix, Vector,
};

/// Weight norm above which training is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Relative eigenvalue floor for whitening.
pub const WHITEN_TOL: f64 = 1e-12;

/// Row-indexed access to an input sequence.
pub trait InputStream: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    /// Rows `idx`, in that order.
    fn gather(&self, idx: &[usize]) -> Matrix;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl InputStream for ArrayView2<'_, f64> {
    fn len(&self) -> usize {
        self.nrows()
    }

    fn dim(&self) -> usize {
        self.ncols()
    }

    fn gather(&self, idx: &[usize]) -> Matrix {
        self.select(Axis(0), idx)
    }
}

impl InputStream for Matrix {
    fn len(&self) -> usize {
        self.nrows()
    }

    fn dim(&self) -> usize {
        self.ncols()
    }

    fn gather(&self, idx: &[usize]) -> Matrix {
        self.select(Axis(0), idx)
    }
}

/// Inputs of a row range of a batch, regenerated from the stored sources.
pub struct ProcessInputs<'a> {
    pub process: &'a GenerativeProcess,
    pub batch: &'a SampleBatch,
    pub rows: Range<usize>,
}

impl InputStream for ProcessInputs<'_> {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn dim(&self) -> usize {
        self.process.n_x
    }

    fn gather(&self, idx: &[usize]) -> Matrix {
        let global: Vec<usize> = idx.iter().map(|&i| self.rows.start + i).collect();
        let src = self.batch.sources.select(Axis(0), &global);
        self.process.inputs(src.view())
    }
}

const STREAM_CHUNK: usize = 2048;

fn for_each_block<F: FnMut(Matrix)>(input: &dyn InputStream, mut visit: F) {
    let n = input.len();
    let mut start = 0;
    while start < n {
        let end = (start + STREAM_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        visit(input.gather(&idx));
        start = end;
    }
}

fn stream_mean(input: &dyn InputStream) -> Vector {
    let mut sum = Vector::zeros(input.dim());
    for_each_block(input, |rows| sum += &rows.sum_axis(Axis(0)));
    sum / input.len() as f64
}

fn stream_covariance(input: &dyn InputStream, mean: &Vector) -> Matrix {
    let d = input.dim();
    let mut cov = Matrix::zeros((d, d));
    let inv = 1.0 / input.len() as f64;
    for_each_block(input, |rows| {
        let c = rows - mean;
        syrk_upper(&mut cov, c.view(), inv);
    });
    fill_lower(&mut cov);
    cov
}

/// PCA whitening map `Lambda^(-1/2) P^T` with its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaEncoder {
    /// `N_x x k` orthonormal basis of the major subspace.
    pub p_m: Matrix,
    pub lambda_m: Vector,
    /// `k x N_x`.
    pub w_pca: Matrix,
    pub input_mean: Vector,
}

impl PcaEncoder {
    /// Top-`k` eigenpairs of an input covariance.
    pub fn from_covariance(cov: &Matrix, input_mean: Vector, k: usize) -> Result<Self> {
        if k == 0 || k > cov.nrows() || input_mean.len() != cov.nrows() {
            return Err(AslnError::Dimension(format!(
                "k={k} with covariance {:?} and mean of length {}",
                cov.dim(),
                input_mean.len()
            )));
        }
        let eig = sym_eig(cov, Some(k))?;
        let max = eig.eigenvalues[0].abs();
        let threshold = WHITEN_TOL * max;
        let last = eig.eigenvalues[k - 1];
        if last.is_nan() || last <= threshold {
            return Err(AslnError::Rank {
                index: k - 1,
                value: last,
                threshold,
            });
        }
        let scale = eig.eigenvalues.mapv(|v| 1.0 / v.sqrt());
        let w_pca = eig.eigenvectors.t().to_owned() * scale.view().insert_axis(Axis(1));
        Ok(Self {
            p_m: eig.eigenvectors,
            lambda_m: eig.eigenvalues,
            w_pca,
            input_mean,
        })
    }

    /// Encoder from learned (not necessarily orthonormal) rows `w`, whitened
    /// with the output covariance `w cov w^T`.
    pub fn from_weights(w: &Matrix, output_cov: &Matrix, input_mean: Vector) -> Result<Self> {
        let p_m = orthonormalize_columns(&w.t().to_owned())?;
        let eig = sym_eig(output_cov, None)?;
        let w_pca = sym_inv_sqrt(output_cov)?.dot(w);
        Ok(Self {
            p_m,
            lambda_m: eig.eigenvalues,
            w_pca,
            input_mean,
        })
    }

    pub fn k(&self) -> usize {
        self.w_pca.nrows()
    }

    /// Whitened outputs `W (x - mean)` for input rows `x`.
    pub fn transform(&self, x: ArrayView2<f64>) -> Matrix {
        (&x - &self.input_mean).dot(&self.w_pca.t())
    }

    /// Outputs for a batch row range, computed from basis values as
    /// `(W B)(f - E[f])` so that inputs are never formed.
    pub fn transform_process(
        &self,
        process: &GenerativeProcess,
        batch: &SampleBatch,
        basis_mean: &Vector,
        rows: Range<usize>,
    ) -> Matrix {
        let wb = self.w_pca.dot(&process.readout);
        // The input mean of this encoder may differ from B E[f] only by
        // the constant term below.
        let shift = self.w_pca.dot(&(process.readout.dot(basis_mean) - &self.input_mean));
        let mut out = Matrix::zeros((rows.len(), self.k()));
        let offset = rows.start;
        batch.for_each_chunk(process, rows, |start, _, basis| {
            let centered = basis - basis_mean;
            let mut block = centered.dot(&wb.t());
            block += &shift;
            let n = block.nrows();
            out.slice_mut(s![start - offset..start - offset + n, ..]).assign(&block);
        });
        out
    }
}

/// Batch PCA whitening of input rows `x`.
pub fn pca_whiten_batch(x: ArrayView2<f64>, k: usize) -> Result<PcaEncoder> {
    if x.nrows() < 2 {
        return Err(AslnError::Dimension("need at least 2 input rows".into()));
    }
    let mean = stream_mean(&x);
    let cov = stream_covariance(&x, &mean);
    PcaEncoder::from_covariance(&cov, mean, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IcaNonlinearity {
    /// `u^3`, for sub-Gaussian sources.
    #[default]
    Cube,
    /// `tanh(u)`, for super-Gaussian sources.
    Tanh,
}

impl IcaNonlinearity {
    #[inline]
    pub fn apply(&self, u: f64) -> f64 {
        match self {
            IcaNonlinearity::Cube => u * u * u,
            IcaNonlinearity::Tanh => u.tanh(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IcaNonlinearity::Cube => "cube",
            IcaNonlinearity::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaEncoder {
    /// `k x k` separation matrix acting on whitened inputs.
    pub w_ica: Matrix,
    pub g_kind: IcaNonlinearity,
}

impl IcaEncoder {
    pub fn transform(&self, u: ArrayView2<f64>) -> Matrix {
        u.dot(&self.w_ica.t())
    }

    pub fn condition_number(&self) -> Result<f64> {
        let s = svd_thin(&self.w_ica)?.singular_values;
        let min = s[s.len() - 1];
        Ok(if min == 0.0 { f64::INFINITY } else { s[0] / min })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainRecord {
    pub epoch: usize,
    /// Oja: subspace error against the reference, if one was given.
    /// Amari: `||I - E[g(u) u^T]||_F / k` averaged over the epoch.
    pub metric: f64,
    /// `||W_end - W_start||_F` over the epoch.
    pub weight_change: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OjaConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OjaConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            epochs: 10,
            batch_size: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmariConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub g_kind: IcaNonlinearity,
    pub seed: u64,
}

impl Default for AmariConfig {
    fn default() -> Self {
        Self {
            eta: 0.02,
            epochs: 100,
            batch_size: 256,
            g_kind: IcaNonlinearity::Cube,
            seed: 0,
        }
    }
}

fn check_rate(eta: f64, batch_size: usize, epochs: usize) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) || batch_size == 0 || epochs == 0 {
        return Err(AslnError::Config(format!(
            "need eta > 0, batch_size >= 1, epochs >= 1; got {eta}, {batch_size}, {epochs}"
        )));
    }
    Ok(())
}

fn normal_init(seed: u64, purpose: &str, rows: usize, cols: usize, var: f64) -> Matrix {
    let mut rng = stream(seed, purpose);
    let sd = var.sqrt();
    Matrix::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        sd * z
    })
}

fn frob(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_divergence(w: &Matrix, epoch: usize) -> Result<()> {
    let norm = frob(w);
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(AslnError::Divergence { epoch, norm });
    }
    Ok(())
}

/// One Oja step on centred rows: `W += eta (U^T X - U^T U W) / n`.
pub fn oja_update(w: &Matrix, centered: ArrayView2<f64>, eta: f64) -> Matrix {
    let n = centered.nrows() as f64;
    let u = centered.dot(&w.t());
    let hebb = u.t().dot(&centered);
    let decay = u.t().dot(&u).dot(w);
    (hebb - decay) * (eta / n)
}

/// Oja's subspace rule with shuffled mini-batches, whitened on the
/// training inputs. Logs the subspace error against `reference` each epoch
/// when given.
pub fn oja_train(
    input: &dyn InputStream,
    k: usize,
    cfg: &OjaConfig,
    reference: Option<&Matrix>,
) -> Result<(PcaEncoder, TrainLog)> {
    let (w, mean, log) = oja_weights(input, k, cfg, reference)?;
    let mut out_cov = Matrix::zeros((k, k));
    let inv = 1.0 / input.len() as f64;
    for_each_block(input, |rows| {
        let u = (rows - &mean).dot(&w.t());
        out_cov += &(u.t().dot(&u) * inv);
    });
    let encoder = PcaEncoder::from_weights(&w, &symmetrize(&out_cov), mean)?;
    Ok((encoder, log))
}

/// Raw `k x d` Oja weights and the input mean they were trained around.
pub fn oja_weights(
    input: &dyn InputStream,
    k: usize,
    cfg: &OjaConfig,
    reference: Option<&Matrix>,
) -> Result<(Matrix, Vector, TrainLog)> {
    check_rate(cfg.eta, cfg.batch_size, cfg.epochs)?;
    let (n, d) = (input.len(), input.dim());
    if k == 0 || k > d || n < 2 {
        return Err(AslnError::Dimension(format!("k={k} for {n} inputs of dimension {d}")));
    }
    let mean = stream_mean(input);
    let mut w = normal_init(cfg.seed, "oja-init", k, d, 1.0 / d as f64);
    let mut rng = stream(cfg.seed, "oja-shuffle");
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let start = w.clone();
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let xc = input.gather(idx) - &mean;
            w += &oja_update(&w, xc.view(), cfg.eta);
            check_divergence(&w, epoch)?;
        }
        let metric = match reference {
            Some(r) => subspace_error(&orthonormalize_columns(&w.t().to_owned())?, r)?,
            None => f64::NAN,
        };
        log.records.push(TrainRecord {
            epoch,
            metric,
            weight_change: frob(&(&w - &start)),
        });
    }
    Ok((w, mean, log))
}

/// `(I - E[g(y) y^T]) W` over the rows `u`, `y = W u`.
pub fn amari_direction(w: &Matrix, u: ArrayView2<f64>, g: IcaNonlinearity) -> (Matrix, f64) {
    let k = w.nrows();
    let y = u.dot(&w.t());
    let gy = y.mapv(|v| g.apply(v));
    let resid = Matrix::eye(k) - gy.t().dot(&y) / u.nrows() as f64;
    let size = frob(&resid) / k as f64;
    (resid.dot(w), size)
}

/// Amari's natural-gradient ICA on whitened inputs. Rows of the result are
/// rescaled to unit output variance on the training data.
pub fn amari_train(input: &dyn InputStream, cfg: &AmariConfig) -> Result<(IcaEncoder, TrainLog)> {
    check_rate(cfg.eta, cfg.batch_size, cfg.epochs)?;
    let (n, k) = (input.len(), input.dim());
    if k == 0 || n < 2 {
        return Err(AslnError::Dimension(format!("{n} inputs of dimension {k}")));
    }
    let mut w = normal_init(cfg.seed, "ica-init", k, k, 1.0 / k as f64);
    let mut rng = stream(cfg.seed, "ica-shuffle");
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let start = w.clone();
        order.shuffle(&mut rng);
        let mut residual = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let u = input.gather(idx);
            let (dir, size) = amari_direction(&w, u.view(), cfg.g_kind);
            w.scaled_add(cfg.eta, &dir);
            check_divergence(&w, epoch)?;
            residual += size;
            batches += 1;
        }
        log.records.push(TrainRecord {
            epoch,
            metric: residual / batches as f64,
            weight_change: frob(&(&w - &start)),
        });
    }
    let mut second = Vector::zeros(k);
    let mut first = Vector::zeros(k);
    for_each_block(input, |rows| {
        let y = rows.dot(&w.t());
        first += &y.sum_axis(Axis(0));
        second += &(&y * &y).sum_axis(Axis(0));
    });
    let nf = n as f64;
    for (i, mut row) in w.rows_mut().into_iter().enumerate() {
        let mean = first[i] / nf;
        let var = second[i] / nf - mean * mean;
        if var.is_nan() || var <= 0.0 {
            return Err(AslnError::Singular(format!("ICA output {i} has zero variance")));
        }
        row /= var.sqrt();
    }
    let encoder = IcaEncoder {
        w_ica: w,
        g_kind: cfg.g_kind,
    };
    let cond = encoder.condition_number()?;
    if cond.is_nan() || cond >= 1e6 {
        return Err(AslnError::Singular(format!("W_ica condition number {cond:e}")));
    }
    Ok((encoder, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    #[default]
    Batch,
    Oja,
}

impl EncoderMode {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderMode::Batch => "batch",
            EncoderMode::Oja => "oja",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub mode: EncoderMode,
    pub oja: OjaConfig,
    pub amari: AmariConfig,
    /// Train on the first half of the batch and report estimates for the
    /// second half.
    pub holdout: bool,
    /// Oja mode materialises training inputs up to this many entries and
    /// regenerates them from sources beyond it.
    pub dense_limit: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            mode: EncoderMode::Batch,
            oja: OjaConfig::default(),
            amari: AmariConfig::default(),
            holdout: true,
            dense_limit: 50_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeOutput {
    /// `u~` for `eval_rows`, `len x k`.
    pub estimates: Matrix,
    pub eval_rows: Range<usize>,
    pub train_rows: Range<usize>,
    pub pca: PcaEncoder,
    pub ica: IcaEncoder,
    pub pca_log: Option<TrainLog>,
    pub ica_log: TrainLog,
}

/// Row ranges used for training and evaluation.
pub fn split_rows(t: usize, holdout: bool) -> (Range<usize>, Range<usize>) {
    if holdout {
        let h = t / 2;
        (0..h, h..t)
    } else {
        (0..t, 0..t)
    }
}

pub fn cascade(
    process: &GenerativeProcess,
    batch: &SampleBatch,
    k: usize,
    cfg: &CascadeConfig,
) -> Result<CascadeOutput> {
    let (train, _) = split_rows(batch.len(), cfg.holdout);
    let moments = BasisMoments::compute(process, batch, train)?;
    cascade_from_moments(process, batch, k, cfg, &moments, None)
}

/// Cascade with training-set moments already computed. `reference` is only
/// used to log Oja's per-epoch subspace error.
pub fn cascade_from_moments(
    process: &GenerativeProcess,
    batch: &SampleBatch,
    k: usize,
    cfg: &CascadeConfig,
    train_moments: &BasisMoments,
    reference: Option<&Matrix>,
) -> Result<CascadeOutput> {
    let (train, eval) = split_rows(batch.len(), cfg.holdout);
    if train_moments.count != train.len() {
        return Err(AslnError::Dimension(format!(
            "moments cover {} rows, training set has {}",
            train_moments.count,
            train.len()
        )));
    }
    let (pca, pca_log) = match cfg.mode {
        EncoderMode::Batch => {
            let cov = train_moments.input_covariance(process);
            let mean = train_moments.input_mean(process);
            (PcaEncoder::from_covariance(&cov, mean, k)?, None)
        }
        EncoderMode::Oja => {
            let (enc, log) = if train.len() * process.n_x <= cfg.dense_limit {
                let x = batch.input_rows(process, train.clone());
                oja_train(&x, k, &cfg.oja, reference)?
            } else {
                let stream = ProcessInputs {
                    process,
                    batch,
                    rows: train.clone(),
                };
                oja_train(&stream, k, &cfg.oja, reference)?
            };
            (enc, Some(log))
        }
    };
    let mf = &train_moments.basis_mean;
    let u_train = pca.transform_process(process, batch, mf, train.clone());
    let (ica, ica_log) = amari_train(&u_train, &cfg.amari)?;
    let u_eval = if eval == train {
        u_train
    } else {
        pca.transform_process(process, batch, mf, eval.clone())
    };
    Ok(CascadeOutput {
        estimates: ica.transform(u_eval.view()),
        eval_rows: eval,
        train_rows: train,
        pca,
        ica,
        pca_log,
        ica_log,
    })
}
