//! Experiment grids, figure presets, CSV and SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{
    cascade_from_moments, split_rows, AmariConfig, CascadeConfig, EncoderMode, IcaNonlinearity,
    OjaConfig, PcaEncoder, TrainLog,
};
use crate::error::{AslnError, Result};
use crate::generative::{
    build_process, sample_batch, BasisMoments, GroundTruth, Nonlinearity, SourceDistribution,
};
use crate::metrics::{subspace_error, MetricsRecord};
use crate::spectral::Matrix;
use crate::theory::{
    anisotropy_delta, eigenvalue_ratio_parts, error_cov_asymptotic, error_cov_general,
    gaussian_coefficients, mixing_basis, subspace_error_estimate,
};

/// `T = max(1e5, 20 N_f)` unless the grid sets it.
pub fn default_samples(n_f: usize) -> usize {
    100_000.max(20 * n_f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_s: Vec<usize>,
    /// Input widths; the basis width always equals the input width.
    pub n_x: Vec<usize>,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: Vec<Nonlinearity>,
    #[serde(default = "default_source")]
    pub source: Vec<SourceDistribution>,
    /// Sample counts; empty means [`default_samples`].
    #[serde(default)]
    pub t: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Empty means batch PCA only.
    #[serde(default)]
    pub mode: Vec<EncoderMode>,
}

fn default_nonlinearity() -> Vec<Nonlinearity> {
    vec![Nonlinearity::Sign]
}

fn default_source() -> Vec<SourceDistribution> {
    vec![SourceDistribution::Uniform]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderOptions {
    /// Run PCA -> ICA; when false only the spectral quantities are recorded.
    pub cascade: bool,
    pub eta_pca: f64,
    pub pca_epochs: usize,
    pub eta_ica: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub g_kind: IcaNonlinearity,
    pub holdout: bool,
    pub log_curves: bool,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        let oja = OjaConfig::default();
        let amari = AmariConfig::default();
        Self {
            cascade: true,
            eta_pca: oja.eta,
            pca_epochs: oja.epochs,
            eta_ica: amari.eta,
            epochs: amari.epochs,
            batch_size: amari.batch_size,
            g_kind: amari.g_kind,
            holdout: true,
            log_curves: false,
        }
    }
}

impl EncoderOptions {
    fn cascade_config(&self, mode: EncoderMode, seed: u64) -> CascadeConfig {
        CascadeConfig {
            mode,
            oja: OjaConfig {
                eta: self.eta_pca,
                epochs: self.pca_epochs,
                batch_size: self.batch_size,
                seed,
            },
            amari: AmariConfig {
                eta: self.eta_ica,
                epochs: self.epochs,
                batch_size: self.batch_size,
                g_kind: self.g_kind,
                seed,
            },
            holdout: self.holdout,
            ..CascadeConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    /// Record columns drawn in the SVG chart.
    pub svg_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub encoder: EncoderOptions,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| AslnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| AslnError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let empty = [
            ("n_s", g.n_s.is_empty()),
            ("n_x", g.n_x.is_empty()),
            ("nonlinearity", g.nonlinearity.is_empty()),
            ("source", g.source.is_empty()),
            ("seeds", g.seeds.is_empty()),
        ];
        if let Some((axis, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(AslnError::Config(format!("grid axis '{axis}' is empty")));
        }
        for &n_s in &g.n_s {
            for &n_x in &g.n_x {
                if n_s == 0 || n_s > n_x {
                    return Err(AslnError::Config(format!(
                        "cell N_s={n_s}, N_x={n_x} violates 1 <= N_s <= N_f = N_x"
                    )));
                }
            }
        }
        if let Some(t) = g.t.iter().find(|&&t| t < 4) {
            return Err(AslnError::Config(format!("T={t} is too small")));
        }
        let e = &self.encoder;
        if !(e.eta_pca > 0.0 && e.eta_ica > 0.0) || e.epochs == 0 || e.pca_epochs == 0 || e.batch_size == 0 {
            return Err(AslnError::Config("encoder rates, epochs and batch size must be positive".into()));
        }
        Ok(())
    }

    /// Grid cells in a fixed nesting order.
    pub fn cells(&self) -> Vec<GridCell> {
        let g = &self.grid;
        let ts: Vec<Option<usize>> = if g.t.is_empty() {
            vec![None]
        } else {
            g.t.iter().map(|&t| Some(t)).collect()
        };
        let modes = if g.mode.is_empty() {
            vec![EncoderMode::Batch]
        } else {
            g.mode.clone()
        };
        let mut cells = Vec::new();
        for &n_s in &g.n_s {
            for &n_x in &g.n_x {
                for &nonlinearity in &g.nonlinearity {
                    for &source in &g.source {
                        for &t in &ts {
                            for &mode in &modes {
                                cells.push(GridCell {
                                    index: cells.len(),
                                    n_s,
                                    n_x,
                                    nonlinearity,
                                    source,
                                    t: t.unwrap_or_else(|| default_samples(n_x)),
                                    mode,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub n_s: usize,
    pub n_x: usize,
    pub nonlinearity: Nonlinearity,
    pub source: SourceDistribution,
    pub t: usize,
    pub mode: EncoderMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub stage: &'static str,
    pub epoch: usize,
    pub metric: f64,
    pub weight_change: f64,
}

/// One grid cell and seed. Quantities that do not apply are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub cell: usize,
    pub seed: u64,
    pub n_s: usize,
    pub n_f: usize,
    pub n_x: usize,
    pub nonlinearity: Nonlinearity,
    pub source: SourceDistribution,
    pub t: usize,
    pub mode: EncoderMode,
    /// `"ok"` or `"error"`.
    pub status: String,
    pub error: String,
    /// Major subspace of the full-batch input covariance against `U_L`.
    pub pca_subspace_error: f64,
    /// Major subspace of the trained encoder against `U_L`.
    pub encoder_subspace_error: f64,
    pub subspace_error_estimate: f64,
    pub eigenvalue_ratio: f64,
    pub bss_mse: f64,
    pub diag_cov_min: f64,
    pub offdiag_cov_max: f64,
    pub pred_general: f64,
    /// Asymptotic error with the measured anisotropy.
    pub pred_asymptotic: f64,
    /// Asymptotic error with isotropic readout.
    pub pred_asymptotic_iso: f64,
    pub sigma_warning: bool,
    pub wall_clock_s: f64,
    pub curves: Vec<CurvePoint>,
}

/// CSV columns, in order.
pub const COLUMNS: [&str; 23] = [
    "experiment",
    "cell",
    "seed",
    "n_s",
    "n_f",
    "n_x",
    "nonlinearity",
    "source",
    "t",
    "mode",
    "status",
    "pca_subspace_error",
    "encoder_subspace_error",
    "subspace_error_estimate",
    "eigenvalue_ratio",
    "bss_mse",
    "diag_cov_min",
    "offdiag_cov_max",
    "pred_general",
    "pred_asymptotic",
    "pred_asymptotic_iso",
    "sigma_warning",
    "error",
];

impl ExperimentRecord {
    fn blank(experiment: &str, cell: &GridCell, seed: u64) -> Self {
        Self {
            experiment: experiment.to_string(),
            cell: cell.index,
            seed,
            n_s: cell.n_s,
            n_f: cell.n_x,
            n_x: cell.n_x,
            nonlinearity: cell.nonlinearity,
            source: cell.source,
            t: cell.t,
            mode: cell.mode,
            status: "ok".into(),
            error: String::new(),
            pca_subspace_error: f64::NAN,
            encoder_subspace_error: f64::NAN,
            subspace_error_estimate: f64::NAN,
            eigenvalue_ratio: f64::NAN,
            bss_mse: f64::NAN,
            diag_cov_min: f64::NAN,
            offdiag_cov_max: f64::NAN,
            pred_general: f64::NAN,
            pred_asymptotic: f64::NAN,
            pred_asymptotic_iso: f64::NAN,
            sigma_warning: false,
            wall_clock_s: 0.0,
            curves: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Named float column, for charts and summaries.
    pub fn value(&self, column: &str) -> Option<f64> {
        Some(match column {
            "pca_subspace_error" => self.pca_subspace_error,
            "encoder_subspace_error" => self.encoder_subspace_error,
            "subspace_error_estimate" => self.subspace_error_estimate,
            "eigenvalue_ratio" => self.eigenvalue_ratio,
            "bss_mse" => self.bss_mse,
            "diag_cov_min" => self.diag_cov_min,
            "offdiag_cov_max" => self.offdiag_cov_max,
            "pred_general" => self.pred_general,
            "pred_asymptotic" => self.pred_asymptotic,
            "pred_asymptotic_iso" => self.pred_asymptotic_iso,
            _ => return None,
        })
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.cell.to_string(),
            self.seed.to_string(),
            self.n_s.to_string(),
            self.n_f.to_string(),
            self.n_x.to_string(),
            self.nonlinearity.name().into(),
            self.source.name().into(),
            self.t.to_string(),
            self.mode.name().into(),
            self.status.clone(),
            fmt_float(self.pca_subspace_error),
            fmt_float(self.encoder_subspace_error),
            fmt_float(self.subspace_error_estimate),
            fmt_float(self.eigenvalue_ratio),
            fmt_float(self.bss_mse),
            fmt_float(self.diag_cov_min),
            fmt_float(self.offdiag_cov_max),
            fmt_float(self.pred_general),
            fmt_float(self.pred_asymptotic),
            fmt_float(self.pred_asymptotic_iso),
            self.sigma_warning.to_string(),
            self.error.clone(),
        ]
    }
}

/// 17 significant digits, which round-trips every finite `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn curves_of<'a>(stage: &'static str, log: &'a TrainLog) -> impl Iterator<Item = CurvePoint> + 'a {
    log.records.iter().map(move |r| CurvePoint {
        stage,
        epoch: r.epoch,
        metric: r.metric,
        weight_change: r.weight_change,
    })
}

/// Build, sample, decompose, encode and score one cell.
pub fn run_cell(cfg: &ExperimentConfig, cell: &GridCell, seed: u64) -> ExperimentRecord {
    let start = Instant::now();
    let mut rec = ExperimentRecord::blank(&cfg.name, cell, seed);
    if let Err(e) = fill_record(cfg, cell, seed, &mut rec) {
        rec.status = "error".into();
        rec.error = e.to_string();
    }
    rec.wall_clock_s = start.elapsed().as_secs_f64();
    rec
}

fn fill_record(
    cfg: &ExperimentConfig,
    cell: &GridCell,
    seed: u64,
    rec: &mut ExperimentRecord,
) -> Result<()> {
    let p = build_process(cell.n_s, cell.n_x, cell.n_x, cell.nonlinearity, cell.source, seed)?;
    let batch = sample_batch(&p, cell.t, seed)?;
    let holdout = cfg.encoder.holdout;
    let (train, eval) = split_rows(cell.t, holdout);
    let train_m = BasisMoments::compute(&p, &batch, train)?;
    let full = if holdout {
        train_m.combine(&BasisMoments::compute(&p, &batch, eval)?)
    } else {
        train_m.clone()
    };
    let gt = GroundTruth::from_moments(&p, &full)?;
    rec.sigma_warning = gt.sigma_warning;

    let k = cell.n_s;
    let full_pca = PcaEncoder::from_covariance(&full.input_covariance(&p), full.input_mean(&p), k)?;
    rec.pca_subspace_error = subspace_error(&full_pca.p_m, &gt.u_l)?;

    let b = &p.readout;
    let noise_u = b.dot(&gt.sigma.dot(&b.t().dot(&gt.u_l)));
    rec.subspace_error_estimate = subspace_error_estimate(&gt.u_l, &gt.s_l, &noise_u)?;
    rec.eigenvalue_ratio = eigenvalue_ratio_parts(b, &gt.sigma, &gt.s_l)?;
    rec.pred_general = error_cov_general(&gt.bh, b, &gt.sigma)?.per_element_mse;
    let coeffs = gaussian_coefficients(cell.nonlinearity);
    if coeffs.odd {
        let delta = anisotropy_delta(b, &mixing_basis(&p.mixing)?)?;
        rec.pred_asymptotic = error_cov_asymptotic(k, p.n_f, &coeffs, &delta)?.per_element_mse;
        rec.pred_asymptotic_iso = error_cov_asymptotic(k, p.n_f, &coeffs, &Matrix::eye(k))?.per_element_mse;
    }

    if cfg.encoder.cascade {
        let ccfg = cfg.encoder.cascade_config(cell.mode, seed);
        let out = cascade_from_moments(&p, &batch, k, &ccfg, &train_m, Some(&gt.u_l))?;
        rec.encoder_subspace_error = subspace_error(&out.pca.p_m, &gt.u_l)?;
        let s = batch.sources.slice(ndarray::s![out.eval_rows.clone(), ..]);
        let m = MetricsRecord::evaluate(out.estimates.view(), s, rec.encoder_subspace_error)?;
        rec.bss_mse = m.bss_mse;
        rec.diag_cov_min = m.diag_cov_min;
        rec.offdiag_cov_max = m.offdiag_cov_max;
        if cfg.encoder.log_curves {
            if let Some(log) = &out.pca_log {
                rec.curves.extend(curves_of("oja", log));
            }
            rec.curves.extend(curves_of("amari", &out.ica_log));
        }
    }
    Ok(())
}

/// Runs every cell for every seed. Records are ordered by (cell, seed)
/// whatever the completion order; `threads` sizes the work pool.
pub fn run_grid(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let jobs: Vec<(GridCell, u64)> = cfg
        .cells()
        .into_iter()
        .flat_map(|c| cfg.grid.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let work = || -> Vec<ExperimentRecord> {
        jobs.par_iter().map(|(c, s)| run_cell(cfg, c, *s)).collect()
    };
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| AslnError::Config(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

pub const PRESETS: [&str; 4] = ["fig2", "fig3a", "fig3d", "fig4"];

/// The shipped configuration of a preset.
pub fn preset_config(name: &str, paper_scale: bool) -> Result<ExperimentConfig> {
    let text = match (name, paper_scale) {
        ("fig2", false) => include_str!("../../../configs/fig2.toml"),
        ("fig2", true) => include_str!("../../../configs/fig2_large.toml"),
        ("fig3a", false) => include_str!("../../../configs/fig3a.toml"),
        ("fig3a", true) => include_str!("../../../configs/fig3a_large.toml"),
        ("fig3d", false) => include_str!("../../../configs/fig3d.toml"),
        ("fig3d", true) => include_str!("../../../configs/fig3d_large.toml"),
        ("fig4", false) => include_str!("../../../configs/fig4.toml"),
        ("fig4", true) => include_str!("../../../configs/fig4_large.toml"),
        _ => {
            return Err(AslnError::Config(format!(
                "unknown preset '{name}'; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    ExperimentConfig::from_toml(text)
}

/// Scaled-down or otherwise adjusted preset parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOverrides {
    pub n_s: Option<Vec<usize>>,
    pub n_x: Option<Vec<usize>>,
    pub t: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub epochs: Option<usize>,
    pub pca_epochs: Option<usize>,
}

impl PresetOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.n_s {
            cfg.grid.n_s = v.clone();
        }
        if let Some(v) = &self.n_x {
            cfg.grid.n_x = v.clone();
        }
        if let Some(v) = &self.t {
            cfg.grid.t = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.grid.seeds = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.encoder.epochs = v;
        }
        if let Some(v) = self.pca_epochs {
            cfg.encoder.pca_epochs = v;
        }
    }
}

pub fn run_preset(
    name: &str,
    paper_scale: bool,
    overrides: &PresetOverrides,
    threads: Option<usize>,
) -> Result<(ExperimentConfig, Vec<ExperimentRecord>)> {
    let mut cfg = preset_config(name, paper_scale)?;
    overrides.apply(&mut cfg);
    let records = run_grid(&cfg, threads)?;
    Ok((cfg, records))
}

/// CSV text for `records`: header row, then one line per record.
pub fn csv_string(records: &[ExperimentRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    let bytes = w.into_inner().map_err(|e| AslnError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| AslnError::Format(e.to_string()))
}

pub fn emit_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(AslnError::InvalidArgument("no records to write".into()));
    }
    fs::write(path, csv_string(records)?)?;
    Ok(())
}

/// Parses a file written by [`emit_csv`]. Curves and wall-clock are not
/// part of the CSV and come back empty.
pub fn read_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(AslnError::Format("unexpected CSV header".into()));
    }
    let bad = |field: &str, v: &str| AslnError::Format(format!("bad {field} value '{v}'"));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let int = |i: usize| get(i).parse::<usize>().map_err(|_| bad(COLUMNS[i], get(i)));
        let float = |i: usize| get(i).parse::<f64>().map_err(|_| bad(COLUMNS[i], get(i)));
        let mode = match get(9) {
            "batch" => EncoderMode::Batch,
            "oja" => EncoderMode::Oja,
            v => return Err(bad("mode", v)),
        };
        out.push(ExperimentRecord {
            experiment: get(0).to_string(),
            cell: int(1)?,
            seed: get(2).parse().map_err(|_| bad("seed", get(2)))?,
            n_s: int(3)?,
            n_f: int(4)?,
            n_x: int(5)?,
            nonlinearity: get(6).parse()?,
            source: get(7).parse()?,
            t: int(8)?,
            mode,
            status: get(10).to_string(),
            pca_subspace_error: float(11)?,
            encoder_subspace_error: float(12)?,
            subspace_error_estimate: float(13)?,
            eigenvalue_ratio: float(14)?,
            bss_mse: float(15)?,
            diag_cov_min: float(16)?,
            offdiag_cov_max: float(17)?,
            pred_general: float(18)?,
            pred_asymptotic: float(19)?,
            pred_asymptotic_iso: float(20)?,
            sigma_warning: get(21) == "true",
            error: get(22).to_string(),
            wall_clock_s: 0.0,
            curves: Vec::new(),
        });
    }
    Ok(out)
}

/// `foo.csv` -> `foo.<suffix>.csv`.
pub fn sidecar_path(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("records");
    csv.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Wall-clock per record, kept out of the main CSV so that it stays
/// reproducible.
pub fn emit_timings(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell", "seed", "wall_clock_s"])?;
    for r in records {
        w.write_record([r.cell.to_string(), r.seed.to_string(), format!("{:.3}", r.wall_clock_s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch training curves of every record that logged them.
pub fn emit_curves(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell", "seed", "mode", "stage", "epoch", "metric", "weight_change"])?;
    for r in records {
        for c in &r.curves {
            w.write_record([
                r.cell.to_string(),
                r.seed.to_string(),
                r.mode.name().to_string(),
                c.stage.to_string(),
                c.epoch.to_string(),
                fmt_float(c.metric),
                fmt_float(c.weight_change),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Seed means of `column` keyed by series label and `N_x`, over successful
/// records with finite positive values.
pub fn seed_means(records: &[ExperimentRecord], column: &str) -> BTreeMap<String, Vec<(usize, f64)>> {
    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let Some(v) = r.value(column) else { continue };
        if !(v.is_finite() && v > 0.0) {
            continue;
        }
        let label = format!("{column} N_s={} {} {} {}", r.n_s, r.nonlinearity, r.source, r.mode.name());
        let e = acc.entry((label, r.n_x)).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let mut out: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for ((label, n_x), (sum, n)) in acc {
        out.entry(label).or_default().push((n_x, sum / n as f64));
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

/// Log-log line chart of seed means against `N_x`.
pub fn svg_chart(records: &[ExperimentRecord], columns: &[String], title: &str) -> String {
    let series: Vec<(String, Vec<(usize, f64)>)> = columns
        .iter()
        .flat_map(|c| seed_means(records, c))
        .collect();
    let (w, h, left, right, top, bottom) = (720.0, 440.0, 70.0, 250.0, 40.0, 50.0);
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min((x as f64).log10());
        x1 = x1.max((x as f64).log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="{left}" y="24" font-size="14">{}</text>"#, escape(title));
    if series.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{d}</text>"##,
            top + ph,
            top + ph + 18.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">N_x</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx((x as f64).log10()), sy(y.log10())))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in &path {
            let (cx, cy) = p.split_once(',').expect("pair");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 14.0 + 16.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}" font-size="10">{}</text>"#,
            ly - 4.0,
            lx + 16.0,
            ly - 4.0,
            lx + 20.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
