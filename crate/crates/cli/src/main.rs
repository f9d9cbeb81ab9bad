use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use asln_core::container::Container;
use asln_core::harness::{
    emit_csv, emit_curves, emit_timings, preset_config, run_grid, sidecar_path, svg_chart,
    ExperimentConfig, ExperimentRecord,
};
use asln_core::oracles::{
    gaussian_mixing, lemma1_probe, lemma1_report, lemma2_check, lemma2_series, lemma3_check,
    lemma3_summary, Lemma1Function, LemmaReport,
};
use asln_core::theory::{
    anisotropy_delta, eigenvalue_ratio_parts, error_cov_asymptotic, error_cov_general,
    gaussian_coefficients, mixing_basis,
};
use asln_core::generative::{build_process, ground_truth_decomposition, sample_batch};
use asln_core::{AslnError, Nonlinearity, SourceDistribution};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

#[derive(Parser)]
#[command(name = "asln", version, about = "Nonlinear mixing, linear unmixing: simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to ASLN_THREADS.
    #[arg(long, env = "ASLN_THREADS")]
    threads: Option<usize>,
    /// Record CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// SVG chart path.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a process and batch and write them to an ASLN1 container.
    Gen {
        #[arg(long, default_value_t = 10)]
        n_s: usize,
        #[arg(long, default_value_t = 100)]
        n_x: usize,
        #[arg(long, default_value_t = Nonlinearity::Sign)]
        nonlinearity: Nonlinearity,
        #[arg(long, default_value_t = SourceDistribution::Uniform)]
        source: SourceDistribution,
        #[arg(long, default_value_t = 1000)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also store the inputs X, `T x N_x`.
        #[arg(long)]
        with_inputs: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Gaussian coefficients of every nonlinearity and, with `--n-s`, the
    /// predicted errors of one process.
    Theory {
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        n_x: usize,
        #[arg(long, default_value_t = Nonlinearity::Sign)]
        nonlinearity: Nonlinearity,
        #[arg(long, default_value_t = SourceDistribution::Uniform)]
        source: SourceDistribution,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run an experiment grid from a TOML file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a shipped figure preset.
    Preset {
        name: String,
        /// Use the larger grids instead of the desk defaults.
        #[arg(long)]
        paper_scale: bool,
        /// Output directory for CSV, sidecars and SVG.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Numerical check of one lemma.
    Lemma {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Lemma 1: source distribution.
        #[arg(long, default_value_t = SourceDistribution::Uniform)]
        source: SourceDistribution,
        /// Lemma 1: sample count per N_s.
        #[arg(long, default_value_t = 200_000)]
        t: usize,
        /// Lemma 1: probed units.
        #[arg(long, default_value_t = 100)]
        units: usize,
        /// Lemma 2: Monte-Carlo samples.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Lemma 2: series truncation.
        #[arg(long, default_value_t = 8)]
        n_max: usize,
        /// Lemma 3: source count.
        #[arg(long, default_value_t = 10)]
        n_s: usize,
        /// Lemma 3: basis width.
        #[arg(long, default_value_t = 1000)]
        n_f: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<AslnError>(), Some(AslnError::Config(_))));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Gen {
            n_s,
            n_x,
            nonlinearity,
            source,
            t,
            seed,
            with_inputs,
            out,
        } => {
            let p = build_process(n_s, n_x, n_x, nonlinearity, source, seed)?;
            let batch = sample_batch(&p, t, seed)?;
            let mut c = Container::from_process(&p);
            c.push_batch(&p, &batch, with_inputs);
            c.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} ({} sections)", out.display(), c.sections.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Theory {
            n_s,
            n_x,
            nonlinearity,
            source,
            t,
            seed,
        } => {
            print_coefficients();
            if let Some(n_s) = n_s {
                print_predictions(n_s, n_x, nonlinearity, source, t, seed)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, flags } => {
            let cfg = ExperimentConfig::load(&config)?;
            let csv = flags.csv.clone().or_else(|| cfg.output.csv.clone());
            let svg = flags.svg.clone().or_else(|| cfg.output.svg.clone());
            execute(cfg, &flags, csv, svg)
        }
        Command::Preset {
            name,
            paper_scale,
            out,
            flags,
        } => {
            let cfg = preset_config(&name, paper_scale).map_err(|e| match e {
                AslnError::Config(_) => e,
                other => AslnError::Config(other.to_string()),
            })?;
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let csv = flags.csv.clone().or_else(|| Some(dir.join(format!("{name}.csv"))));
            let svg = flags.svg.clone().or_else(|| Some(dir.join(format!("{name}.svg"))));
            execute(cfg, &flags, csv, svg)
        }
        Command::Lemma {
            which,
            seed,
            source,
            t,
            units,
            samples,
            n_max,
            n_s,
            n_f,
        } => {
            let reports = match which {
                1 => {
                    let grid = [4, 16, 64];
                    let mut out = Vec::new();
                    for f in [Lemma1Function::Fourth, Lemma1Function::PairSquare] {
                        let probe = lemma1_probe(source, f, &grid, t, units, seed)?;
                        println!(
                            "{} {}: slope {:.3} +- {:.3}{}",
                            source,
                            f.name(),
                            probe.slope,
                            probe.slope_stderr,
                            if probe.inconclusive { " (inconclusive)" } else { "" }
                        );
                        out.push(lemma1_report(&probe, 0.35));
                    }
                    out
                }
                2 => {
                    let mut out = Vec::new();
                    for g in [Nonlinearity::Cube, Nonlinearity::Tanh] {
                        for c in [0.1, 0.3] {
                            out.push(lemma2_check(g, c, n_max, samples, seed)?);
                        }
                    }
                    let c = 0.3;
                    println!(
                        "cube series at c={c}: {:.12} (closed form {:.12})",
                        lemma2_series(Nonlinearity::Cube, 1.0, 1.0, c, n_max)?,
                        9.0 * c + 6.0 * c * c * c
                    );
                    out
                }
                _ => {
                    let a = gaussian_mixing(n_f, n_s, seed, "lemma3");
                    let s = lemma3_summary(&a)?;
                    println!(
                        "cube major mean {:.3}, major min {:.3}, minor max {:.3}, gap {:.3}; square top {:.3}, overlap {:.4}",
                        s.cube_major_mean,
                        s.cube_major_min,
                        s.cube_minor_max,
                        s.gap_ratio,
                        s.square_top,
                        s.square_uniform_overlap
                    );
                    vec![lemma3_check(&a)?]
                }
            };
            let mut pass = true;
            for r in &reports {
                print_report(r);
                pass &= r.pass;
            }
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn execute(
    mut cfg: ExperimentConfig,
    flags: &RunFlags,
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    if let Some(seed) = flags.seed {
        cfg.grid.seeds = vec![seed];
    }
    if flags.threads == Some(0) {
        return Err(AslnError::Config("--threads must be positive".into()).into());
    }
    let records = run_grid(&cfg, flags.threads)?;
    for r in &records {
        print_record(r);
    }
    if let Some(path) = &csv {
        emit_csv(&records, path).with_context(|| format!("writing {}", path.display()))?;
        emit_timings(&records, &sidecar_path(path, "timings"))?;
        if records.iter().any(|r| !r.curves.is_empty()) {
            emit_curves(&records, &sidecar_path(path, "curves"))?;
        }
        println!("wrote {}", path.display());
    }
    if let Some(path) = &svg {
        if !cfg.output.svg_columns.is_empty() {
            write_svg(&records, &cfg, path)?;
        }
    }
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} records failed", records.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_svg(records: &[ExperimentRecord], cfg: &ExperimentConfig, path: &Path) -> anyhow::Result<()> {
    let chart = svg_chart(records, &cfg.output.svg_columns, &cfg.name);
    std::fs::write(path, chart).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_record(r: &ExperimentRecord) {
    if r.is_ok() {
        println!(
            "cell {} seed {} N_s={} N_x={} {} {} {}: subspace {:.3e} ratio {:.3e} mse {:.3e} general {:.3e} asymptotic {:.3e} ({:.1}s)",
            r.cell,
            r.seed,
            r.n_s,
            r.n_x,
            r.nonlinearity,
            r.source,
            r.mode.name(),
            r.pca_subspace_error,
            r.eigenvalue_ratio,
            r.bss_mse,
            r.pred_general,
            r.pred_asymptotic,
            r.wall_clock_s
        );
    } else {
        println!("cell {} seed {} failed: {}", r.cell, r.seed, r.error);
    }
}

fn print_report(r: &LemmaReport) {
    for e in &r.entries {
        println!(
            "lemma {} {:<32} predicted {:>14.6e} measured {:>14.6e} {}",
            r.lemma,
            e.name,
            e.predicted,
            e.measured,
            if e.pass { "ok" } else { "FAIL" }
        );
    }
}

fn print_coefficients() {
    println!("{:<10} {:>14} {:>14} {:>14} {:>5}", "f", "E[f']", "E[f^2]", "E[f''']", "odd");
    for nl in Nonlinearity::ALL {
        let c = gaussian_coefficients(nl);
        println!(
            "{:<10} {:>14.10} {:>14.10} {:>14.10} {:>5}",
            nl.name(),
            c.f_bar_prime,
            c.f_bar_sq,
            c.f_bar_third,
            c.odd
        );
    }
}

fn print_predictions(
    n_s: usize,
    n_x: usize,
    nl: Nonlinearity,
    source: SourceDistribution,
    t: Option<usize>,
    seed: u64,
) -> anyhow::Result<()> {
    if n_s == 0 || n_s > n_x {
        bail!(AslnError::Config(format!("need 1 <= N_s <= N_x, got {n_s} and {n_x}")));
    }
    let t = t.unwrap_or_else(|| asln_core::harness::default_samples(n_x));
    let p = build_process(n_s, n_x, n_x, nl, source, seed)?;
    let batch = sample_batch(&p, t, seed)?;
    let gt = ground_truth_decomposition(&p, &batch)?;
    let b = &p.readout;
    println!("\nN_s={n_s} N_x=N_f={n_x} {nl} {source} T={t} seed={seed}");
    if gt.sigma_warning {
        println!("warning: T < 10 N_f, Sigma is noisy");
    }
    println!("eigenvalue ratio       {:.6e}", eigenvalue_ratio_parts(b, &gt.sigma, &gt.s_l)?);
    println!("general prediction     {:.6e}", error_cov_general(&gt.bh, b, &gt.sigma)?.per_element_mse);
    let coeffs = gaussian_coefficients(nl);
    if coeffs.odd {
        let delta = anisotropy_delta(b, &mixing_basis(&p.mixing)?)?;
        let measured = error_cov_asymptotic(n_s, n_x, &coeffs, &delta)?;
        let iso = error_cov_asymptotic(n_s, n_x, &coeffs, &Array2::eye(n_s))?;
        println!("asymptotic, measured   {:.6e}", measured.per_element_mse);
        println!("asymptotic, isotropic  {:.6e}", iso.per_element_mse);
    } else {
        println!("asymptotic prediction  n/a ({nl} is not odd)");
    }
    Ok(())
}
