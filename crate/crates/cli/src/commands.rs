//! The five subcommands. Each one reads every setting from a merged
//! [`KvConfig`], does its work through the core crate, and writes CSV and
//! JSON files into `out_dir`. All randomness flows from the `seed` setting,
//! so identical settings reproduce identical data files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use archetypal_core::{
    estimate_alpha, fit_altmin, fit_palm, fit_sgd, gen_dataset, gen_separable,
    gen_smooth_archetypes, gen_toy_2d, hexagon_family, load_matrix_csv, loss_l, save_matrix_csv,
    spectral_init, spectrum, successive_projections_init, AlphaSearchConfig, ArchetypeSet,
    DataMatrix, Error, FitReport, InitResult, MixtureRecipe, NoisyDataset, Result, SolverConfig,
    SpectrumDiagnostics, TOY_DEFAULT_N,
};

use crate::config::KvConfig;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Penalty weight as given on the command line: a number or "inf".
#[derive(Debug, Clone, Copy, PartialEq)]
enum Lambda {
    Finite(f64),
    Infinite,
}

impl Lambda {
    fn parse(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        if trimmed.eq_ignore_ascii_case("inf") || trimmed.eq_ignore_ascii_case("infinite") {
            return Ok(Lambda::Infinite);
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            Error::InvalidInput(format!("lambda must be a number or \"inf\", got {raw:?}"))
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidInput(format!(
                "lambda must be non-negative and finite, got {value}"
            )));
        }
        Ok(Lambda::Finite(value))
    }

    fn echo(&self) -> String {
        match self {
            Lambda::Finite(v) => fmt_f64(*v),
            Lambda::Infinite => "inf".to_string(),
        }
    }
}

fn out_dir(cfg: &KvConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.str_or("out_dir", "."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn load_archetypes(path: &str) -> Result<ArchetypeSet> {
    ArchetypeSet::new(load_matrix_csv(Path::new(path))?.values)
}

fn run_init(name: &str, x: &DataMatrix, r: usize) -> Result<InitResult> {
    match name {
        "spa" => successive_projections_init(x, r),
        "spectral" => spectral_init(x, r),
        other => Err(Error::InvalidInput(format!(
            "unknown init {other:?}; expected spa or spectral"
        ))),
    }
}

/// Applies the optional solver tuning keys shared by `fit` and `sweep`.
fn solver_config(cfg: &KvConfig, lambda: Lambda, seed: u64) -> Result<SolverConfig> {
    let mut sc = SolverConfig::default();
    match lambda {
        Lambda::Finite(v) => sc.lambda = v,
        Lambda::Infinite => sc.lambda_infinite = true,
    }
    sc.seed = seed;
    if let Some(v) = cfg.usize_opt("max_iter")? {
        sc.max_iter = v;
    }
    sc.rel_tol = cfg.f64_or("rel_tol", sc.rel_tol)?;
    sc.grad_tol = cfg.f64_or("grad_tol", sc.grad_tol)?;
    sc.sgd_batch = cfg.usize_opt("sgd_batch")?;
    Ok(sc)
}

fn run_solver(
    name: &str,
    x: &DataMatrix,
    init: &ArchetypeSet,
    sc: &SolverConfig,
) -> Result<FitReport> {
    match name {
        "palm" => fit_palm(x, init, sc),
        "sgd" => fit_sgd(x, init, sc),
        "altmin" | "altmin-inf" => fit_altmin(x, init, sc),
        other => Err(Error::InvalidInput(format!(
            "unknown solver {other:?}; expected palm, sgd, altmin or altmin-inf"
        ))),
    }
}

/// Resolves solver name + lambda key into the effective pair. `altmin-inf`
/// is the hard-constraint method and rejects an explicit finite lambda.
fn resolve_lambda(cfg: &KvConfig, solver: &str) -> Result<Lambda> {
    let raw = cfg.get("lambda");
    if solver == "altmin-inf" {
        return match raw.map(Lambda::parse).transpose()? {
            None | Some(Lambda::Infinite) => Ok(Lambda::Infinite),
            Some(Lambda::Finite(v)) => Err(Error::InvalidInput(format!(
                "altmin-inf always uses an infinite penalty; remove lambda = {v}"
            ))),
        };
    }
    match raw {
        Some(raw) => Lambda::parse(raw),
        None => Ok(Lambda::Finite(1.0)),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SynthMeta<'a> {
    generator: &'a str,
    n: usize,
    d: usize,
    r: usize,
    sigma: f64,
    seed: u64,
    /// Largest Euclidean norm over the rows of the noise matrix.
    max_noise_row_norm: f64,
    config: &'a BTreeMap<String, String>,
}

fn archetypes_for(cfg: &KvConfig, r: usize, d: usize, seed: u64) -> Result<ArchetypeSet> {
    match cfg.get("h0") {
        Some(path) => {
            let h0 = load_archetypes(path)?;
            if h0.r() != r || h0.d() != d {
                return Err(Error::DimensionMismatch(format!(
                    "archetype file is {}x{}, settings ask for r = {r}, d = {d}",
                    h0.r(),
                    h0.d()
                )));
            }
            Ok(h0)
        }
        None => gen_smooth_archetypes(r, d, seed),
    }
}

pub fn cmd_synth(cfg: &KvConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let seed = cfg.u64_or("seed", 0)?;
    let generator = cfg.str_or("generator", "spectra").to_string();

    let dataset: NoisyDataset = match generator.as_str() {
        "toy" => {
            if cfg.f64_or("sigma", 0.0)? != 0.0 {
                return Err(Error::InvalidInput(
                    "the toy generator is noiseless; remove the sigma setting".into(),
                ));
            }
            gen_toy_2d(cfg.usize_or("n", TOY_DEFAULT_N)?, seed)?
        }
        "spectra" | "dense" | "separable" => {
            let n = cfg.usize_or("n", 250)?;
            let d = cfg.usize_or("d", 87)?;
            let r = cfg.usize_or("r", 4)?;
            let sigma = cfg.f64_or("sigma", 1e-3)?;
            let dirichlet = cfg.f64_or("dirichlet", 5.0)?;
            let h0 = archetypes_for(cfg, r, d, seed)?;
            match generator.as_str() {
                "spectra" => gen_dataset(&h0, &MixtureRecipe::spectra_benchmark(n, r, sigma)?, seed)?,
                "dense" => gen_dataset(&h0, &MixtureRecipe::dense(n, r, dirichlet, sigma), seed)?,
                _ => gen_separable(&h0, n, dirichlet, sigma, seed)?,
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown generator {other:?}; expected spectra, dense, separable or toy"
            )))
        }
    };

    save_matrix_csv(&dataset.x.values, &dir.join("X.csv"))?;
    save_matrix_csv(&dataset.x0.values, &dir.join("X0.csv"))?;
    save_matrix_csv(&dataset.w0.values, &dir.join("W0.csv"))?;
    save_matrix_csv(&dataset.h0.values, &dir.join("H0.csv"))?;
    let meta = SynthMeta {
        generator: &generator,
        n: dataset.x.n(),
        d: dataset.x.d(),
        r: dataset.h0.r(),
        sigma: dataset.sigma,
        seed: dataset.seed,
        max_noise_row_norm: dataset.delta,
        config: cfg.echo(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitJson<'a> {
    solver: &'a str,
    init: &'a str,
    lambda: String,
    r: usize,
    n: usize,
    d: usize,
    seed: u64,
    iterations: usize,
    converged: bool,
    final_grad_norm: f64,
    wall_seconds: f64,
    risk_initial: f64,
    risk_final: f64,
    risk_trace: &'a [f64],
    objective_trace: &'a [f64],
    init_selected_rows: Option<&'a [usize]>,
    init_diagnostics: &'a [String],
    solver_diagnostics: &'a [String],
    config: &'a BTreeMap<String, String>,
}

pub fn cmd_fit(cfg: &KvConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let input = cfg.require("input")?;
    let x = load_matrix_csv(Path::new(input))?;
    let r = cfg
        .usize_opt("r")?
        .ok_or_else(|| Error::InvalidInput("fit needs r (number of archetypes)".into()))?;
    let seed = cfg.u64_or("seed", 0)?;
    let solver = cfg.str_or("solver", "palm").to_string();
    let init_name = cfg.str_or("init", "spa").to_string();
    let lambda = resolve_lambda(cfg, &solver)?;

    let init = run_init(&init_name, &x, r)?;
    let sc = solver_config(cfg, lambda, seed)?;
    let report = run_solver(&solver, &x, &init.archetypes, &sc)?;

    save_matrix_csv(&report.archetypes.values, &dir.join("H_hat.csv"))?;
    save_matrix_csv(&report.weights.values, &dir.join("W_hat.csv"))?;
    let json = FitJson {
        solver: &solver,
        init: &init_name,
        lambda: lambda.echo(),
        r,
        n: x.n(),
        d: x.d(),
        seed,
        iterations: report.iterations,
        converged: report.converged,
        final_grad_norm: report.final_grad_norm,
        wall_seconds: report.wall_seconds,
        risk_initial: *report.risk_trace.first().unwrap_or(&f64::NAN),
        risk_final: *report.risk_trace.last().unwrap_or(&f64::NAN),
        risk_trace: &report.risk_trace,
        objective_trace: &report.psi_trace,
        init_selected_rows: init.selected_indices.as_deref(),
        init_diagnostics: &init.diagnostics,
        solver_diagnostics: &report.diagnostics,
        config: cfg.echo(),
    };
    write_json(&dir.join("report.json"), &json)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SpectrumJson {
    sigma_max: f64,
    sigma_min: f64,
    kappa: f64,
}

impl From<SpectrumDiagnostics> for SpectrumJson {
    fn from(s: SpectrumDiagnostics) -> Self {
        SpectrumJson { sigma_max: s.sigma_max, sigma_min: s.sigma_min, kappa: s.kappa }
    }
}

#[derive(Serialize)]
struct ArchetypeMatch {
    reference_row: usize,
    nearest_estimate_row: usize,
    squared_distance: f64,
    distance: f64,
}

#[derive(Serialize)]
struct EvalJson<'a> {
    /// Sum over reference archetypes of the squared distance to the nearest
    /// estimated archetype.
    loss: f64,
    sqrt_loss: f64,
    per_archetype: Vec<ArchetypeMatch>,
    reference_spectrum: SpectrumJson,
    estimate_spectrum: SpectrumJson,
    config: &'a BTreeMap<String, String>,
}

/// Per-reference-row nearest squared distances; the sum equals the loss.
fn nearest_rows(h0: &DMatrix<f64>, hhat: &DMatrix<f64>) -> Vec<ArchetypeMatch> {
    (0..h0.nrows())
        .map(|i| {
            let mut best = (0usize, f64::INFINITY);
            for j in 0..hhat.nrows() {
                let diff = h0.row(i) - hhat.row(j);
                let d2 = diff.norm_squared();
                if d2 < best.1 {
                    best = (j, d2);
                }
            }
            ArchetypeMatch {
                reference_row: i,
                nearest_estimate_row: best.0,
                squared_distance: best.1,
                distance: best.1.sqrt(),
            }
        })
        .collect()
}

pub fn cmd_eval(cfg: &KvConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let h0 = load_archetypes(cfg.require("h0")?)?;
    let hhat = load_archetypes(cfg.require("h_hat")?)?;
    let loss = loss_l(&h0, &hhat)?;
    let json = EvalJson {
        loss,
        sqrt_loss: loss.sqrt(),
        per_archetype: nearest_rows(&h0.values, &hhat.values),
        reference_spectrum: spectrum(&h0)?.into(),
        estimate_spectrum: spectrum(&hhat)?.into(),
        config: cfg.echo(),
    };
    write_json(&dir.join("metrics.json"), &json)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepCell {
    sigma: f64,
    seed: u64,
    sqrt_loss: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepJson<'a> {
    generator: &'a str,
    solver: &'a str,
    init: &'a str,
    lambda: &'a str,
    n: usize,
    d: usize,
    r: usize,
    sigma_grid: &'a [f64],
    seeds: &'a [u64],
    failed_cells: usize,
    cells: &'a [SweepCell],
    config: &'a BTreeMap<String, String>,
}

/// Noise-dependent penalty choice used when `lambda = auto`: a strong pull
/// toward the data hull at low noise, a weaker one once noise dominates.
fn auto_lambda(sigma: f64) -> f64 {
    if sigma <= 1e-3 {
        4.0
    } else {
        0.8
    }
}

pub fn cmd_sweep(cfg: &KvConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let seed = cfg.u64_or("seed", 0)?;
    let generator = cfg.str_or("generator", "spectra").to_string();
    if generator != "spectra" && generator != "separable" {
        return Err(Error::InvalidInput(format!(
            "sweep generator must be spectra or separable, got {generator:?}"
        )));
    }
    let n = cfg.usize_or("n", 250)?;
    let d = cfg.usize_or("d", 87)?;
    let r = cfg.usize_or("r", 4)?;
    let dirichlet = cfg.f64_or("dirichlet", 5.0)?;
    let solver = cfg.str_or("solver", "palm").to_string();
    let init_name = cfg.str_or("init", "spa").to_string();
    let lambda_raw = cfg.str_or("lambda", "auto").to_string();
    // Validate a fixed lambda eagerly so a typo fails before any work runs.
    if lambda_raw != "auto" {
        Lambda::parse(&lambda_raw)?;
    }
    if solver == "altmin-inf" && lambda_raw != "auto" {
        if let Lambda::Finite(v) = Lambda::parse(&lambda_raw)? {
            return Err(Error::InvalidInput(format!(
                "altmin-inf always uses an infinite penalty; remove lambda = {v}"
            )));
        }
    }

    let grid_raw = cfg.str_or("sigma_grid", "0,0.0005,0.001,0.002,0.004").to_string();
    let sigma_grid = cfg.f64_list("sigma_grid", &grid_raw)?;
    if sigma_grid.is_empty() {
        return Err(Error::InvalidInput("sigma_grid is empty".into()));
    }
    if sigma_grid.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput("sigma_grid values must be non-negative".into()));
    }
    if sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("sigma_grid must be strictly ascending".into()));
    }

    let seeds: Vec<u64> = match cfg.get("seeds") {
        Some(raw) => cfg.u64_list("seeds", raw)?,
        None => {
            let replicates = cfg.usize_or("replicates", 10)?;
            (0..replicates as u64).map(|k| seed.wrapping_add(k)).collect()
        }
    };
    if seeds.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one replicate seed".into()));
    }

    let h0 = archetypes_for(cfg, r, d, seed)?;

    let jobs: Vec<(f64, u64)> = sigma_grid
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&k| (s, k)))
        .collect();
    let outcomes: Vec<std::result::Result<f64, String>> = jobs
        .par_iter()
        .map(|&(sigma, cell_seed)| {
            let run = || -> Result<f64> {
                let ds = match generator.as_str() {
                    "spectra" => {
                        gen_dataset(&h0, &MixtureRecipe::spectra_benchmark(n, r, sigma)?, cell_seed)?
                    }
                    _ => gen_separable(&h0, n, dirichlet, sigma, cell_seed)?,
                };
                let init = run_init(&init_name, &ds.x, r)?;
                let lambda = if lambda_raw == "auto" {
                    Lambda::Finite(auto_lambda(sigma))
                } else {
                    Lambda::parse(&lambda_raw)?
                };
                let sc = solver_config(cfg, lambda, cell_seed)?;
                let report = run_solver(&solver, &ds.x, &init.archetypes, &sc)?;
                Ok(loss_l(&h0, &report.archetypes)?.sqrt())
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let cells: Vec<SweepCell> = jobs
        .iter()
        .zip(&outcomes)
        .map(|(&(sigma, cell_seed), outcome)| SweepCell {
            sigma,
            seed: cell_seed,
            sqrt_loss: outcome.as_ref().ok().copied(),
            error: outcome.as_ref().err().cloned(),
        })
        .collect();

    let mut curve = String::new();
    curve.push_str("sigma,mean_sqrt_loss,std_sqrt_loss");
    for k in 0..seeds.len() {
        curve.push_str(&format!(",rep_{k}"));
    }
    curve.push('\n');
    for (gi, &sigma) in sigma_grid.iter().enumerate() {
        let row = &cells[gi * seeds.len()..(gi + 1) * seeds.len()];
        let ok: Vec<f64> = row.iter().filter_map(|c| c.sqrt_loss).collect();
        let mean = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().sum::<f64>() / ok.len() as f64
        };
        let std = if ok.len() < 2 {
            if ok.is_empty() {
                f64::NAN
            } else {
                0.0
            }
        } else {
            let var =
                ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (ok.len() - 1) as f64;
            var.sqrt()
        };
        curve.push_str(&fmt_f64(sigma));
        curve.push(',');
        curve.push_str(&fmt_f64(mean));
        curve.push(',');
        curve.push_str(&fmt_f64(std));
        for cell in row {
            curve.push(',');
            curve.push_str(&fmt_f64(cell.sqrt_loss.unwrap_or(f64::NAN)));
        }
        curve.push('\n');
    }
    fs::write(dir.join("curve.csv"), curve)?;

    let failed_cells = cells.iter().filter(|c| c.error.is_some()).count();
    let json = SweepJson {
        generator: &generator,
        solver: &solver,
        init: &init_name,
        lambda: &lambda_raw,
        n,
        d,
        r,
        sigma_grid: &sigma_grid,
        seeds: &seeds,
        failed_cells,
        cells: &cells,
        config: cfg.echo(),
    };
    write_json(&dir.join("sweep.json"), &json)?;

    if failed_cells > 0 {
        return Err(Error::Numerical(format!(
            "{failed_cells} of {} sweep cells failed; details in sweep.json",
            cells.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// alpha
// ---------------------------------------------------------------------------

pub fn cmd_alpha(cfg: &KvConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let grid_raw = cfg
        .str_or("grid", "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45")
        .to_string();
    let grid = cfg.f64_list("grid", &grid_raw)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("grid is empty".into()));
    }

    let mut search = AlphaSearchConfig::default();
    search.seed = cfg.u64_or("seed", 0)?;
    search.restarts = cfg.usize_or("restarts", search.restarts)?;
    search.max_pattern_iters = cfg.usize_or("pattern_iters", search.max_pattern_iters)?;
    search.max_evals = cfg.usize_opt("max_evals")?;

    // Each grid point is an independent search; parallelism lives inside
    // the search itself, so run the grid sequentially in order.
    let mut csv = String::from("l,alpha_hat,search_evals,budget_exhausted\n");
    for &l in &grid {
        let instance = hexagon_family(l)?;
        let estimate = estimate_alpha(&instance.data, &instance.archetypes, &search)?;
        csv.push_str(&fmt_f64(l));
        csv.push(',');
        csv.push_str(&fmt_f64(estimate.alpha_hat));
        csv.push(',');
        csv.push_str(&estimate.search_evals.to_string());
        csv.push(',');
        csv.push(if estimate.budget_exhausted { '1' } else { '0' });
        csv.push('\n');
    }
    fs::write(dir.join("alpha_curve.csv"), csv)?;
    Ok(())
}
