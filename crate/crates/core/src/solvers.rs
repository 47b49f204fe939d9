//! Descent solvers for the regularized risk: a proximal alternating
//! linearized scheme (PALM), subsampled gradient descent with Armijo
//! backtracking, and alternating minimization, plus the shared
//! simplex-constrained weight solve they all build on.
//!
//! All three attack `R_lambda(H) = dd(X;H) + lambda * dd(H;X)`. The
//! hard-constraint variant (archetypes confined to `conv(X)`, recovering the
//! classic Cutler-Breiman method) is selected by `lambda_infinite`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{project_simplex, HullProjector};
use crate::risk::{project_rows, ArchetypeSet, DataMatrix};
use crate::rng::CounterRng;

pub const DEFAULT_MAX_ITER: usize = 5000;
pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
pub const DEFAULT_EPSILON_STEP: f64 = 1e-8;
pub const DEFAULT_BACKTRACK_SHRINK: f64 = 0.5;
pub const DEFAULT_ARMIJO_C: f64 = 1e-4;

/// Risk-change stall length: stop after this many consecutive iterations
/// with relative change below `rel_tol`.
const STALL_ITERS: usize = 5;
/// Accuracy of the inner hull projections feeding traces and updates.
const SOLVER_PROJECTION_TOL: f64 = 1e-12;
const SOLVER_PROJECTION_MAX_ITER: usize = 50_000;
/// The PALM objective trace promises monotonicity within 1e-12 absolute, so
/// its iteratively computed penalty term gets extra headroom.
const PSI_PROJECTION_TOL: f64 = 1e-14;
/// A column of weights summing below this is an unused archetype.
const UNUSED_ARCHETYPE_TOL: f64 = 1e-18;
/// Line-search halvings before giving up on a direction.
const MAX_BACKTRACKS: usize = 60;

const TAG_SGD_BATCH: u64 = 0x5347_4442;

/// Tuning knobs shared by all solvers. `Default` gives the documented
/// defaults; `seed` only affects the subsampled solver.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Hard-constraint mode: the penalty weight is taken as infinite and
    /// archetypes are kept inside `conv(X)` by projection.
    pub lambda_infinite: bool,
    pub max_iter: usize,
    /// Stop when the relative risk change stays below this for
    /// `STALL_ITERS` consecutive iterations.
    pub rel_tol: f64,
    /// Stop when the stationarity measure drops below this.
    pub grad_tol: f64,
    /// Floor for the PALM step-size moduli.
    pub epsilon_step: f64,
    /// Subsample size for the stochastic solver; `None` means `min(n, 50)`.
    pub sgd_batch: Option<usize>,
    pub backtrack_shrink: f64,
    pub armijo_c: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1.0,
            lambda_infinite: false,
            max_iter: DEFAULT_MAX_ITER,
            rel_tol: DEFAULT_REL_TOL,
            grad_tol: DEFAULT_GRAD_TOL,
            epsilon_step: DEFAULT_EPSILON_STEP,
            sgd_batch: None,
            backtrack_shrink: DEFAULT_BACKTRACK_SHRINK,
            armijo_c: DEFAULT_ARMIJO_C,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        SolverConfig { lambda, ..Default::default() }
    }

    pub fn with_infinite_lambda() -> Self {
        SolverConfig { lambda_infinite: true, ..Default::default() }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !self.lambda_infinite && (!self.lambda.is_finite() || self.lambda < 0.0) {
            return Err(Error::InvalidInput(
                "lambda must be finite and non-negative (or set lambda_infinite)".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("grad_tol", self.grad_tol),
            ("epsilon_step", self.epsilon_step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite")));
            }
        }
        for (name, v) in [
            ("backtrack_shrink", self.backtrack_shrink),
            ("armijo_c", self.armijo_c),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie strictly in (0,1)")));
            }
        }
        if let Some(b) = self.sgd_batch {
            if b == 0 || b > n {
                return Err(Error::InvalidInput(format!(
                    "sgd_batch must lie in [1, n] = [1, {n}], got {b}"
                )));
            }
        }
        Ok(())
    }

    fn effective_batch(&self, n: usize) -> usize {
        self.sgd_batch.unwrap_or_else(|| n.min(50))
    }
}

/// Mixture weights, one simplex row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub values: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for (i, row) in values.row_iter().enumerate() {
            if row.iter().any(|&w| !w.is_finite() || w < -1e-12) {
                return Err(Error::InvalidInput(format!(
                    "weight row {i} has a negative or non-finite entry"
                )));
            }
            if (row.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "weight row {i} sums to {}, not 1",
                    row.sum()
                )));
            }
        }
        Ok(WeightMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn r(&self) -> usize {
        self.values.ncols()
    }
}

/// Outcome of a solver run. `risk_trace[k]` is the regularized risk of the
/// iterate after `k` iterations (index 0 is the initial point); in
/// hard-constraint mode the penalty weight is infinite, so trace entries
/// carry the fit term alone. `psi_trace` is the PALM majorization objective
/// `|X - WH|_F^2 + lambda * dd(H;X)` and stays empty for the other solvers.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub archetypes: ArchetypeSet,
    pub weights: WeightMatrix,
    pub risk_trace: Vec<f64>,
    pub psi_trace: Vec<f64>,
    /// Stationarity at the final iterate: gradient Frobenius norm for
    /// finite penalties, a projected fixed-point residual in
    /// hard-constraint mode.
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    pub diagnostics: Vec<String>,
}

/// Row-wise simplex-constrained least squares: row i of the result
/// minimizes `|H^T w - x_i|` over the simplex.
pub fn solve_weights(x: &DataMatrix, h: &ArchetypeSet) -> Result<WeightMatrix> {
    check_dims(x, h)?;
    let (weights, _fit, all_converged) = weight_solve(
        &x.values,
        &h.values,
        SOLVER_PROJECTION_TOL,
        SOLVER_PROJECTION_MAX_ITER,
        None,
    )?;
    if !all_converged {
        return Err(Error::Numerical(
            "a weight row failed to converge within the projection budget".into(),
        ));
    }
    WeightMatrix::new(weights)
}

fn check_dims(x: &DataMatrix, h: &ArchetypeSet) -> Result<()> {
    if x.d() != h.d() {
        return Err(Error::DimensionMismatch(format!(
            "data has dimension {}, archetypes have dimension {}",
            x.d(),
            h.d()
        )));
    }
    Ok(())
}

fn weight_solve(
    x: &DMatrix<f64>,
    h: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
    warm: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, f64, bool)> {
    let hull = HullProjector::new(h)?;
    let (weights, _points, fit, ok) = project_rows(x, &hull, tol, max_iter, warm)?;
    Ok((weights, fit, ok))
}

fn check_finite_iterate(h: &DMatrix<f64>, iteration: usize) -> Result<()> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "archetype iterate became non-finite at iteration {iteration}"
        )));
    }
    Ok(())
}

/// Tracks the risk-stall stopping rule.
struct StallCounter {
    rel_tol: f64,
    previous: Option<f64>,
    calm: usize,
}

impl StallCounter {
    fn new(rel_tol: f64) -> Self {
        StallCounter { rel_tol, previous: None, calm: 0 }
    }

    /// Feeds the next risk value; true once the change has stayed small for
    /// `STALL_ITERS` consecutive iterations.
    fn stalled(&mut self, value: f64) -> bool {
        if let Some(prev) = self.previous {
            if (prev - value).abs() <= self.rel_tol * value.abs().max(1e-300) {
                self.calm += 1;
            } else {
                self.calm = 0;
            }
        }
        self.previous = Some(value);
        self.calm >= STALL_ITERS
    }
}

fn rowwise_simplex_projection(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rows: Vec<DVector<f64>> = (0..m.nrows())
        .into_par_iter()
        .map(|i| project_simplex(&m.row(i).transpose()).map(|w| w.values))
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, w) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&w.transpose());
    }
    Ok(out)
}

/// Proximal alternating linearized minimization.
///
/// Per iteration: a gradient step on the archetypes with modulus
/// `gamma1 = 1.01 * max(|W^T W|_F, eps)`, the proximal blend
/// `H - lambda/(lambda+gamma1) * (H - proj_conv(X)(H))`, then a
/// simplex-projected gradient step on the weights with modulus
/// `gamma2 = 1.01 * max(|H H^T|_F, eps)`. With these moduli the objective
/// `|X - WH|_F^2 + lambda*dd(H;X)` never increases.
pub fn fit_palm(x: &DataMatrix, h_init: &ArchetypeSet, cfg: &SolverConfig) -> Result<FitReport> {
    let start = Instant::now();
    check_dims(x, h_init)?;
    cfg.validate(x.n())?;
    let (_n, r) = (x.n(), h_init.r());
    let lambda = if cfg.lambda_infinite { 0.0 } else { cfg.lambda };
    let infinite = cfg.lambda_infinite;
    let eps = cfg.epsilon_step;

    let x_hull = HullProjector::new(&x.values)?;
    let mut diagnostics = Vec::new();
    let mut h = h_init.values.clone();

    // W starts from the optimal weights of the initial archetypes.
    let (mut w, fit0, w0_ok) = weight_solve(
        &x.values,
        &h,
        SOLVER_PROJECTION_TOL,
        SOLVER_PROJECTION_MAX_ITER,
        None,
    )?;
    if !w0_ok {
        diagnostics.push("initial weight solve hit its projection budget".to_string());
    }
    // Warm-start stores for the recurring projection families.
    let mut trace_fit_warm = w.clone();
    let mut psi_reg_warm: Option<DMatrix<f64>> = None;
    let mut blend_warm: Option<DMatrix<f64>> = None;

    // Penalty term of H against conv(X), reused by both traces.
    let reg_of = |h_now: &DMatrix<f64>,
                      warm: &mut Option<DMatrix<f64>>|
     -> Result<(f64, DMatrix<f64>)> {
        let (weights, points, value, _ok) = project_rows(
            h_now,
            &x_hull,
            PSI_PROJECTION_TOL,
            SOLVER_PROJECTION_MAX_ITER,
            warm.as_ref(),
        )?;
        *warm = Some(weights);
        Ok((value, points))
    };

    let needs_reg = infinite || lambda > 0.0;
    let (mut reg, mut reg_points) = if needs_reg {
        reg_of(&h, &mut psi_reg_warm)?
    } else {
        (0.0, DMatrix::zeros(r, x.d()))
    };

    let psi_of = |fro_fit: f64, reg: f64| if infinite { fro_fit } else { fro_fit + lambda * reg };
    let risk_of = |fit: f64, reg: f64| if infinite { fit } else { fit + lambda * reg };

    let fro_fit0 = (&w * &h - &x.values).norm_squared();
    let mut psi_trace = vec![psi_of(fro_fit0, reg)];
    let mut risk_trace = vec![risk_of(fit0, reg)];

    let mut stall = StallCounter::new(cfg.rel_tol);
    stall.stalled(risk_trace[0]);
    let mut converged = false;
    let mut iterations = 0;
    let mut final_grad_norm = f64::INFINITY;

    for k in 0..cfg.max_iter {
        // Archetype step.
        let gamma1 = 1.01 * (w.transpose() * &w).norm().max(eps);
        let h_tilde = &h - (w.transpose() * (&w * &h - &x.values)) / gamma1;
        let h_next = if infinite {
            let (_, points, _, _) = project_rows(
                &h_tilde,
                &x_hull,
                SOLVER_PROJECTION_TOL,
                SOLVER_PROJECTION_MAX_ITER,
                blend_warm.as_ref(),
            )?;
            points
        } else if lambda > 0.0 {
            let (weights, points, _, _) = project_rows(
                &h_tilde,
                &x_hull,
                SOLVER_PROJECTION_TOL,
                SOLVER_PROJECTION_MAX_ITER,
                blend_warm.as_ref(),
            )?;
            blend_warm = Some(weights);
            let blend = lambda / (lambda + gamma1);
            &h_tilde - (&h_tilde - points) * blend
        } else {
            h_tilde
        };
        check_finite_iterate(&h_next, k + 1)?;

        // Weight step.
        let gamma2 = 1.01 * (&h_next * h_next.transpose()).norm().max(eps);
        let w_next =
            rowwise_simplex_projection(&(&w - (&w * &h_next - &x.values) * h_next.transpose() / gamma2))?;

        // Traces at the new iterate.
        if needs_reg {
            let (reg_next, points_next) = reg_of(&h_next, &mut psi_reg_warm)?;
            reg = reg_next;
            reg_points = points_next;
        }
        let fro_fit = (&w_next * &h_next - &x.values).norm_squared();
        psi_trace.push(psi_of(fro_fit, reg));

        let (a, fit, _fit_ok) = weight_solve(
            &x.values,
            &h_next,
            SOLVER_PROJECTION_TOL,
            SOLVER_PROJECTION_MAX_ITER,
            Some(&trace_fit_warm),
        )?;
        trace_fit_warm = a.clone();
        risk_trace.push(risk_of(fit, reg));

        // Stationarity measure.
        final_grad_norm = if infinite {
            let dh = (&h_next - &h).norm() * gamma1;
            let dw = (&w_next - &w).norm() * gamma2;
            dh.max(dw)
        } else {
            let mut grad = (a.transpose() * (&a * &h_next - &x.values)) * 2.0;
            if lambda > 0.0 {
                grad += (&h_next - &reg_points) * (2.0 * lambda);
            }
            grad.norm()
        };

        h = h_next;
        w = w_next;
        iterations = k + 1;

        let stalled = stall.stalled(*risk_trace.last().expect("pushed above"));
        if final_grad_norm <= cfg.grad_tol || stalled {
            converged = true;
            break;
        }
    }

    Ok(FitReport {
        archetypes: ArchetypeSet::new(h)?,
        weights: WeightMatrix::new(w)?,
        risk_trace,
        psi_trace,
        final_grad_norm,
        iterations,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        diagnostics,
    })
}

/// Assembles the subsampled risk-gradient direction: the fit part is summed
/// over the batch rows with the `2n/|S|` rescaling, the penalty part enters
/// in full. With the batch equal to the whole index range the result is the
/// exact risk gradient, computed through the identical expression.
fn assemble_direction(
    a: &DMatrix<f64>,
    x: &DMatrix<f64>,
    h: &DMatrix<f64>,
    reg_points: &DMatrix<f64>,
    lambda: f64,
    batch: &[usize],
) -> DMatrix<f64> {
    let n = x.nrows();
    let s = batch.len();
    let full = s == n && batch.iter().enumerate().all(|(pos, &i)| pos == i);
    let (a_s, x_s);
    let (a_ref, x_ref) = if full {
        (a, x)
    } else {
        a_s = gather_rows(a, batch);
        x_s = gather_rows(x, batch);
        (&a_s, &x_s)
    };
    let scale = 2.0 * n as f64 / s as f64;
    let mut g = (a_ref.transpose() * (a_ref * h - x_ref)) * scale;
    if lambda > 0.0 {
        g += (h - reg_points) * (2.0 * lambda);
    }
    g
}

fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (pos, &i) in rows.iter().enumerate() {
        out.row_mut(pos).copy_from(&m.row(i));
    }
    out
}

/// Subsampled direction at `(X, H, lambda)` for a given sorted batch,
/// evaluated from scratch at gradient-grade projection accuracy. Exposed to
/// the test suite: with the full batch it must reproduce `risk_gradient`
/// bit for bit.
#[cfg(test)]
pub(crate) fn sgd_direction(
    x: &DataMatrix,
    h: &ArchetypeSet,
    lambda: f64,
    batch: &[usize],
) -> Result<DMatrix<f64>> {
    let breakdown = crate::risk::risk_breakdown(
        x,
        h,
        lambda,
        crate::risk::GRADIENT_PROJECTION_TOL,
        crate::risk::GRADIENT_PROJECTION_MAX_ITER,
    )?;
    Ok(assemble_direction(
        &breakdown.fit_weights,
        &x.values,
        &h.values,
        &breakdown.reg_points,
        lambda,
        batch,
    ))
}

/// Gradient descent on the regularized risk with the fit term subsampled.
///
/// Each iteration draws a uniform batch, forms the rescaled direction, and
/// picks the step by Armijo backtracking on the full risk, so accepted
/// steps never increase it. Batches come from the seeded counter generator;
/// runs replay bit-identically for a fixed seed.
pub fn fit_sgd(x: &DataMatrix, h_init: &ArchetypeSet, cfg: &SolverConfig) -> Result<FitReport> {
    let start = Instant::now();
    check_dims(x, h_init)?;
    cfg.validate(x.n())?;
    if cfg.lambda_infinite {
        return Err(Error::InvalidInput(
            "the subsampled solver needs a finite lambda; use the alternating solver for the hard-constraint form".into(),
        ));
    }
    let n = x.n();
    let lambda = cfg.lambda;
    let batch_size = cfg.effective_batch(n);
    let mut rng = CounterRng::new(cfg.seed).split(TAG_SGD_BATCH);

    let x_hull = HullProjector::new(&x.values)?;
    let mut fit_warm: Option<DMatrix<f64>> = None;
    let mut reg_warm: Option<DMatrix<f64>> = None;

    // Full risk with the minimizing weights and penalty projections kept.
    let evaluate = |h_now: &DMatrix<f64>,
                        fit_warm: &mut Option<DMatrix<f64>>,
                        reg_warm: &mut Option<DMatrix<f64>>|
     -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
        let h_hull = HullProjector::new(h_now)?;
        let (a, _points, fit, _ok) = project_rows(
            &x.values,
            &h_hull,
            SOLVER_PROJECTION_TOL,
            SOLVER_PROJECTION_MAX_ITER,
            fit_warm.as_ref(),
        )?;
        *fit_warm = Some(a.clone());
        let (reg, reg_points) = if lambda > 0.0 {
            let (rw, points, reg, _) = project_rows(
                h_now,
                &x_hull,
                SOLVER_PROJECTION_TOL,
                SOLVER_PROJECTION_MAX_ITER,
                reg_warm.as_ref(),
            )?;
            *reg_warm = Some(rw);
            (reg, points)
        } else {
            (0.0, DMatrix::zeros(h_now.nrows(), h_now.ncols()))
        };
        Ok((fit + lambda * reg, a, reg_points))
    };

    let mut h = h_init.values.clone();
    let (mut risk, mut a, mut reg_points) = evaluate(&h, &mut fit_warm, &mut reg_warm)?;
    let mut risk_trace = vec![risk];
    let mut stall = StallCounter::new(cfg.rel_tol);
    stall.stalled(risk);

    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut final_grad_norm;

    loop {
        // Full gradient is a byproduct of the last evaluation; it drives
        // the stationarity stop, the Armijo slope, and the fallback
        // direction.
        let full_index: Vec<usize> = (0..n).collect();
        let full_grad = assemble_direction(&a, &x.values, &h, &reg_points, lambda, &full_index);
        final_grad_norm = full_grad.norm();
        if final_grad_norm <= cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }

        let batch = rng.sample_distinct(n, batch_size);
        let direction = assemble_direction(&a, &x.values, &h, &reg_points, lambda, &batch);

        let mut accepted = false;
        for attempt in 0..2 {
            let dir = if attempt == 0 { &direction } else { &full_grad };
            // Sufficient decrease is measured against the true directional
            // derivative of the full risk, not |dir|^2: a noisy subsampled
            // direction has |dir|^2 far above <grad, dir>, and demanding
            // c*step*|dir|^2 drives the accepted step toward zero, which
            // trips the relative-change stop long before stationarity.
            let slope = full_grad.dot(dir);
            if slope <= 0.0 {
                if attempt == 0 && batch.len() < n {
                    diagnostics.push(format!(
                        "iteration {}: subsampled direction is not a descent direction; retrying with the full gradient",
                        iterations + 1
                    ));
                    continue;
                }
                break;
            }
            // Every line search restarts at the same initial step so one
            // unlucky batch cannot poison the step size of later
            // iterations.
            let mut step = INITIAL_STEP;
            for _ in 0..MAX_BACKTRACKS {
                let h_cand = &h - dir * step;
                check_finite_iterate(&h_cand, iterations + 1)?;
                let (risk_cand, a_cand, reg_cand) =
                    evaluate(&h_cand, &mut fit_warm, &mut reg_warm)?;
                if risk_cand <= risk - cfg.armijo_c * step * slope {
                    h = h_cand;
                    risk = risk_cand;
                    a = a_cand;
                    reg_points = reg_cand;
                    accepted = true;
                    break;
                }
                step *= cfg.backtrack_shrink;
            }
            if accepted {
                break;
            }
            if attempt == 0 && batch.len() < n {
                diagnostics.push(format!(
                    "iteration {}: subsampled direction admitted no descent step; retrying with the full gradient",
                    iterations + 1
                ));
            }
        }
        if !accepted {
            diagnostics.push(format!(
                "iteration {}: backtracking exhausted without descent; stopping",
                iterations + 1
            ));
            converged = final_grad_norm <= cfg.grad_tol * 10.0;
            break;
        }

        iterations += 1;
        risk_trace.push(risk);
        if stall.stalled(risk) {
            converged = true;
            break;
        }
    }

    let (w, _fit, w_ok) = weight_solve(
        &x.values,
        &h,
        SOLVER_PROJECTION_TOL,
        SOLVER_PROJECTION_MAX_ITER,
        fit_warm.as_ref(),
    )?;
    if !w_ok {
        diagnostics.push("final weight solve hit its projection budget".to_string());
    }

    Ok(FitReport {
        archetypes: ArchetypeSet::new(h)?,
        weights: WeightMatrix::new(w)?,
        risk_trace,
        psi_trace: Vec::new(),
        final_grad_norm,
        iterations,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        diagnostics,
    })
}

/// Alternating minimization: exact weight solve, then one pass of exact
/// per-archetype updates.
///
/// For archetype `l` with column weight mass `wtot = sum_i w_il^2` and
/// pulled-back target `v = h_l + w_l^T (X - WH) / wtot`, the joint minimum
/// over the archetype and its hull coefficients is `alpha* = proj_conv(X)(v)`
/// and `h_l = (wtot * v + lambda * X^T alpha*) / (wtot + lambda)`; with an
/// infinite penalty the archetype is the projection itself, recovering the
/// classic hard-constraint method. The risk never increases from sweep to
/// sweep. Unused archetypes (`wtot = 0`) are reseeded to the worst-fit data
/// row and noted in the diagnostics.
pub fn fit_altmin(x: &DataMatrix, h_init: &ArchetypeSet, cfg: &SolverConfig) -> Result<FitReport> {
    let start = Instant::now();
    check_dims(x, h_init)?;
    cfg.validate(x.n())?;
    let (n, r) = (x.n(), h_init.r());
    let lambda = if cfg.lambda_infinite { 0.0 } else { cfg.lambda };
    let infinite = cfg.lambda_infinite;

    let x_hull = HullProjector::new(&x.values)?;
    let mut h = h_init.values.clone();
    let mut diagnostics = Vec::new();

    let mut w_warm: Option<DMatrix<f64>> = None;
    let mut trace_reg_warm: Option<DMatrix<f64>> = None;
    let mut update_warm: Option<DMatrix<f64>> = None;

    let mut risk_trace: Vec<f64> = Vec::new();
    let mut stall = StallCounter::new(cfg.rel_tol);
    let mut converged = false;
    let mut iterations = 0;
    let mut final_grad_norm = f64::INFINITY;
    let mut w = DMatrix::zeros(n, r);

    for sweep in 0..=cfg.max_iter {
        // Exact weights for the current archetypes; doubles as the risk
        // evaluation of the sweep that just finished.
        let (w_now, fit, _ok) = weight_solve(
            &x.values,
            &h,
            SOLVER_PROJECTION_TOL,
            SOLVER_PROJECTION_MAX_ITER,
            w_warm.as_ref(),
        )?;
        w_warm = Some(w_now.clone());
        w = w_now;

        let needs_reg = !infinite && lambda > 0.0;
        let (reg, reg_points) = if needs_reg || infinite {
            let (rw, points, reg, _) = project_rows(
                &h,
                &x_hull,
                SOLVER_PROJECTION_TOL,
                SOLVER_PROJECTION_MAX_ITER,
                trace_reg_warm.as_ref(),
            )?;
            trace_reg_warm = Some(rw);
            (reg, points)
        } else {
            (0.0, DMatrix::zeros(r, x.d()))
        };
        risk_trace.push(if infinite { fit } else { fit + lambda * reg });

        final_grad_norm = if infinite {
            // Projected fixed-point residual of the constrained fit term.
            let grad = (w.transpose() * (&w * &h - &x.values)) * 2.0;
            let gamma = 1.01 * (w.transpose() * &w).norm().max(cfg.epsilon_step);
            let (_, proj, _, _) = project_rows(
                &(&h - &grad / gamma),
                &x_hull,
                SOLVER_PROJECTION_TOL,
                SOLVER_PROJECTION_MAX_ITER,
                trace_reg_warm.as_ref(),
            )?;
            (&h - proj).norm() * gamma
        } else {
            let mut grad = (w.transpose() * (&w * &h - &x.values)) * 2.0;
            if lambda > 0.0 {
                grad += (&h - &reg_points) * (2.0 * lambda);
            }
            grad.norm()
        };

        let stalled = stall.stalled(*risk_trace.last().expect("pushed above"));
        if final_grad_norm <= cfg.grad_tol || stalled {
            converged = true;
            break;
        }
        if sweep == cfg.max_iter {
            break;
        }
        iterations = sweep + 1;

        // Sequential per-archetype exact updates.
        let mut residual = &x.values - &w * &h;
        let mut update_rows = match update_warm.take() {
            Some(m) => m,
            None => DMatrix::from_element(r, n, 1.0 / n as f64),
        };
        for l in 0..r {
            let col = w.column(l);
            let wtot = col.norm_squared();
            if wtot <= UNUSED_ARCHETYPE_TOL {
                let worst = (0..n)
                    .max_by(|&i, &j| {
                        residual
                            .row(i)
                            .norm_squared()
                            .partial_cmp(&residual.row(j).norm_squared())
                            .expect("finite residuals")
                            .then(j.cmp(&i))
                    })
                    .expect("n >= 1");
                diagnostics.push(format!(
                    "sweep {}: archetype {} unused; reseeded to data row {}",
                    sweep + 1,
                    l + 1,
                    worst
                ));
                let h_old = h.row(l).transpose();
                let h_new = x.values.row(worst).transpose();
                let delta = &h_old - &h_new;
                for i in 0..n {
                    let wi = w[(i, l)];
                    if wi != 0.0 {
                        for c in 0..x.d() {
                            residual[(i, c)] += wi * delta[c];
                        }
                    }
                }
                h.row_mut(l).copy_from(&h_new.transpose());
                continue;
            }
            let v = h.row(l).transpose() + (residual.transpose() * col) / wtot;
            let warm_row = crate::geometry::SimplexWeights {
                values: update_rows.row(l).transpose(),
            };
            let proj = x_hull.project(
                &v,
                SOLVER_PROJECTION_TOL,
                SOLVER_PROJECTION_MAX_ITER,
                Some(&warm_row),
            )?;
            update_rows.row_mut(l).copy_from(&proj.weights.values.transpose());
            let h_new: DVector<f64> = if infinite {
                proj.point
            } else {
                (&v * wtot + proj.point * lambda) / (wtot + lambda)
            };
            if h_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "archetype iterate became non-finite at sweep {}",
                    sweep + 1
                )));
            }
            let h_old = h.row(l).transpose();
            let delta = &h_old - &h_new;
            // Rank-one residual refresh: X - WH after changing one row of H.
            for i in 0..n {
                let wi = w[(i, l)];
                if wi != 0.0 {
                    for c in 0..x.d() {
                        residual[(i, c)] += wi * delta[c];
                    }
                }
            }
            h.row_mut(l).copy_from(&h_new.transpose());
        }
        update_warm = Some(update_rows);
    }

    Ok(FitReport {
        archetypes: ArchetypeSet::new(h)?,
        weights: WeightMatrix::new(w)?,
        risk_trace,
        psi_trace: Vec::new(),
        final_grad_norm,
        iterations,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        diagnostics,
    })
}
