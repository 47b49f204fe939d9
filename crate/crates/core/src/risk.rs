//! Archetypal losses: hull-distance sums, the regularized risk and its
//! gradient, the archetype-recovery loss, and singular-spectrum diagnostics.
//!
//! Conventions: `X` is n×d with one observation per row, `H` is r×d with one
//! archetype per row. The regularized risk is
//!
//! `R_lambda(H) = dd(X;H) + lambda * dd(H;X)`
//!
//! where `dd(U;V)` sums, over rows `u` of `U`, the squared Euclidean distance
//! from `u` to the convex hull of the rows of `V`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{HullProjector, SimplexWeights};

/// Projection accuracy used when a risk value feeds a gradient or a
/// convergence decision. Tighter than the general-purpose default because
/// differentiating through the minimizer needs accurate argmins.
pub const GRADIENT_PROJECTION_TOL: f64 = 1e-14;
pub const GRADIENT_PROJECTION_MAX_ITER: usize = 200_000;

/// Observations, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput("data matrix must be nonempty".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("data matrix has a non-finite entry".into()));
        }
        Ok(DataMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }
}

/// Archetypes, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeSet {
    pub values: DMatrix<f64>,
}

impl ArchetypeSet {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput("archetype set must be nonempty".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("archetype set has a non-finite entry".into()));
        }
        Ok(ArchetypeSet { values })
    }

    pub fn r(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }
}

/// Regularized risk split into its two hull-distance terms.
#[derive(Debug, Clone, Copy)]
pub struct RiskValue {
    /// `dd(X;H)`: how far the data sit outside the archetype hull.
    pub fit_term: f64,
    /// `dd(H;X)`: how far the archetypes sit outside the data hull.
    pub reg_term: f64,
    pub lambda: f64,
    /// `fit_term + lambda * reg_term`.
    pub total: f64,
}

/// Singular spectrum summary of an archetype matrix.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumDiagnostics {
    pub sigma_max: f64,
    /// Smallest singular value above `1e-12 * sigma_max`.
    pub sigma_min: f64,
    /// `sigma_max / sigma_min`, always at least 1.
    pub kappa: f64,
}

/// Sum of squared hull distances, with a convergence flag covering every
/// row projection that contributed.
#[derive(Debug, Clone, Copy)]
pub struct HullDistanceSum {
    pub value: f64,
    pub all_converged: bool,
}

/// Full evaluation of the regularized risk with the minimizing weights and
/// projected points kept. Solvers reuse these: the gradient is a cheap
/// byproduct, and the weights warm-start the next evaluation.
#[derive(Debug, Clone)]
pub struct RiskBreakdown {
    pub value: RiskValue,
    /// n×r: row i holds the simplex weights realizing the distance of x_i
    /// to conv(H).
    pub fit_weights: DMatrix<f64>,
    /// n×d: row i is the projection of x_i onto conv(H).
    pub fit_points: DMatrix<f64>,
    /// r×n: row l holds the weights realizing the distance of h_l to conv(X).
    pub reg_weights: DMatrix<f64>,
    /// r×d: row l is the projection of h_l onto conv(X).
    pub reg_points: DMatrix<f64>,
    pub all_converged: bool,
}

fn check_same_cols(a_name: &str, a: usize, b_name: &str, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{a_name} has {a} columns, {b_name} has {b}"
        )));
    }
    Ok(())
}

/// Projects every row of `points` onto `conv(V)`; returns per-row weights,
/// projected points, the summed squared distance, and a convergence flag.
///
/// Rows fan out to worker threads; the sum is accumulated in row order so
/// the result does not depend on the thread schedule.
pub(crate) fn project_rows(
    points: &DMatrix<f64>,
    projector: &HullProjector<'_>,
    tol: f64,
    max_iter: usize,
    warm: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, bool)> {
    let k = points.nrows();
    let results: Vec<crate::geometry::ProjectionResult> = (0..k)
        .into_par_iter()
        .map(|i| {
            let u = points.row(i).transpose();
            let seed = warm.map(|w| SimplexWeights { values: w.row(i).transpose() });
            projector.project(&u, tol, max_iter, seed.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let m = results[0].weights.len();
    let mut weights = DMatrix::zeros(k, m);
    let mut projected = DMatrix::zeros(k, points.ncols());
    let mut total = 0.0;
    let mut all_converged = true;
    for (i, res) in results.iter().enumerate() {
        weights.row_mut(i).copy_from(&res.weights.values.transpose());
        projected.row_mut(i).copy_from(&res.point.transpose());
        total += res.sq_distance;
        all_converged &= res.converged;
    }
    Ok((weights, projected, total, all_converged))
}

/// `dd(U;V)`: sum over rows of `U` of squared distances to `conv(V)`.
pub fn dd_set_set(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<HullDistanceSum> {
    dd_set_set_with(u, v, crate::geometry::DEFAULT_PROJECTION_TOL, crate::geometry::DEFAULT_PROJECTION_MAX_ITER)
}

/// `dd(U;V)` with explicit projection controls.
pub fn dd_set_set_with(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<HullDistanceSum> {
    check_same_cols("first matrix", u.ncols(), "second matrix", v.ncols())?;
    let projector = HullProjector::new(v)?;
    let (_, _, value, all_converged) = project_rows(u, &projector, tol, max_iter, None)?;
    Ok(HullDistanceSum { value, all_converged })
}

/// Evaluates `R_lambda` and keeps the minimizing weights and projections.
pub fn risk_breakdown(
    x: &DataMatrix,
    h: &ArchetypeSet,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RiskBreakdown> {
    check_same_cols("data", x.d(), "archetypes", h.d())?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidInput("lambda must be finite and non-negative".into()));
    }
    let h_hull = HullProjector::new(&h.values)?;
    let (fit_weights, fit_points, fit_term, fit_ok) =
        project_rows(&x.values, &h_hull, tol, max_iter, None)?;
    let x_hull = HullProjector::new(&x.values)?;
    let (reg_weights, reg_points, reg_term, reg_ok) =
        project_rows(&h.values, &x_hull, tol, max_iter, None)?;
    let value = RiskValue { fit_term, reg_term, lambda, total: fit_term + lambda * reg_term };
    Ok(RiskBreakdown {
        value,
        fit_weights,
        fit_points,
        reg_weights,
        reg_points,
        all_converged: fit_ok && reg_ok,
    })
}

/// `R_lambda(H) = dd(X;H) + lambda * dd(H;X)`.
pub fn risk_lagrangian(x: &DataMatrix, h: &ArchetypeSet, lambda: f64) -> Result<RiskValue> {
    risk_lagrangian_with(
        x,
        h,
        lambda,
        crate::geometry::DEFAULT_PROJECTION_TOL,
        crate::geometry::DEFAULT_PROJECTION_MAX_ITER,
    )
}

/// `R_lambda` with explicit projection controls; finite-difference oracles
/// want tighter-than-default inner solves.
pub fn risk_lagrangian_with(
    x: &DataMatrix,
    h: &ArchetypeSet,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RiskValue> {
    Ok(risk_breakdown(x, h, lambda, tol, max_iter)?.value)
}

/// Number of affinely independent rows minus one: the dimension of the
/// affine hull of the rows of `p`.
pub fn affine_dimension(p: &DMatrix<f64>) -> usize {
    let anchor = p.row(0).transpose();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut max_norm = 0.0f64;
    for i in 1..p.nrows() {
        let mut b = p.row(i).transpose() - &anchor;
        max_norm = max_norm.max(b.norm());
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&b);
                b -= q * c;
            }
        }
        let norm = b.norm();
        if norm > 1e-12 * max_norm.max(1e-300) {
            basis.push(b / norm);
        }
    }
    basis.len()
}

/// Gradient of `R_lambda` at `H`.
///
/// Both terms are squared distances to convex sets; by Danskin's theorem the
/// fit part is `2 A^T (A H - X)` with `A` the minimizing weights, and the
/// penalty part is `2 lambda (H - P)` with `P` the row projections of `H`
/// onto `conv(X)`. Valid where the minimizing weights are unique, which the
/// affine-independence precondition guarantees for the fit term.
pub fn risk_gradient(x: &DataMatrix, h: &ArchetypeSet, lambda: f64) -> Result<DMatrix<f64>> {
    check_same_cols("data", x.d(), "archetypes", h.d())?;
    if h.r() > 1 && affine_dimension(&h.values) < h.r() - 1 {
        return Err(Error::Degenerate(
            "archetype rows are affinely dependent; the risk gradient formula needs unique fit weights".into(),
        ));
    }
    let breakdown =
        risk_breakdown(x, h, lambda, GRADIENT_PROJECTION_TOL, GRADIENT_PROJECTION_MAX_ITER)?;
    Ok(gradient_from_breakdown(x, h, lambda, &breakdown))
}

/// Assembles the gradient from an existing risk evaluation.
pub fn gradient_from_breakdown(
    x: &DataMatrix,
    h: &ArchetypeSet,
    lambda: f64,
    breakdown: &RiskBreakdown,
) -> DMatrix<f64> {
    let a = &breakdown.fit_weights;
    let mut grad = (a.transpose() * (a * &h.values - &x.values)) * 2.0;
    if lambda > 0.0 {
        grad += (&h.values - &breakdown.reg_points) * (2.0 * lambda);
    }
    grad
}

/// Archetype-recovery loss: each reference row is charged the squared
/// distance to its nearest estimated row.
///
/// Zero iff every row of `h0` appears among the rows of `hhat`; invariant
/// under row permutations of either argument.
pub fn loss_l(h0: &ArchetypeSet, hhat: &ArchetypeSet) -> Result<f64> {
    check_same_cols("reference archetypes", h0.d(), "estimated archetypes", hhat.d())?;
    let mut total = 0.0;
    for ref_row in h0.values.row_iter() {
        let nearest = hhat
            .values
            .row_iter()
            .map(|est| (est - ref_row).norm_squared())
            .fold(f64::INFINITY, f64::min);
        total += nearest;
    }
    Ok(total)
}

/// Singular spectrum of an archetype matrix.
pub fn spectrum(h: &ArchetypeSet) -> Result<SpectrumDiagnostics> {
    let mut singular: Vec<f64> = h.values.clone().svd(false, false).singular_values.iter().copied().collect();
    singular.sort_unstable_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    let sigma_max = singular[0];
    if sigma_max <= 0.0 {
        return Err(Error::InvalidInput("spectrum of the zero matrix is undefined".into()));
    }
    let sigma_min = singular
        .iter()
        .copied()
        .filter(|&s| s > 1e-12 * sigma_max)
        .last()
        .expect("sigma_max itself passes the threshold");
    Ok(SpectrumDiagnostics { sigma_max, sigma_min, kappa: sigma_max / sigma_min })
}
