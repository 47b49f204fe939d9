//! Euclidean projections onto the probability simplex, convex hulls of point
//! sets, and affine hulls.
//!
//! Points are rows: a matrix `V` with `m` rows spans `conv(V)`, the convex
//! hull of its rows in `R^d`. Hull projection is a simplex-constrained least
//! squares problem solved by accelerated projected gradient descent with
//! adaptive restarts; the simplex projection inside each step is the exact
//! sort-and-threshold method (Duchi et al., 2008). Once the iteration has
//! located a small candidate support, an active-set finishing step solves
//! the face-restricted least squares exactly and accepts the result only
//! under a strict global KKT certificate, so most projections terminate
//! with machine-precision optima instead of grinding out the sublinear
//! first-order tail.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative-objective tolerance for hull projections.
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;
/// Default iteration cap for hull projections.
pub const DEFAULT_PROJECTION_MAX_ITER: usize = 10_000;

/// Iterations between active-set finishing attempts.
const REFINE_PERIOD: usize = 25;
/// Support entries this far below zero force a drop-and-resolve round.
const REFINE_NEG_TOL: f64 = -1e-12;
/// KKT band, relative to the gradient magnitude scale: off-support
/// multipliers may undershoot the support multiplier by at most this.
const REFINE_KKT_REL: f64 = 1e-13;
/// Bound on drop-and-resolve rounds per finishing attempt.
const REFINE_MAX_ROUNDS: usize = 8;

/// A point on the probability simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    pub values: DVector<f64>,
}

impl SimplexWeights {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }
}

/// Result of projecting a point onto the convex hull of a point set.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// Barycentric weights of the projected point over the hull's rows.
    pub weights: SimplexWeights,
    /// The projected point, exactly `V^T * weights`.
    pub point: DVector<f64>,
    /// Squared Euclidean distance between the input and `point`.
    pub sq_distance: f64,
    /// Inner iterations spent.
    pub iterations: usize,
    /// False when the iteration cap was reached before the tolerance.
    pub converged: bool,
}

/// Distance from a point to the affine hull of a point set.
#[derive(Debug, Clone, Copy)]
pub struct AffineDistance {
    pub distance: f64,
    /// True when the defining points were affinely dependent, in which case
    /// the hull of a maximal independent subset was used.
    pub degenerate: bool,
}

fn check_finite_vec(name: &str, v: &DVector<f64>) -> Result<()> {
    if v.len() == 0 {
        return Err(Error::InvalidInput(format!("{name} is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} has a non-finite entry")));
    }
    Ok(())
}

fn check_finite_mat(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{name} is empty")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} has a non-finite entry")));
    }
    Ok(())
}

/// Projects `v` onto the probability simplex of its own dimension.
///
/// Exact in exact arithmetic: sorts, finds the largest support whose
/// water-level threshold keeps all supported entries positive, clips.
pub fn project_simplex(v: &DVector<f64>) -> Result<SimplexWeights> {
    check_finite_vec("point", v)?;
    let m = v.len();
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
        // Once an entry fails the positivity test every later one does too,
        // but scanning all m keeps the branch structure trivial.
    }
    let values = DVector::from_iterator(m, v.iter().map(|&x| (x - threshold).max(0.0)));
    Ok(SimplexWeights { values })
}

/// Exact solve of the face-restricted projection with a global optimality
/// certificate.
///
/// Takes the largest current weights as a candidate support (at most
/// `d + 2` entries by Caratheodory, one spare), solves the
/// equality-constrained least squares on that face, drops negative
/// coordinates and re-solves, then certifies the result: every support
/// multiplier must agree and no off-support generator may undercut them by
/// more than a machine-scale band. Returns `None` when the candidate face
/// is wrong or the certificate fails; the caller just keeps iterating.
fn refine_on_support(
    v: &DMatrix<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    f_current: f64,
    row_scale: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let m = v.nrows();
    let d = v.ncols();
    let cap = (d + 2).min(m);

    let mut order: Vec<usize> = (0..m).filter(|&i| w[i] > 0.0).collect();
    if order.is_empty() {
        return None;
    }
    order.sort_unstable_by(|&a, &b| {
        w[b].partial_cmp(&w[a]).expect("finite weights").then(a.cmp(&b))
    });
    let mut support: Vec<usize> = order.into_iter().take(cap).collect();
    support.sort_unstable();

    for _ in 0..REFINE_MAX_ROUNDS {
        let s = support.len();
        // Stationarity on the face: [2 V_S V_S^T, 1; 1^T, 0] [w; nu] = [2 V_S u; 1].
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for a in 0..s {
            let row_a = v.row(support[a]);
            for b in a..s {
                let g = 2.0 * row_a.dot(&v.row(support[b]));
                kkt[(a, b)] = g;
                kkt[(b, a)] = g;
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = 2.0 * row_a.transpose().dot(u);
        }
        rhs[s] = 1.0;
        let sol = kkt.full_piv_lu().solve(&rhs)?;

        let negatives: Vec<usize> =
            (0..s).filter(|&a| sol[a] < REFINE_NEG_TOL).collect();
        if !negatives.is_empty() {
            if negatives.len() == s {
                return None;
            }
            for &a in negatives.iter().rev() {
                support.remove(a);
            }
            continue;
        }

        // Clamp roundoff dust and renormalize; stay exactly feasible.
        let mut weights = DVector::zeros(m);
        let mut total = 0.0;
        for a in 0..s {
            let wv = sol[a].max(0.0);
            weights[support[a]] = wv;
            total += wv;
        }
        if !(total > 0.5) || !total.is_finite() {
            return None;
        }
        weights /= total;
        let point = v.transpose() * &weights;
        let f = (&point - u).norm_squared();
        if !f.is_finite() || f > f_current * (1.0 + 1e-9) + 1e-300 {
            return None;
        }

        // Global certificate: multipliers g_j = 2 v_j . (p - u).
        let g = v * ((&point - u) * 2.0);
        let mut support_min = f64::INFINITY;
        let mut support_max = f64::NEG_INFINITY;
        let mut in_support = vec![false; m];
        for &i in &support {
            in_support[i] = true;
            support_min = support_min.min(g[i]);
            support_max = support_max.max(g[i]);
        }
        let mut off_min = f64::INFINITY;
        for j in 0..m {
            if !in_support[j] {
                off_min = off_min.min(g[j]);
            }
        }
        let band = REFINE_KKT_REL * (2.0 * row_scale * (point.norm() + u.norm()) + 1.0);
        if support_max - support_min <= band && off_min >= support_min - band {
            return Some((weights, point, f));
        }
        return None;
    }
    None
}

/// Reusable projector onto `conv(V)` for one fixed `V`.
///
/// Caches the gradient Lipschitz bound `2*lambda_max(V V^T)` (power
/// iteration), which dominates setup cost when many points are projected
/// onto the same hull. Supports warm starts for sequences of nearby points.
pub struct HullProjector<'a> {
    v: &'a DMatrix<f64>,
    lipschitz: f64,
    scale: f64,
}

impl<'a> HullProjector<'a> {
    pub fn new(v: &'a DMatrix<f64>) -> Result<Self> {
        check_finite_mat("hull rows", v)?;
        let lambda_max = lambda_max_vvt(v);
        let scale = v
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0f64, f64::max);
        Ok(HullProjector { v, lipschitz: 2.0 * lambda_max * 1.05 + 1e-300, scale })
    }

    pub fn ambient_dim(&self) -> usize {
        self.v.ncols()
    }

    /// Projects `u` onto `conv(V)`.
    ///
    /// `warm` seeds the iteration with barycentric weights from an earlier,
    /// nearby projection. The returned objective value is always attained by
    /// feasible weights, so `sq_distance` upper-bounds the true squared
    /// distance regardless of convergence.
    pub fn project(
        &self,
        u: &DVector<f64>,
        tol: f64,
        max_iter: usize,
        warm: Option<&SimplexWeights>,
    ) -> Result<ProjectionResult> {
        check_finite_vec("point", u)?;
        if u.len() != self.v.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {}, hull rows have dimension {}",
                u.len(),
                self.v.ncols()
            )));
        }
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(Error::InvalidInput("tol must be positive and finite".into()));
        }
        if max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        let m = self.v.nrows();

        // Single generator: the projection is the point itself.
        if m == 1 {
            let point = self.v.row(0).transpose();
            let sq_distance = (&point - u).norm_squared();
            return Ok(ProjectionResult {
                weights: SimplexWeights { values: DVector::from_element(1, 1.0) },
                point,
                sq_distance,
                iterations: 0,
                converged: true,
            });
        }

        let objective = |w: &DVector<f64>| -> f64 {
            let residual = self.v.transpose() * w - u;
            residual.norm_squared()
        };
        let gradient = |w: &DVector<f64>| -> DVector<f64> {
            2.0 * (self.v * (self.v.transpose() * w - u))
        };

        let mut x = match warm {
            Some(w) if w.len() == m => w.values.clone(),
            _ => DVector::from_element(m, 1.0 / m as f64),
        };
        let mut f_x = objective(&x);

        // Absolute floor: once the objective reaches projection-roundoff
        // scale, relative change is meaningless and we are done.
        let scale = self.scale + u.norm();
        let f_floor = (1e-14 * scale) * (1e-14 * scale);

        let mut lipschitz = self.lipschitz;
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut iterations = 0;
        let mut converged = f_x <= f_floor;
        let mut calm_steps = 0;

        // A warm start usually sits on the optimal face already; finishing
        // it exactly skips the whole first-order tail.
        if !converged && warm.is_some() {
            if let Some((wr, _, fr)) = refine_on_support(self.v, u, &x, f_x, self.scale) {
                x = wr;
                f_x = fr;
                converged = true;
            }
        }

        while !converged && iterations < max_iter {
            iterations += 1;
            let mut x_next = project_simplex(&(&y - gradient(&y) / lipschitz))?.values;
            let mut f_next = objective(&x_next);
            if f_next > f_x {
                // Momentum overshoot: restart from the last accepted point.
                x_next = project_simplex(&(&x - gradient(&x) / lipschitz))?.values;
                f_next = objective(&x_next);
                t = 1.0;
                // A plain step that still ascends means the Lipschitz bound
                // is too small; grow it. Guaranteed descent once adequate.
                while f_next > f_x && lipschitz < 1e300 {
                    lipschitz *= 2.0;
                    x_next = project_simplex(&(&x - gradient(&x) / lipschitz))?.values;
                    f_next = objective(&x_next);
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);

            let delta = f_x - f_next;
            if delta.abs() <= tol * f_next.max(f_floor) {
                calm_steps += 1;
            } else {
                calm_steps = 0;
            }
            x = x_next;
            f_x = f_next;
            t = t_next;
            converged = f_x <= f_floor || calm_steps >= 2;

            if !converged && iterations % REFINE_PERIOD == 0 {
                if let Some((wr, _, fr)) = refine_on_support(self.v, u, &x, f_x, self.scale) {
                    x = wr;
                    f_x = fr;
                    converged = true;
                }
            }
        }

        let point = self.v.transpose() * &x;
        let sq_distance = (&point - u).norm_squared();
        Ok(ProjectionResult {
            weights: SimplexWeights { values: x },
            point,
            sq_distance,
            iterations,
            converged,
        })
    }
}

/// Projects `u` onto the convex hull of the rows of `v`.
///
/// One-shot convenience over [`HullProjector`]; prefer the projector when
/// projecting many points onto the same hull.
pub fn project_convex_hull(
    u: &DVector<f64>,
    v: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<ProjectionResult> {
    HullProjector::new(v)?.project(u, tol, max_iter, None)
}

/// Largest eigenvalue of `V V^T` by power iteration.
///
/// Deterministic start vector; the slight index-dependent tilt avoids
/// starting orthogonal to the leading eigenvector on symmetric inputs.
fn lambda_max_vvt(v: &DMatrix<f64>) -> f64 {
    let m = v.nrows();
    let mut x = DVector::from_fn(m, |i, _| 1.0 + (i as f64 + 1.0) * 1e-3 / m as f64);
    x /= x.norm();
    let mut estimate = 0.0f64;
    for _ in 0..100 {
        let y = v * (v.transpose() * &x);
        let norm = y.norm();
        if norm < 1e-300 {
            return 0.0;
        }
        let next = x.dot(&y);
        let settled = (next - estimate).abs() <= 1e-13 * next.max(1.0);
        estimate = next;
        x = y / norm;
        if settled {
            break;
        }
    }
    estimate.max(0.0)
}

/// Distance from `u` to the affine hull of the rows of `p`.
///
/// Affinely dependent rows are handled by dropping dependent difference
/// vectors during orthogonalization; the result is then the distance to the
/// hull of a maximal independent subset and `degenerate` is set.
pub fn distance_to_affine(u: &DVector<f64>, p: &DMatrix<f64>) -> Result<AffineDistance> {
    check_finite_vec("point", u)?;
    check_finite_mat("hull rows", p)?;
    if u.len() != p.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "point has dimension {}, hull rows have dimension {}",
            u.len(),
            p.ncols()
        )));
    }
    let anchor = p.row(0).transpose();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut degenerate = false;
    let mut max_diff_norm = 0.0f64;
    for i in 1..p.nrows() {
        let mut b = p.row(i).transpose() - &anchor;
        max_diff_norm = max_diff_norm.max(b.norm());
        // Modified Gram-Schmidt, two passes for numerical orthogonality.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&b);
                b -= q * c;
            }
        }
        let norm = b.norm();
        if norm > 1e-12 * max_diff_norm.max(1e-300) {
            basis.push(b / norm);
        } else {
            degenerate = true;
        }
    }
    let mut w = u - anchor;
    for _ in 0..2 {
        for q in &basis {
            let c = q.dot(&w);
            w -= q * c;
        }
    }
    Ok(AffineDistance { distance: w.norm(), degenerate })
}
