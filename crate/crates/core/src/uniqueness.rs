//! Identifiability diagnostics: the internal radius of the data hull, a
//! numeric estimate of the uniqueness constant alpha, the uniqueness
//! inequality itself, the recovery-bound constants built from it, and the
//! truncated-triangle hexagon family used to probe non-uniqueness.
//!
//! The internal radius is the Chebyshev radius of `conv(X0)` inside its own
//! affine hull: points are reduced to affine coordinates, hull facets are
//! enumerated exhaustively over affinely independent vertex subsets (the
//! affine dimensions this diagnostic targets are small), and the largest
//! inscribed ball is found by a dense simplex method owned by this module.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::HullProjector;
use crate::risk::{project_rows, ArchetypeSet, DataMatrix};
use crate::rng::CounterRng;

/// Projection accuracy for the distance sums driving the alpha ratio.
const ALPHA_PROJECTION_TOL: f64 = 1e-12;
const ALPHA_PROJECTION_MAX_ITER: usize = 50_000;
/// Relative threshold sorting true singular values from roundoff.
const RANK_TOL: f64 = 1e-12;
/// Leave-one-out distance (relative to scale) above which a point counts
/// as a hull vertex.
const VERTEX_TOL: f64 = 1e-9;
/// One-side slack (relative to scale) in the facet test.
const FACET_SIDE_TOL: f64 = 1e-9;
/// Simplex pivot budget for the Chebyshev program.
const LP_MAX_PIVOTS: usize = 20_000;

/// Largest ball inside `conv(X0)` restricted to its affine hull.
#[derive(Debug, Clone)]
pub struct InternalRadiusResult {
    pub mu: f64,
    /// Ball center in ambient coordinates (the `z0` of the recovery bound).
    pub center: DVector<f64>,
    /// Orthonormal `d x (r-1)` frame spanning ball directions.
    pub basis: DMatrix<f64>,
    /// Set when the affine dimension fell short of `r-1`; `mu` is then 0.
    pub degenerate: bool,
}

/// Search budget and tolerances for `estimate_alpha`.
#[derive(Debug, Clone)]
pub struct AlphaSearchConfig {
    pub restarts: usize,
    /// Pattern-search sweeps per restart.
    pub max_pattern_iters: usize,
    pub seed: u64,
    /// Containment slack, scaled by `1 + max row norm` of the data.
    pub containment_tol: f64,
    /// Candidates whose ratio denominator falls below this are excluded;
    /// they are reorderings of the reference archetypes.
    pub min_denominator: f64,
    /// Cap on ratio evaluations, split evenly across restarts.
    pub max_evals: Option<usize>,
}

impl Default for AlphaSearchConfig {
    fn default() -> Self {
        AlphaSearchConfig {
            restarts: 200,
            max_pattern_iters: 40,
            seed: 0,
            containment_tol: 1e-8,
            min_denominator: 1e-9,
            max_evals: None,
        }
    }
}

/// Upper estimate of the uniqueness constant.
#[derive(Debug, Clone)]
pub struct AlphaEstimate {
    /// Smallest ratio found, clamped to `[0, 1]`.
    pub alpha_hat: f64,
    /// Candidate attaining it.
    pub witness_h: ArchetypeSet,
    /// Ratio evaluations spent over all restarts.
    pub search_evals: usize,
    /// True when the evaluation cap cut at least one restart short.
    pub budget_exhausted: bool,
}

/// Outcome of one uniqueness-inequality evaluation.
#[derive(Debug, Clone, Copy)]
pub struct UniquenessCheck {
    pub holds: bool,
    /// `dd(H,X0)^{1/2} - dd(H0,X0)^{1/2} - alpha*(dd(H,H0)^{1/2} + dd(H0,H)^{1/2})`.
    pub slack: f64,
}

/// Recovery-bound constants and right-hand sides for a noise level delta.
#[derive(Debug, Clone, Copy)]
pub struct RobustnessBound {
    pub c_star: f64,
    pub c_star_star: f64,
    /// `delta <= alpha*mu / (30 r^{3/2})`.
    pub noise_condition_primary: bool,
    /// `delta <= alpha*mu / (330 kappa r^{5/2})`.
    pub noise_condition_secondary: bool,
    /// Both noise conditions at once.
    pub noise_condition_ok: bool,
    pub bound_primary: f64,
    pub bound_secondary: f64,
}

/// One member of the corner-truncation family: a hexagon obtained by
/// cutting each corner of the unit-side equilateral triangle at fraction
/// `L` along both incident edges, plus the minimal enclosing triangle.
#[derive(Debug, Clone)]
pub struct HexagonInstance {
    pub data: DataMatrix,
    pub archetypes: ArchetypeSet,
    /// Set exactly at `L = 1/3`, where the hexagon is regular and two
    /// distinct enclosing triangles exist.
    pub non_unique: bool,
}

// ---------------------------------------------------------------------------
// Internal radius
// ---------------------------------------------------------------------------

/// Mean and orthonormal affine frame of a point set, with the points
/// expressed in affine coordinates.
fn affine_coordinates(points: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = points.nrows();
    let d = points.ncols();
    let mean = points.row_mean().transpose();
    let mut centered = points.clone();
    for i in 0..n {
        for j in 0..d {
            centered[(i, j)] -= mean[j];
        }
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
            .then(a.cmp(&b))
    });
    let sigma_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let m = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > RANK_TOL * sigma_max && sigma_max > 0.0)
        .count();
    let mut basis = DMatrix::zeros(d, m);
    for (col, &i) in order.iter().take(m).enumerate() {
        basis.column_mut(col).copy_from(&v_t.row(i).transpose());
    }
    let coords = if m == 0 { DMatrix::zeros(n, 0) } else { centered * &basis };
    (mean, basis, coords)
}

/// Extends an orthonormal `d x m` frame to `d x k` columns with
/// coordinate directions.
fn pad_orthonormal(basis: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = basis.nrows();
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    for j in 0..d {
        if cols.len() >= k {
            break;
        }
        let mut v = DVector::zeros(d);
        v[j] = 1.0;
        for c in &cols {
            let dot = c.dot(&v);
            v -= c * dot;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(d, k);
    for (j, c) in cols.iter().take(k).enumerate() {
        out.column_mut(j).copy_from(c);
    }
    out
}

fn dedupe_rows(points: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..points.nrows() {
        let duplicate = keep
            .iter()
            .any(|&j| (points.row(i) - points.row(j)).norm() <= tol);
        if !duplicate {
            keep.push(i);
        }
    }
    keep
}

/// Indices of hull vertices by the leave-one-out projection test.
fn hull_vertices(coords: &DMatrix<f64>, scale: f64) -> Result<Vec<usize>> {
    let unique = dedupe_rows(coords, 1e-12 * scale.max(1.0));
    if unique.len() <= 1 {
        return Ok(unique);
    }
    let flags: Vec<bool> = unique
        .par_iter()
        .map(|&i| -> Result<bool> {
            let others: Vec<usize> = unique.iter().copied().filter(|&j| j != i).collect();
            let mut rest = DMatrix::zeros(others.len(), coords.ncols());
            for (pos, &j) in others.iter().enumerate() {
                rest.row_mut(pos).copy_from(&coords.row(j));
            }
            let hull = HullProjector::new(&rest)?;
            let p = hull.project(
                &coords.row(i).transpose(),
                ALPHA_PROJECTION_TOL,
                ALPHA_PROJECTION_MAX_ITER,
                None,
            )?;
            Ok(p.sq_distance.sqrt() > VERTEX_TOL * scale.max(1.0))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(unique
        .into_iter()
        .zip(flags)
        .filter_map(|(i, is_vertex)| is_vertex.then_some(i))
        .collect())
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Advance the rightmost index that still has room.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < n - k + pos {
                idx[pos] += 1;
                for later in pos + 1..k {
                    idx[later] = idx[later - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return;
            }
        }
    }
}

/// Unit normal of the hyperplane through `m` points of R^m, or `None`
/// when the points are affinely dependent.
fn hyperplane_normal(points: &[DVector<f64>]) -> Option<DVector<f64>> {
    let m = points[0].len();
    let mut diffs = DMatrix::zeros(m, m);
    for j in 1..m {
        diffs
            .row_mut(j - 1)
            .copy_from(&(&points[j] - &points[0]).transpose());
    }
    let svd = diffs.svd(false, true);
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
            .then(a.cmp(&b))
    });
    let sigma_max = svd.singular_values[order[0]];
    if sigma_max <= 0.0 {
        return None;
    }
    // The difference matrix is padded with one zero row, so exactly one
    // vanishing singular value means the points were affinely independent.
    let near_zero = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= 1e-10 * sigma_max)
        .count();
    if near_zero != 1 {
        return None;
    }
    let normal = v_t.row(order[m - 1]).transpose();
    Some(normal)
}

/// Facet caps: the exhaustive subset enumeration stays tractable only for
/// modest vertex counts, tightening as the affine dimension grows.
fn vertex_cap(m: usize) -> usize {
    match m {
        0 | 1 => usize::MAX,
        2 => 160,
        3 => 120,
        4 => 48,
        5 => 28,
        _ => 20,
    }
}

/// Outward-oriented facet description `a^T x <= b` (unit normals) of the
/// convex hull of full-dimensional affine coordinates, given its vertex
/// indices.
fn polytope_facets(
    coords: &DMatrix<f64>,
    vertices: &[usize],
    scale: f64,
) -> Result<Vec<(DVector<f64>, f64)>> {
    let m = coords.ncols();
    if m == 1 {
        let lo = vertices
            .iter()
            .map(|&i| coords[(i, 0)])
            .fold(f64::INFINITY, f64::min);
        let hi = vertices
            .iter()
            .map(|&i| coords[(i, 0)])
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(vec![
            (DVector::from_element(1, 1.0), hi),
            (DVector::from_element(1, -1.0), -lo),
        ]);
    }
    if vertices.len() < m + 1 {
        return Err(Error::Degenerate(format!(
            "hull has only {} vertices in affine dimension {m}",
            vertices.len()
        )));
    }
    if vertices.len() > vertex_cap(m) {
        return Err(Error::InvalidInput(format!(
            "facet enumeration supports at most {} hull vertices in dimension {m}, found {}",
            vertex_cap(m),
            vertices.len()
        )));
    }
    let pts: Vec<DVector<f64>> = vertices.iter().map(|&i| coords.row(i).transpose()).collect();
    let mut interior = DVector::zeros(m);
    for p in &pts {
        interior += p;
    }
    interior /= pts.len() as f64;

    let side_tol = FACET_SIDE_TOL * scale.max(1.0);
    let mut facets: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut seen: HashMap<Vec<i64>, ()> = HashMap::new();
    for_each_combination(pts.len(), m, |subset| {
        let chosen: Vec<DVector<f64>> = subset.iter().map(|&i| pts[i].clone()).collect();
        let Some(mut normal) = hyperplane_normal(&chosen) else {
            return;
        };
        let mut offset = normal.dot(&chosen[0]);
        if normal.dot(&interior) > offset {
            normal = -normal;
            offset = -offset;
        }
        if pts.iter().any(|p| normal.dot(p) > offset + side_tol) {
            return;
        }
        let mut key: Vec<i64> = normal.iter().map(|&v| (v * 1e9).round() as i64).collect();
        key.push((offset / scale.max(1.0) * 1e9).round() as i64);
        if seen.insert(key, ()).is_none() {
            facets.push((normal, offset));
        }
    });
    if facets.len() < m + 1 {
        return Err(Error::Degenerate(format!(
            "facet enumeration found only {} facets in dimension {m}",
            facets.len()
        )));
    }
    Ok(facets)
}

/// Maximizes `rho` subject to `a_f^T c + rho <= b_f` with all `b_f > 0`
/// (the origin strictly interior), by a dense primal simplex on the
/// standard form with `c` split into positive parts. Returns `(c, rho)`.
fn chebyshev_lp(facets: &[(DVector<f64>, f64)], m: usize) -> Result<(DVector<f64>, f64)> {
    let f = facets.len();
    let cols = 2 * m + 1 + f;
    let mut tab = DMatrix::zeros(f, cols + 1);
    for (row, (a, b)) in facets.iter().enumerate() {
        for j in 0..m {
            tab[(row, j)] = a[j];
            tab[(row, m + j)] = -a[j];
        }
        tab[(row, 2 * m)] = 1.0;
        tab[(row, 2 * m + 1 + row)] = 1.0;
        tab[(row, cols)] = *b;
    }
    // Minimize -rho.
    let mut cost = DVector::zeros(cols);
    cost[2 * m] = -1.0;
    let mut basis: Vec<usize> = (0..f).map(|i| 2 * m + 1 + i).collect();
    let mut reduced = cost.clone();

    for pivot_count in 0..LP_MAX_PIVOTS {
        let bland = pivot_count >= 2_000;
        let mut entering = None;
        let mut best = -1e-12;
        for j in 0..cols {
            if reduced[j] < best {
                entering = Some(j);
                if bland {
                    break;
                }
                best = reduced[j];
            }
        }
        let Some(enter) = entering else {
            let mut c = DVector::zeros(m);
            let mut rho = 0.0;
            for (row, &b) in basis.iter().enumerate() {
                let value = tab[(row, cols)];
                if b < m {
                    c[b] += value;
                } else if b < 2 * m {
                    c[b - m] -= value;
                } else if b == 2 * m {
                    rho = value;
                }
            }
            return Ok((c, rho));
        };
        let mut leave = None;
        let mut best_ratio = f64::INFINITY;
        for row in 0..f {
            let coeff = tab[(row, enter)];
            if coeff > 1e-12 {
                let ratio = tab[(row, cols)] / coeff;
                if ratio < best_ratio - 1e-15
                    || (ratio < best_ratio + 1e-15
                        && leave.is_some_and(|l: usize| basis[row] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(row);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Numerical(
                "Chebyshev program unbounded; the facet description is inconsistent".into(),
            ));
        };
        // Pivot.
        let pivot = tab[(leave, enter)];
        for j in 0..=cols {
            tab[(leave, j)] /= pivot;
        }
        for row in 0..f {
            if row != leave {
                let factor = tab[(row, enter)];
                if factor != 0.0 {
                    for j in 0..=cols {
                        tab[(row, j)] -= factor * tab[(leave, j)];
                    }
                }
            }
        }
        let factor = reduced[enter];
        for j in 0..cols {
            reduced[j] -= factor * tab[(leave, j)];
        }
        basis[leave] = enter;
    }
    Err(Error::Numerical("Chebyshev program exceeded its pivot budget".into()))
}

/// Largest inscribed `(r-1)`-ball of `conv(X0)` inside its affine hull.
///
/// When the affine dimension exceeds `r-1` the Chebyshev ball of the full
/// hull is used and the frame keeps its leading `r-1` directions; when it
/// falls short the result is degenerate with `mu = 0`.
pub fn internal_radius(x0: &DataMatrix, r: usize) -> Result<InternalRadiusResult> {
    if r < 2 {
        return Err(Error::InvalidInput("internal radius needs r >= 2".into()));
    }
    if r - 1 > x0.d() {
        return Err(Error::InvalidInput(format!(
            "a {}-dimensional ball does not fit in ambient dimension {}",
            r - 1,
            x0.d()
        )));
    }
    let (mean, basis, coords) = affine_coordinates(&x0.values);
    let m = basis.ncols();
    if m < r - 1 {
        return Ok(InternalRadiusResult {
            mu: 0.0,
            center: mean,
            basis: pad_orthonormal(&basis, r - 1),
            degenerate: true,
        });
    }
    if m > 6 {
        return Err(Error::InvalidInput(format!(
            "affine dimension {m} exceeds the supported facet-enumeration range"
        )));
    }
    let scale = coords.row_iter().map(|p| p.norm()).fold(0.0f64, f64::max);
    let vertices = hull_vertices(&coords, scale)?;
    let facets = polytope_facets(&coords, &vertices, scale)?;

    // Shift so the vertex centroid (strictly interior) is the origin,
    // making all offsets positive for the simplex start.
    let mut shift = DVector::zeros(m);
    for &i in &vertices {
        shift += coords.row(i).transpose();
    }
    shift /= vertices.len() as f64;
    let shifted: Vec<(DVector<f64>, f64)> = facets
        .iter()
        .map(|(a, b)| (a.clone(), b - a.dot(&shift)))
        .collect();
    if shifted.iter().any(|&(_, b)| b <= 0.0) {
        return Err(Error::Numerical(
            "vertex centroid not strictly interior; facet description inconsistent".into(),
        ));
    }
    let (c_shifted, mu) = chebyshev_lp(&shifted, m)?;
    let c_aff = c_shifted + shift;
    let center = &mean + &basis * &c_aff;
    let keep = basis.columns(0, r - 1).into_owned();
    Ok(InternalRadiusResult { mu, center, basis: keep, degenerate: false })
}

// ---------------------------------------------------------------------------
// Alpha search
// ---------------------------------------------------------------------------

struct SearchContext<'a> {
    x0: &'a DMatrix<f64>,
    h0: &'a DMatrix<f64>,
    x0_hull: HullProjector<'a>,
    h0_hull: HullProjector<'a>,
    centroid: DVector<f64>,
    sqrt_dd_h0_x0: f64,
    scale: f64,
    diam: f64,
    containment_tol: f64,
    min_denominator: f64,
}

fn row_sum_of_sq_distances(rows: &DMatrix<f64>, hull: &HullProjector<'_>) -> Result<f64> {
    let (_, _, total, _) = project_rows(rows, hull, ALPHA_PROJECTION_TOL, ALPHA_PROJECTION_MAX_ITER, None)?;
    Ok(total)
}

impl SearchContext<'_> {
    /// Max distance from the data rows to `conv(H)`; containment holds when
    /// it stays within the scaled tolerance.
    fn containment_gap(&self, hull: &HullProjector<'_>) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..self.x0.nrows() {
            let p = hull.project(
                &self.x0.row(i).transpose(),
                ALPHA_PROJECTION_TOL,
                ALPHA_PROJECTION_MAX_ITER,
                None,
            )?;
            worst = worst.max(p.sq_distance.sqrt());
            if worst > self.containment_tol * self.scale * 1e3 {
                break;
            }
        }
        Ok(worst)
    }

    fn is_feasible(&self, h: &DMatrix<f64>) -> Result<bool> {
        let hull = HullProjector::new(h)?;
        Ok(self.containment_gap(&hull)? <= self.containment_tol * self.scale)
    }

    fn expand(&self, h: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let mut out = h.clone();
        for mut row in out.row_iter_mut() {
            let moved = &self.centroid + (row.transpose() - &self.centroid) * t;
            row.copy_from(&moved.transpose());
        }
        out
    }

    /// Makes a candidate feasible: translate its hull over the data
    /// centroid if needed, then radially expand about the centroid with a
    /// doubling search plus bisection back toward the smallest feasible
    /// expansion. `None` when no bounded expansion achieves containment.
    fn repair(&self, h: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
        let mut cand = h.clone();
        let hull = HullProjector::new(&cand)?;
        let at_centroid = hull.project(
            &self.centroid,
            ALPHA_PROJECTION_TOL,
            ALPHA_PROJECTION_MAX_ITER,
            None,
        )?;
        if at_centroid.sq_distance.sqrt() > 1e-12 * self.scale {
            let offset = &self.centroid - &at_centroid.point;
            for mut row in cand.row_iter_mut() {
                let moved = row.transpose() + &offset;
                row.copy_from(&moved.transpose());
            }
        }
        if self.is_feasible(&cand)? {
            return Ok(Some(cand));
        }
        let mut t_lo = 1.0f64;
        let mut t_hi = 2.0f64;
        let mut found = false;
        for _ in 0..50 {
            if self.is_feasible(&self.expand(&cand, t_hi))? {
                found = true;
                break;
            }
            t_lo = t_hi;
            t_hi *= 2.0;
        }
        if !found {
            return Ok(None);
        }
        for _ in 0..30 {
            if (t_hi - t_lo) <= 1e-4 * t_hi {
                break;
            }
            let mid = 0.5 * (t_lo + t_hi);
            if self.is_feasible(&self.expand(&cand, mid))? {
                t_hi = mid;
            } else {
                t_lo = mid;
            }
        }
        Ok(Some(self.expand(&cand, t_hi)))
    }

    /// Ratio `(dd(H,X0)^{1/2} - dd(H0,X0)^{1/2}) / (dd(H,H0)^{1/2} + dd(H0,H)^{1/2})`,
    /// `None` when the denominator identifies `H` with the reference set.
    fn ratio(&self, h: &DMatrix<f64>) -> Result<Option<f64>> {
        let dd_h_x0 = row_sum_of_sq_distances(h, &self.x0_hull)?;
        let dd_h_h0 = row_sum_of_sq_distances(h, &self.h0_hull)?;
        let cand_hull = HullProjector::new(h)?;
        let dd_h0_h = row_sum_of_sq_distances(self.h0, &cand_hull)?;
        let denominator = dd_h_h0.sqrt() + dd_h0_h.sqrt();
        if denominator <= self.min_denominator {
            return Ok(None);
        }
        Ok(Some((dd_h_x0.sqrt() - self.sqrt_dd_h0_x0) / denominator))
    }
}

fn rotate_about(h: &DMatrix<f64>, center: &DVector<f64>, theta: f64) -> DMatrix<f64> {
    debug_assert_eq!(h.ncols(), 2);
    let (sin, cos) = theta.sin_cos();
    let mut out = h.clone();
    for mut row in out.row_iter_mut() {
        let x = row[0] - center[0];
        let y = row[1] - center[1];
        row[0] = center[0] + cos * x - sin * y;
        row[1] = center[1] + sin * x + cos * y;
    }
    out
}

struct RestartOutcome {
    best: Option<(f64, DMatrix<f64>)>,
    evals: usize,
    exhausted: bool,
    trace: Vec<(DMatrix<f64>, f64)>,
}

fn run_restart(
    ctx: &SearchContext<'_>,
    cfg: &AlphaSearchConfig,
    restart: usize,
    eval_cap: Option<usize>,
    collect_trace: bool,
) -> Result<RestartOutcome> {
    let r = ctx.h0.nrows();
    let d = ctx.h0.ncols();
    let mut rng = CounterRng::new(cfg.seed).split(0x414C_5048).split(restart as u64);

    let start = match restart {
        0 if d == 2 => rotate_about(ctx.h0, &ctx.centroid, std::f64::consts::FRAC_PI_3),
        1 if d == 2 => rotate_about(ctx.h0, &ctx.centroid, -std::f64::consts::FRAC_PI_3),
        2 => ctx.expand(ctx.h0, 1.5),
        _ => match restart % 3 {
            0 => {
                let scale = ctx.diam * 10f64.powf(rng.uniform() * 3.0 - 3.0);
                DMatrix::from_fn(r, d, |i, j| ctx.h0[(i, j)] + rng.normal() * scale)
            }
            1 if d == 2 => {
                let theta = rng.uniform() * 2.0 * std::f64::consts::PI;
                rotate_about(ctx.h0, &ctx.centroid, theta)
            }
            _ => {
                let grown = ctx.expand(ctx.h0, 1.0 + rng.uniform());
                DMatrix::from_fn(r, d, |i, j| grown[(i, j)] + rng.normal() * 1e-2 * ctx.diam)
            }
        },
    };

    let mut outcome = RestartOutcome { best: None, evals: 0, exhausted: false, trace: Vec::new() };
    let mut budget = eval_cap;

    let spend =
        |outcome: &mut RestartOutcome, budget: &mut Option<usize>| -> bool {
            if let Some(b) = budget {
                if *b == 0 {
                    outcome.exhausted = true;
                    return false;
                }
                *b -= 1;
            }
            outcome.evals += 1;
            true
        };

    let Some(mut base) = ctx.repair(&start)? else {
        return Ok(outcome);
    };
    if !spend(&mut outcome, &mut budget) {
        return Ok(outcome);
    }
    let Some(mut best_value) = ctx.ratio(&base)? else {
        return Ok(outcome);
    };
    if collect_trace {
        outcome.trace.push((base.clone(), best_value));
    }

    let mut step = 0.25 * ctx.diam;
    'sweeps: for _ in 0..cfg.max_pattern_iters {
        let mut improved = false;
        'coords: for flat in 0..r * d {
            for sign in [1.0f64, -1.0] {
                if !spend(&mut outcome, &mut budget) {
                    break 'sweeps;
                }
                let mut cand = base.clone();
                cand[(flat / d, flat % d)] += sign * step;
                let Some(repaired) = ctx.repair(&cand)? else {
                    continue;
                };
                let Some(value) = ctx.ratio(&repaired)? else {
                    continue;
                };
                if collect_trace {
                    outcome.trace.push((repaired.clone(), value));
                }
                if value < best_value {
                    best_value = value;
                    base = repaired;
                    improved = true;
                    break 'coords;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-6 * ctx.diam {
                break;
            }
        }
    }
    outcome.best = Some((best_value, base));
    Ok(outcome)
}

fn estimate_alpha_impl(
    x0: &DataMatrix,
    h0: &ArchetypeSet,
    cfg: &AlphaSearchConfig,
    collect_trace: bool,
) -> Result<(AlphaEstimate, Vec<(DMatrix<f64>, f64)>)> {
    if x0.d() != h0.d() {
        return Err(Error::DimensionMismatch(format!(
            "data dimension {} vs archetype dimension {}",
            x0.d(),
            h0.d()
        )));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("search needs at least one restart".into()));
    }
    let scale = 1.0 + x0.values.row_iter().map(|r| r.norm()).fold(0.0f64, f64::max);
    let x0_hull = HullProjector::new(&x0.values)?;
    let h0_hull = HullProjector::new(&h0.values)?;
    let centroid = x0.values.row_mean().transpose();
    let mut diam = 0.0f64;
    for i in 0..x0.n() {
        for j in i + 1..x0.n() {
            diam = diam.max((x0.values.row(i) - x0.values.row(j)).norm());
        }
    }
    if diam <= 0.0 {
        return Err(Error::InvalidInput("data rows are all identical".into()));
    }
    let ctx = SearchContext {
        x0: &x0.values,
        h0: &h0.values,
        x0_hull,
        h0_hull,
        centroid,
        sqrt_dd_h0_x0: 0.0,
        scale,
        diam,
        containment_tol: cfg.containment_tol,
        min_denominator: cfg.min_denominator,
    };
    // Precondition: the reference archetypes already contain the data.
    if ctx.containment_gap(&ctx.h0_hull)? > cfg.containment_tol * scale {
        return Err(Error::InvalidInput(
            "conv(X0) is not contained in conv(H0); the instance is not a valid factorization".into(),
        ));
    }
    let sqrt_dd_h0_x0 = row_sum_of_sq_distances(&h0.values, &ctx.x0_hull)?.sqrt();
    let ctx = SearchContext { sqrt_dd_h0_x0, ..ctx };

    let per_restart_cap = cfg.max_evals.map(|total| (total / cfg.restarts).max(1));
    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| run_restart(&ctx, cfg, restart, per_restart_cap, collect_trace))
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(f64, &DMatrix<f64>)> = None;
    let mut evals = 0;
    let mut exhausted = false;
    let mut trace = Vec::new();
    for outcome in &outcomes {
        evals += outcome.evals;
        exhausted |= outcome.exhausted;
        if let Some((value, h)) = &outcome.best {
            // Strict comparison keeps the earliest restart on ties.
            if best.as_ref().map_or(true, |(b, _)| value < b) {
                best = Some((*value, h));
            }
        }
        if collect_trace {
            trace.extend(outcome.trace.iter().cloned());
        }
    }
    let Some((value, witness)) = best else {
        return Err(Error::Numerical(
            "alpha search found no valid candidate; every restart was infeasible or denominator-excluded".into(),
        ));
    };
    let estimate = AlphaEstimate {
        alpha_hat: value.clamp(0.0, 1.0),
        witness_h: ArchetypeSet::new(witness.clone())?,
        search_evals: evals,
        budget_exhausted: exhausted,
    };
    Ok((estimate, trace))
}

/// Numeric upper estimate of the uniqueness constant: the smallest
/// containment-feasible ratio found by multi-start pattern search, clamped
/// to `[0, 1]`.
///
/// Deterministic seeds (rotations by pi/3 about the data centroid in the
/// plane, a radial enlargement) run first, then seeded random restarts;
/// restarts run in parallel and ties resolve to the earliest restart.
pub fn estimate_alpha(
    x0: &DataMatrix,
    h0: &ArchetypeSet,
    search: &AlphaSearchConfig,
) -> Result<AlphaEstimate> {
    estimate_alpha_impl(x0, h0, search, false).map(|(e, _)| e)
}

/// `estimate_alpha` variant that also returns every evaluated feasible
/// candidate with its ratio, in restart order. Intended for diagnostics
/// and tests; traces grow with the full evaluation count.
pub fn estimate_alpha_traced(
    x0: &DataMatrix,
    h0: &ArchetypeSet,
    search: &AlphaSearchConfig,
) -> Result<(AlphaEstimate, Vec<(DMatrix<f64>, f64)>)> {
    estimate_alpha_impl(x0, h0, search, true)
}

/// Evaluates the uniqueness inequality at one candidate: slack
/// `dd(H,X0)^{1/2} - dd(H0,X0)^{1/2} - alpha*(dd(H,H0)^{1/2} + dd(H0,H)^{1/2})`,
/// holding when it is no more negative than 1e-9.
pub fn check_uniqueness_inequality(
    h: &ArchetypeSet,
    h0: &ArchetypeSet,
    x0: &DataMatrix,
    alpha: f64,
) -> Result<UniquenessCheck> {
    if x0.d() != h.d() || x0.d() != h0.d() {
        return Err(Error::DimensionMismatch("data and archetype dimensions differ".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidInput("alpha must be finite".into()));
    }
    let scale = 1.0 + x0.values.row_iter().map(|r| r.norm()).fold(0.0f64, f64::max);
    let cand_hull = HullProjector::new(&h.values)?;
    let mut worst = 0.0f64;
    for i in 0..x0.n() {
        let p = cand_hull.project(
            &x0.values.row(i).transpose(),
            ALPHA_PROJECTION_TOL,
            ALPHA_PROJECTION_MAX_ITER,
            None,
        )?;
        worst = worst.max(p.sq_distance.sqrt());
    }
    if worst > 1e-8 * scale {
        return Err(Error::InvalidInput(format!(
            "conv(X0) is not contained in conv(H): containment gap {worst:.3e}"
        )));
    }
    let x0_hull = HullProjector::new(&x0.values)?;
    let h0_hull = HullProjector::new(&h0.values)?;
    let dd_h_x0 = row_sum_of_sq_distances(&h.values, &x0_hull)?;
    let dd_h0_x0 = row_sum_of_sq_distances(&h0.values, &x0_hull)?;
    let dd_h_h0 = row_sum_of_sq_distances(&h.values, &h0_hull)?;
    let dd_h0_h = row_sum_of_sq_distances(&h0.values, &cand_hull)?;
    let slack = dd_h_x0.sqrt() - dd_h0_x0.sqrt() - alpha * (dd_h_h0.sqrt() + dd_h0_h.sqrt());
    Ok(UniquenessCheck { holds: slack >= -1e-9, slack })
}

/// Evaluates the recovery-bound constants and right-hand sides at a noise
/// level `delta`:
///
/// `C*   = 120 (sigma_max/mu) max(1, kappa/sqrt(r))`, bound `C*^2 r^5 delta^2 / alpha^2`
/// under `delta <= alpha*mu/(30 r^{3/2})`;
/// `C**  = 120 max(kappa, (sigma_max/r + |z0|)/(mu sqrt(r))) max(1, kappa/sqrt(r))`,
/// bound `C**^2 r^4 delta^2 / alpha^2` under `delta <= alpha*mu/(330 kappa r^{5/2})`.
pub fn robustness_bound(
    h0: &ArchetypeSet,
    x0: &DataMatrix,
    delta: f64,
    alpha: f64,
) -> Result<RobustnessBound> {
    if x0.d() != h0.d() {
        return Err(Error::DimensionMismatch("data and archetype dimensions differ".into()));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput("delta must be non-negative and finite".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput("alpha must be positive and finite".into()));
    }
    let r = h0.r();
    let radius = internal_radius(x0, r)?;
    if radius.degenerate || !(radius.mu > 0.0) {
        return Err(Error::InvalidInput(
            "internal radius is zero; the bound hypotheses fail".into(),
        ));
    }
    let spec = crate::risk::spectrum(h0)?;
    let rf = r as f64;
    let shape = (spec.kappa / rf.sqrt()).max(1.0);
    let c_star = 120.0 * (spec.sigma_max / radius.mu) * shape;
    let c_star_star = 120.0
        * spec
            .kappa
            .max((spec.sigma_max / rf + radius.center.norm()) / (radius.mu * rf.sqrt()))
        * shape;
    let threshold_primary = alpha * radius.mu / (30.0 * rf.powf(1.5));
    let threshold_secondary = alpha * radius.mu / (330.0 * spec.kappa * rf.powf(2.5));
    let noise_condition_primary = delta <= threshold_primary;
    let noise_condition_secondary = delta <= threshold_secondary;
    Ok(RobustnessBound {
        c_star,
        c_star_star,
        noise_condition_primary,
        noise_condition_secondary,
        noise_condition_ok: noise_condition_primary && noise_condition_secondary,
        bound_primary: c_star * c_star * rf.powi(5) * delta * delta / (alpha * alpha),
        bound_secondary: c_star_star * c_star_star * rf.powi(4) * delta * delta / (alpha * alpha),
    })
}

/// Corner-truncation hexagon family over the unit-side equilateral
/// triangle. `L` in `(0, 1/2]` is the cut fraction along both edges at
/// each corner. Below `L = 1/3` the uncut triangle is the minimal
/// enclosing archetype set; above it the pi/3-rotated triangle takes over;
/// at exactly `L = 1/3` the hexagon is regular, both triangles work, and
/// the instance is flagged non-unique (the base triangle is returned).
pub fn hexagon_family(l: f64) -> Result<HexagonInstance> {
    if !l.is_finite() || !(l > 0.0 && l <= 0.5) {
        return Err(Error::InvalidInput(format!("L must lie in (0, 1/2], got {l}")));
    }
    let s = 3f64.sqrt() / 2.0;
    let data = DMatrix::from_row_slice(
        6,
        2,
        &[
            l,
            0.0,
            1.0 - l,
            0.0,
            1.0 - l / 2.0,
            l * s,
            (1.0 + l) / 2.0,
            (1.0 - l) * s,
            (1.0 - l) / 2.0,
            (1.0 - l) * s,
            l / 2.0,
            l * s,
        ],
    );
    let non_unique = (l - 1.0 / 3.0).abs() <= 1e-12;
    let archetypes = if l < 1.0 / 3.0 || non_unique {
        DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.5, s])
    } else {
        DMatrix::from_row_slice(
            3,
            2,
            &[
                0.5,
                (2.0 * l - 1.0) * s,
                3.0 * (1.0 - l) / 2.0,
                (1.0 - l) * s,
                1.0 - 3.0 * (1.0 - l) / 2.0,
                (1.0 - l) * s,
            ],
        )
    };
    Ok(HexagonInstance {
        data: DataMatrix::new(data)?,
        archetypes: ArchetypeSet::new(archetypes)?,
        non_unique,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn points(rows: &[[f64; 2]]) -> DataMatrix {
        DataMatrix::new(DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])).unwrap()
    }

    fn regular_polygon(k: usize, radius: f64) -> DataMatrix {
        DataMatrix::new(DMatrix::from_fn(k, 2, |i, j| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            radius * if j == 0 { theta.cos() } else { theta.sin() }
        }))
        .unwrap()
    }

    // -- hexagon family --------------------------------------------------

    #[test]
    fn hexagon_regular_at_one_third() {
        let hex = hexagon_family(1.0 / 3.0).unwrap();
        assert!(hex.non_unique);
        let d = &hex.data.values;
        for i in 0..6 {
            let a = d.row(i);
            let b = d.row((i + 1) % 6);
            assert_abs_diff_eq!((a - b).norm(), 1.0 / 3.0, epsilon = 1e-12);
        }
        // Base triangle comes back at the tie.
        assert_abs_diff_eq!(hex.archetypes.values[(2, 1)], 3f64.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn hexagon_approaches_triangle_corners() {
        let hex = hexagon_family(1e-9).unwrap();
        assert!(!hex.non_unique);
        let tri = &hex.archetypes.values;
        let d = &hex.data.values;
        // Corner order: rows (0,5) pinch to vertex 0, (1,2) to vertex 1,
        // (3,4) to vertex 2.
        for (row, vertex) in [(0, 0), (5, 0), (1, 1), (2, 1), (3, 2), (4, 2)] {
            assert!((d.row(row) - tri.row(vertex)).norm() < 1e-8);
        }
    }

    #[test]
    fn hexagon_degenerates_to_midpoint_triangle_at_half() {
        let hex = hexagon_family(0.5).unwrap();
        let d = &hex.data.values;
        for (a, b) in [(0, 1), (2, 3), (4, 5)] {
            assert!((d.row(a) - d.row(b)).norm() < 1e-15, "rows {a},{b} should coincide");
        }
        let mid = &hex.archetypes.values;
        assert_abs_diff_eq!(mid[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mid[(1, 0)], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(mid[(2, 1)], 3f64.sqrt() / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn hexagon_rejects_out_of_range() {
        assert!(hexagon_family(0.0).is_err());
        assert!(hexagon_family(0.51).is_err());
        assert!(hexagon_family(f64::NAN).is_err());
    }

    #[test]
    fn hexagon_data_inside_archetype_hull_throughout() {
        for l in [0.02, 0.1, 0.2, 0.3, 1.0 / 3.0, 0.34, 0.4, 0.45, 0.5] {
            let hex = hexagon_family(l).unwrap();
            let d = crate::risk::dd_set_set(&hex.data.values, &hex.archetypes.values).unwrap();
            assert!(d.value <= 1e-10, "L={l}: hexagon escapes its archetypes by {}", d.value);
        }
    }

    // -- internal radius --------------------------------------------------

    #[test]
    fn internal_radius_regular_hexagon() {
        let res = internal_radius(&regular_polygon(6, 1.0), 3).unwrap();
        assert!(!res.degenerate);
        assert_abs_diff_eq!(res.mu, 3f64.sqrt() / 2.0, epsilon = 1e-9);
        assert!(res.center.norm() < 1e-9);
        assert_eq!(res.basis.ncols(), 2);
    }

    #[test]
    fn internal_radius_segment() {
        let x = points(&[[0.0, 0.0], [2.0, 0.0]]);
        let res = internal_radius(&x, 2).unwrap();
        assert_abs_diff_eq!(res.mu, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(res.center[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(res.center[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn internal_radius_unit_triangle() {
        let x = points(&[[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]);
        let res = internal_radius(&x, 3).unwrap();
        assert_abs_diff_eq!(res.mu, 1.0 / (2.0 * 3f64.sqrt()), epsilon = 1e-9);
        // Incenter.
        assert_abs_diff_eq!(res.center[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(res.center[1], 1.0 / (2.0 * 3f64.sqrt()), epsilon = 1e-9);
    }

    #[test]
    fn internal_radius_square_with_interior_points() {
        let x = points(&[
            [1.0, 1.0],
            [1.0, -1.0],
            [-1.0, 1.0],
            [-1.0, -1.0],
            [0.2, 0.3],
            [-0.4, 0.1],
        ]);
        let res = internal_radius(&x, 3).unwrap();
        assert_abs_diff_eq!(res.mu, 1.0, epsilon = 1e-9);
        assert!(res.center.norm() < 1e-8);
    }

    #[test]
    fn internal_radius_family_hexagon_at_one_third() {
        let hex = hexagon_family(1.0 / 3.0).unwrap();
        let res = internal_radius(&hex.data, 3).unwrap();
        // Regular hexagon of side 1/3: inradius = (1/3) * sqrt(3)/2.
        assert_abs_diff_eq!(res.mu, 3f64.sqrt() / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn internal_radius_scale_equivariance() {
        let mut rng = CounterRng::new(70);
        for m in [2usize, 3] {
            for trial in 0..4 {
                let n = 8 + trial;
                let base =
                    DataMatrix::new(DMatrix::from_fn(n, m, |_, _| rng.normal())).unwrap();
                let r = m + 1;
                let mu1 = internal_radius(&base, r).unwrap().mu;
                for c in [0.5, 3.0] {
                    let scaled = DataMatrix::new(&base.values * c).unwrap();
                    let mu_c = internal_radius(&scaled, r).unwrap().mu;
                    assert_abs_diff_eq!(mu_c, c * mu1, epsilon = 1e-8 * (1.0 + c * mu1));
                }
            }
        }
    }

    #[test]
    fn internal_radius_degenerate_when_affine_dim_short() {
        let x = points(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let res = internal_radius(&x, 3).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.mu, 0.0);
        assert_eq!(res.basis.ncols(), 2);
        // Frame stays orthonormal even when padded.
        let gram = res.basis.transpose() * &res.basis;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn internal_radius_rejects_r_out_of_range() {
        let x = points(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(internal_radius(&x, 1).is_err());
        assert!(internal_radius(&x, 4).is_err());
    }

    /// Brute-force Chebyshev oracle: the optimum sits on some m+1 active
    /// facets; enumerate all bases, solve, keep the best feasible one.
    fn chebyshev_oracle(facets: &[(DVector<f64>, f64)], m: usize) -> f64 {
        let f = facets.len();
        let mut best = f64::NEG_INFINITY;
        for_each_combination(f, m + 1, |subset| {
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut b = DVector::zeros(m + 1);
            for (row, &fi) in subset.iter().enumerate() {
                for j in 0..m {
                    a[(row, j)] = facets[fi].0[j];
                }
                a[(row, m)] = 1.0;
                b[row] = facets[fi].1;
            }
            let Some(sol) = a.full_piv_lu().solve(&b) else {
                return;
            };
            let rho = sol[m];
            if rho <= best || rho < 0.0 {
                return;
            }
            let c = sol.rows(0, m).into_owned();
            let feasible = facets.iter().all(|(af, bf)| af.dot(&c) + rho <= bf + 1e-8);
            if feasible {
                best = rho;
            }
        });
        best
    }

    #[test]
    fn internal_radius_matches_exhaustive_basis_oracle() {
        let mut rng = CounterRng::new(71);
        for m in [2usize, 3] {
            for _ in 0..5 {
                let n = 10;
                let cloud = DataMatrix::new(DMatrix::from_fn(n, m, |_, _| rng.normal())).unwrap();
                let (_, _, coords) = affine_coordinates(&cloud.values);
                let scale = coords.row_iter().map(|p| p.norm()).fold(0.0f64, f64::max);
                let vertices = hull_vertices(&coords, scale).unwrap();
                let facets = polytope_facets(&coords, &vertices, scale).unwrap();
                let (_, via_lp) = chebyshev_lp(&facets, m).unwrap();
                let via_enum = chebyshev_oracle(&facets, m);
                assert_abs_diff_eq!(via_lp, via_enum, epsilon = 1e-8 * (1.0 + via_enum));
            }
        }
    }

    #[test]
    fn internal_radius_ball_containment_sampled() {
        let mut rng = CounterRng::new(72);
        let cloud = DataMatrix::new(DMatrix::from_fn(12, 3, |_, _| rng.normal())).unwrap();
        let res = internal_radius(&cloud, 4).unwrap();
        assert!(res.mu > 0.0);
        let hull = HullProjector::new(&cloud.values).unwrap();
        for _ in 0..60 {
            let mut u = DVector::from_fn(res.basis.ncols(), |_, _| rng.normal());
            u /= u.norm();
            let point = &res.center + &res.basis * u * (res.mu * (1.0 - 1e-9));
            let p = hull.project(&point, 1e-13, 200_000, None).unwrap();
            assert!(
                p.sq_distance.sqrt() <= 1e-8,
                "ball point escapes the hull by {}",
                p.sq_distance.sqrt()
            );
        }
    }

    #[test]
    fn internal_radius_invariant_under_ambient_embedding() {
        // Plant a known polygon in a rotated 2-plane of R^5.
        let hexagon = regular_polygon(6, 1.0);
        let mut rng = CounterRng::new(73);
        let raw = DMatrix::from_fn(5, 2, |_, _| rng.normal());
        let qr = raw.qr();
        let q = qr.q();
        let embedded = DataMatrix::new(&hexagon.values * q.transpose()).unwrap();
        let res = internal_radius(&embedded, 3).unwrap();
        assert_abs_diff_eq!(res.mu, 3f64.sqrt() / 2.0, epsilon = 1e-9);
    }

    // -- alpha search -----------------------------------------------------

    fn separable_triangle() -> (DataMatrix, ArchetypeSet) {
        let h0 = ArchetypeSet::new(DMatrix::from_row_slice(
            3,
            2,
            &[0.0, 0.0, 1.0, 0.0, 0.5, 3f64.sqrt() / 2.0],
        ))
        .unwrap();
        let mut rng = CounterRng::new(80);
        let mut rows = vec![0.0f64; 0];
        // Vertices first, then interior mixtures.
        for i in 0..3 {
            rows.extend_from_slice(&[h0.values[(i, 0)], h0.values[(i, 1)]]);
        }
        for _ in 0..12 {
            let w = rng.dirichlet(2.0, 3);
            let x = (0..3).map(|l| w[l] * h0.values[(l, 0)]).sum::<f64>();
            let y = (0..3).map(|l| w[l] * h0.values[(l, 1)]).sum::<f64>();
            rows.extend_from_slice(&[x, y]);
        }
        (DataMatrix::new(DMatrix::from_row_slice(15, 2, &rows)).unwrap(), h0)
    }

    fn quick_search(seed: u64) -> AlphaSearchConfig {
        AlphaSearchConfig {
            restarts: 16,
            max_pattern_iters: 12,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn alpha_is_one_on_separable_configurations() {
        let (x0, h0) = separable_triangle();
        let est = estimate_alpha(&x0, &h0, &quick_search(1)).unwrap();
        assert!(est.alpha_hat >= 0.95, "alpha_hat = {}", est.alpha_hat);
        assert!(est.alpha_hat <= 1.0 + 1e-9);
        assert!(est.search_evals > 0);
    }

    #[test]
    fn alpha_vanishes_on_the_regular_hexagon() {
        let hex = hexagon_family(1.0 / 3.0).unwrap();
        let est = estimate_alpha(&hex.data, &hex.archetypes, &quick_search(2)).unwrap();
        assert!(est.alpha_hat <= 0.05, "alpha_hat = {}", est.alpha_hat);
        // The witness is a genuinely different triangle that still holds
        // the hexagon.
        let gap = crate::risk::dd_set_set(&hex.data.values, &est.witness_h.values).unwrap();
        assert!(gap.value.sqrt() <= 1e-6);
    }

    #[test]
    fn alpha_rejects_infeasible_reference() {
        let (x0, _) = separable_triangle();
        let tiny = ArchetypeSet::new(DMatrix::from_row_slice(
            3,
            2,
            &[0.4, 0.1, 0.6, 0.1, 0.5, 0.3],
        ))
        .unwrap();
        assert!(matches!(
            estimate_alpha(&x0, &tiny, &quick_search(3)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn alpha_search_is_deterministic() {
        let hex = hexagon_family(0.25).unwrap();
        let a = estimate_alpha(&hex.data, &hex.archetypes, &quick_search(7)).unwrap();
        let b = estimate_alpha(&hex.data, &hex.archetypes, &quick_search(7)).unwrap();
        assert_eq!(a.alpha_hat, b.alpha_hat);
        assert_eq!(a.search_evals, b.search_evals);
        assert_eq!(a.witness_h.values, b.witness_h.values);
    }

    #[test]
    fn alpha_budget_flag_trips_when_capped() {
        let hex = hexagon_family(0.25).unwrap();
        let cfg = AlphaSearchConfig { max_evals: Some(32), ..quick_search(4) };
        let est = estimate_alpha(&hex.data, &hex.archetypes, &cfg).unwrap();
        assert!(est.budget_exhausted);
        assert!(est.search_evals <= 32 + cfg.restarts);
    }

    #[test]
    fn visited_candidates_satisfy_inequality_at_reduced_alpha() {
        let hex = hexagon_family(0.3).unwrap();
        let cfg = AlphaSearchConfig { restarts: 6, max_pattern_iters: 6, seed: 5, ..Default::default() };
        let (est, trace) = estimate_alpha_traced(&hex.data, &hex.archetypes, &cfg).unwrap();
        assert!(!trace.is_empty());
        let alpha = est.alpha_hat - 0.01;
        for (h, _) in &trace {
            let cand = ArchetypeSet::new(h.clone()).unwrap();
            let check =
                check_uniqueness_inequality(&cand, &hex.archetypes, &hex.data, alpha).unwrap();
            assert!(check.holds, "slack {} at alpha {alpha}", check.slack);
        }
    }

    // -- inequality check ---------------------------------------------------

    #[test]
    fn inequality_tight_at_reference() {
        let (x0, h0) = separable_triangle();
        let check = check_uniqueness_inequality(&h0, &h0, &x0, 123.0).unwrap();
        assert!(check.holds);
        assert!(check.slack.abs() <= 1e-9);
    }

    #[test]
    fn inequality_alpha_zero_holds_for_any_containing_candidate() {
        let (x0, h0) = separable_triangle();
        let big = ArchetypeSet::new(DMatrix::from_row_slice(
            3,
            2,
            &[-1.0, -1.0, 2.5, -0.8, 0.5, 2.5],
        ))
        .unwrap();
        let check = check_uniqueness_inequality(&big, &h0, &x0, 0.0).unwrap();
        assert!(check.holds, "slack {}", check.slack);
    }

    #[test]
    fn inequality_alpha_one_holds_on_separable_instances() {
        let (x0, h0) = separable_triangle();
        let mut rng = CounterRng::new(81);
        for _ in 0..10 {
            // Random enlargements of the triangle always contain the data.
            let t = 1.2 + rng.uniform() * 2.0;
            let centroid = x0.values.row_mean().transpose();
            let cand = DMatrix::from_fn(3, 2, |i, j| {
                centroid[j] + (h0.values[(i, j)] - centroid[j]) * t + rng.normal() * 0.01
            });
            let cand = ArchetypeSet::new(cand).unwrap();
            if let Ok(check) = check_uniqueness_inequality(&cand, &h0, &x0, 1.0) {
                assert!(check.holds, "slack {}", check.slack);
            }
        }
    }

    #[test]
    fn inequality_rejects_noncontaining_candidate() {
        let (x0, h0) = separable_triangle();
        let small = ArchetypeSet::new(DMatrix::from_row_slice(
            3,
            2,
            &[0.3, 0.1, 0.7, 0.1, 0.5, 0.4],
        ))
        .unwrap();
        assert!(check_uniqueness_inequality(&small, &h0, &x0, 0.5).is_err());
    }

    // -- robustness bound ---------------------------------------------------

    fn symmetric_instance() -> (ArchetypeSet, DataMatrix) {
        // Square of inradius 1 in a 2-plane of R^3 with identity archetypes:
        // sigma_max = kappa = 1 and mu = 1, center at the origin.
        let h0 = ArchetypeSet::new(DMatrix::identity(3, 3)).unwrap();
        let x0 = DataMatrix::new(DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 0.0, 1.0, -1.0, 0.0, -1.0, 1.0, 0.0, -1.0, -1.0, 0.0],
        ))
        .unwrap();
        (h0, x0)
    }

    #[test]
    fn robustness_zero_noise_is_free() {
        let (h0, x0) = symmetric_instance();
        let b = robustness_bound(&h0, &x0, 0.0, 0.5).unwrap();
        assert_eq!(b.bound_primary, 0.0);
        assert_eq!(b.bound_secondary, 0.0);
        assert!(b.noise_condition_primary && b.noise_condition_secondary && b.noise_condition_ok);
    }

    #[test]
    fn robustness_constant_reduces_to_120_in_the_symmetric_case() {
        let (h0, x0) = symmetric_instance();
        let b = robustness_bound(&h0, &x0, 1e-4, 0.5).unwrap();
        assert_abs_diff_eq!(b.c_star, 120.0, epsilon = 1e-6);
        // kappa = 1 dominates the second constant's inner max here.
        assert_abs_diff_eq!(b.c_star_star, 120.0, epsilon = 1e-6);
    }

    #[test]
    fn robustness_threshold_semantics() {
        let (h0, x0) = symmetric_instance();
        let alpha = 0.5;
        let threshold = alpha * 1.0 / (30.0 * 3f64.powf(1.5));
        let above = robustness_bound(&h0, &x0, threshold * 1.0001, alpha).unwrap();
        assert!(!above.noise_condition_primary);
        assert!(!above.noise_condition_ok);
        let below = robustness_bound(&h0, &x0, threshold * 0.9999, alpha).unwrap();
        assert!(below.noise_condition_primary);
    }

    #[test]
    fn robustness_bound_scales_quadratically_in_delta() {
        let (h0, x0) = symmetric_instance();
        let b1 = robustness_bound(&h0, &x0, 1e-3, 0.5).unwrap();
        let b2 = robustness_bound(&h0, &x0, 2e-3, 0.5).unwrap();
        assert_abs_diff_eq!(b2.bound_primary, 4.0 * b1.bound_primary, epsilon = 1e-12);
        assert_abs_diff_eq!(b2.bound_secondary, 4.0 * b1.bound_secondary, epsilon = 1e-12);
    }

    #[test]
    fn robustness_invariant_under_row_permutation() {
        let mut rng = CounterRng::new(82);
        let h0 = ArchetypeSet::new(DMatrix::from_fn(4, 5, |_, _| rng.normal())).unwrap();
        let x0 = DataMatrix::new(DMatrix::from_fn(12, 5, |_, _| rng.normal() * 0.3)).unwrap();
        if let Ok(base) = robustness_bound(&h0, &x0, 1e-3, 0.4) {
            let perm = [3usize, 1, 0, 2];
            let shuffled =
                ArchetypeSet::new(DMatrix::from_fn(4, 5, |i, j| h0.values[(perm[i], j)])).unwrap();
            let other = robustness_bound(&shuffled, &x0, 1e-3, 0.4).unwrap();
            assert_abs_diff_eq!(base.c_star, other.c_star, epsilon = 1e-9 * base.c_star);
            assert_abs_diff_eq!(
                base.c_star_star,
                other.c_star_star,
                epsilon = 1e-9 * base.c_star_star
            );
        } else {
            panic!("random instance unexpectedly degenerate");
        }
    }

    #[test]
    fn robustness_rejects_degenerate_geometry() {
        let (h0, _) = symmetric_instance();
        // Collinear data: affine dimension 1 < r-1 = 2.
        let flat = DataMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0],
        ))
        .unwrap();
        assert!(robustness_bound(&h0, &flat, 1e-3, 0.5).is_err());
        let (_, x0) = symmetric_instance();
        assert!(robustness_bound(&h0, &x0, -1.0, 0.5).is_err());
        assert!(robustness_bound(&h0, &x0, 1e-3, 0.0).is_err());
    }
}
