//! Archetype initialization: top right singular vectors, or farthest-point
//! selection against the affine hull of the points picked so far (the
//! successive-projections idea of Araujo et al., in its affine variant).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::risk::{ArchetypeSet, DataMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Spectral,
    SuccessiveProjections,
}

#[derive(Debug, Clone)]
pub struct InitResult {
    pub archetypes: ArchetypeSet,
    /// Data-row indices of the chosen archetypes; successive projections
    /// only, in selection order.
    pub selected_indices: Option<Vec<usize>>,
    pub method: InitMethod,
    pub diagnostics: Vec<String>,
}

/// Top-r right singular vectors of `X`, ordered by decreasing singular
/// value, each sign-fixed so its largest-magnitude entry is positive.
///
/// When `r` exceeds the numerical rank the trailing rows still form an
/// orthonormal completion (the SVD provides one); a diagnostic notes this.
pub fn spectral_init(x: &DataMatrix, r: usize) -> Result<InitResult> {
    let (n, d) = (x.n(), x.d());
    if r < 1 || r > n.min(d) {
        return Err(Error::InvalidInput(format!(
            "spectral initialization needs 1 <= r <= min(n,d) = {}, got r = {r}",
            n.min(d)
        )));
    }
    let svd = x.values.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested in the decomposition");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
            .then(a.cmp(&b))
    });

    let mut rows = DMatrix::zeros(r, d);
    let mut diagnostics = Vec::new();
    let sigma_max = svd.singular_values[order[0]];
    for (out_row, &k) in order.iter().take(r).enumerate() {
        let mut v: DVector<f64> = v_t.row(k).transpose();
        // Sign convention: make the largest-magnitude entry positive; first
        // index wins magnitude ties.
        let lead = (0..d)
            .max_by(|&a, &b| {
                v[a].abs().partial_cmp(&v[b].abs()).expect("finite").then(b.cmp(&a))
            })
            .expect("d >= 1");
        if v[lead] < 0.0 {
            v = -v;
        }
        rows.row_mut(out_row).copy_from(&v.transpose());
        if svd.singular_values[k] <= 1e-12 * sigma_max {
            diagnostics.push(format!(
                "singular value {} of {} is numerically zero; row {} is an arbitrary orthonormal completion",
                out_row + 1,
                r,
                out_row + 1
            ));
        }
    }
    Ok(InitResult {
        archetypes: ArchetypeSet::new(rows)?,
        selected_indices: None,
        method: InitMethod::Spectral,
        diagnostics,
    })
}

/// Farthest-point initialization: the first pick maximizes distance from
/// the origin; each later pick maximizes distance to the affine hull of the
/// points picked so far. Ties break to the lowest data index. Returns the
/// selected rows verbatim, so on separable data the true archetypes come
/// back exactly.
pub fn successive_projections_init(x: &DataMatrix, r: usize) -> Result<InitResult> {
    let (n, d) = (x.n(), x.d());
    if r < 1 || r > n {
        return Err(Error::InvalidInput(format!(
            "successive projections needs 1 <= r <= n = {n}, got r = {r}"
        )));
    }

    let scale = x.values.row_iter().map(|row| row.norm()).fold(0.0f64, f64::max);
    let first = argmax_lowest_index(&(0..n).map(|i| x.values.row(i).norm_squared()).collect::<Vec<_>>());
    let mut selected = vec![first];
    let anchor = x.values.row(first).transpose();
    // Orthonormal basis of the affine hull directions of the selected set.
    let mut basis: Vec<DVector<f64>> = Vec::new();

    while selected.len() < r {
        let distances: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut w = x.values.row(i).transpose() - &anchor;
                for _ in 0..2 {
                    for q in &basis {
                        let c = q.dot(&w);
                        w -= q * c;
                    }
                }
                w.norm()
            })
            .collect();
        let pick = argmax_lowest_index(&distances);
        if distances[pick] <= 1e-10 * scale.max(1e-300) {
            return Err(Error::Degenerate(format!(
                "only {} affinely independent points available, {} archetypes requested",
                selected.len(),
                r
            )));
        }
        selected.push(pick);
        let mut w = x.values.row(pick).transpose() - &anchor;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let norm = w.norm();
        basis.push(w / norm);
        let _ = d;
    }

    let mut rows = DMatrix::zeros(r, d);
    for (out_row, &i) in selected.iter().enumerate() {
        rows.row_mut(out_row).copy_from(&x.values.row(i));
    }
    Ok(InitResult {
        archetypes: ArchetypeSet::new(rows)?,
        selected_indices: Some(selected),
        method: InitMethod::SuccessiveProjections,
        diagnostics: Vec::new(),
    })
}

/// Index of the maximum value; the lowest index wins ties. Strictly-greater
/// comparison in index order makes this deterministic.
fn argmax_lowest_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
