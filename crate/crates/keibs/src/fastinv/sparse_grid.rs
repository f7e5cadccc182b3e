//! Signed-binomial combination of full-grid inverses over a classical
//! sparse grid.
//!
//! The sparse grid of level `tau` is the union of the full grids with
//! `tau <= |l| <= tau + d - 1`, and its inverse kernel matrix accumulates
//! each embedded full-grid inverse with weight
//! `(-1)^{tau+d-1-|l|} C(d-1, tau+d-1-|l|)`. The same weights assemble
//! `K^-1 k(x)` from the per-grid Kronecker vectors.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{
    binomial_i64, classical_sg, compositions, dyadic_grid_1d, full_grid_points, GridPoint,
    LevelMultiIndex,
};
use crate::kernel::TensorMarkovKernel;

use super::full_grid::{inv_full_grid, kinv_times_kvec_full};
use super::{SparsePrecision, SparseVec};

/// The level multi-indices and exact integer weights of the combination
/// technique for a level-`tau` sparse grid in dimension `d`.
pub fn combination_terms(d: usize, tau: u32) -> Result<Vec<(LevelMultiIndex, i64)>> {
    if d == 0 || tau == 0 {
        return Err(Error::invalid("dimension and level must be >= 1"));
    }
    let top = tau + d as u32 - 1;
    let mut terms = Vec::new();
    for order in tau.max(d as u32)..=top {
        let k = top - order;
        let coeff = binomial_i64(d as u32 - 1, k) * if k % 2 == 0 { 1 } else { -1 };
        for l in compositions(d, order) {
            terms.push((l, coeff));
        }
    }
    Ok(terms)
}

fn index_map(points: &[GridPoint]) -> HashMap<GridPoint, usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i))
        .collect()
}

fn grids_of(l: &LevelMultiIndex) -> Vec<Vec<f64>> {
    l.levels().iter().map(|&lj| dyadic_grid_1d(lj)).collect()
}

fn global_indices(l: &LevelMultiIndex, map: &HashMap<GridPoint, usize>) -> Vec<usize> {
    full_grid_points(l)
        .iter()
        .map(|p| *map.get(p).expect("full grid point belongs to the sparse grid"))
        .collect()
}

/// Sparse `K^-1` over the classical sparse grid of level `tau`, indexed in
/// canonical point order.
pub fn inv_classical_sg(k: &TensorMarkovKernel, d: usize, tau: u32) -> Result<SparsePrecision> {
    if d != k.dim() {
        return Err(Error::invalid("kernel dimension mismatch"));
    }
    let points = classical_sg(d, tau)?;
    let map = index_map(&points);
    let mut out = SparsePrecision::with_points(points);
    for (l, coeff) in combination_terms(d, tau)? {
        let local = inv_full_grid(k, &grids_of(&l))?;
        let globals = global_indices(&l, &map);
        for (i, j, v) in local.upper_triplets() {
            out.add(globals[i], globals[j], coeff as f64 * v);
        }
    }
    Ok(out)
}

/// `K^-1 k(x)` over a classical sparse grid for an arbitrary point `x`.
pub fn kinv_times_kvec_sg(
    k: &TensorMarkovKernel,
    d: usize,
    tau: u32,
    x: &[f64],
) -> Result<SparseVec> {
    if d != k.dim() || x.len() != d {
        return Err(Error::invalid("dimension mismatch"));
    }
    let points = classical_sg(d, tau)?;
    let map = index_map(&points);
    kinv_times_kvec_sg_indexed(k, d, tau, x, &map)
}

/// As [`kinv_times_kvec_sg`] with a caller-provided point index, so repeated
/// queries against one grid avoid rebuilding the map.
pub(crate) fn kinv_times_kvec_sg_indexed(
    k: &TensorMarkovKernel,
    d: usize,
    tau: u32,
    x: &[f64],
    map: &HashMap<GridPoint, usize>,
) -> Result<SparseVec> {
    let mut acc: HashMap<usize, f64> = HashMap::new();
    for (l, coeff) in combination_terms(d, tau)? {
        let local = kinv_times_kvec_full(k, &grids_of(&l), x)?;
        if local.is_empty() {
            continue;
        }
        let globals = global_indices(&l, map);
        for (i, v) in local {
            *acc.entry(globals[i]).or_insert(0.0) += coeff as f64 * v;
        }
    }
    let mut out: SparseVec = acc.into_iter().collect();
    out.sort_unstable_by_key(|&(i, _)| i);
    Ok(out)
}
