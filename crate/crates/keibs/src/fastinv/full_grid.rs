//! Kronecker assembly of `K^-1` and `K^-1 k(x)` on anisotropic full grids.
//!
//! For a tensor product kernel on a full grid the kernel matrix factors as
//! `K = K_1 (x) ... (x) K_d`, so `K^-1 = K_1^-1 (x) ... (x) K_d^-1` and the
//! per-dimension tridiagonal inverses are all that is needed. Vectorization
//! is row-major with the last dimension varying fastest, consistent with the
//! point ordering of [`crate::grid::full_grid_points`].

use crate::error::{Error, Result};
use crate::grid::GridPoint;
use crate::kernel::TensorMarkovKernel;

use super::one_dim::{inv_grid_1d, kinv_times_kvec_1d};
use super::{SparsePrecision, SparseVec};

fn strides(sizes: &[usize]) -> Vec<usize> {
    let d = sizes.len();
    let mut s = vec![1usize; d];
    for j in (0..d.saturating_sub(1)).rev() {
        s[j] = s[j + 1] * sizes[j + 1];
    }
    s
}

/// `K^-1` on the full grid `X_1 x ... x X_d`, materialized sparsely as the
/// Kronecker product of per-dimension tridiagonal inverses.
pub fn inv_full_grid(k: &TensorMarkovKernel, grids: &[Vec<f64>]) -> Result<SparsePrecision> {
    if grids.len() != k.dim() {
        return Err(Error::invalid(format!(
            "expected {} per-dimension grids, got {}",
            k.dim(),
            grids.len()
        )));
    }
    if grids.iter().any(|g| g.is_empty()) {
        return Err(Error::invalid("per-dimension grids must be nonempty"));
    }
    let d = k.dim();
    let sizes: Vec<usize> = grids.iter().map(|g| g.len()).collect();
    let stride = strides(&sizes);
    let n: usize = sizes.iter().product();

    let per_dim: Vec<Vec<(usize, usize, f64)>> = (0..d)
        .map(|j| inv_grid_1d(k.factor(j), &grids[j]).map(|m| m.triplets()))
        .collect::<Result<_>>()?;

    let points = full_grid_point_list(grids);
    let mut out = match points {
        Some(p) => SparsePrecision::with_points(p),
        None => SparsePrecision::new(n),
    };

    // walk the Cartesian product of per-dimension triplet lists
    let mut cursor = vec![0usize; d];
    loop {
        let mut row = 0usize;
        let mut col = 0usize;
        let mut val = 1.0f64;
        for j in 0..d {
            let (i, jj, v) = per_dim[j][cursor[j]];
            row += i * stride[j];
            col += jj * stride[j];
            val *= v;
        }
        if row <= col {
            out.add(row, col, val);
        }
        let mut dim = d;
        loop {
            if dim == 0 {
                return Ok(out);
            }
            dim -= 1;
            cursor[dim] += 1;
            if cursor[dim] < per_dim[dim].len() {
                break;
            }
            cursor[dim] = 0;
        }
    }
}

/// `K^-1 k(x)` on a full grid: the Kronecker product of per-dimension
/// two-nonzero vectors, so at most `2^d` nonzeros.
pub fn kinv_times_kvec_full(
    k: &TensorMarkovKernel,
    grids: &[Vec<f64>],
    x: &[f64],
) -> Result<SparseVec> {
    if grids.len() != k.dim() || x.len() != k.dim() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let d = k.dim();
    let sizes: Vec<usize> = grids.iter().map(|g| g.len()).collect();
    let stride = strides(&sizes);
    let per_dim: Vec<SparseVec> = (0..d)
        .map(|j| kinv_times_kvec_1d(k.factor(j), &grids[j], x[j]))
        .collect::<Result<_>>()?;
    if per_dim.iter().any(|v| v.is_empty()) {
        return Ok(SparseVec::new());
    }
    let mut out = SparseVec::with_capacity(per_dim.iter().map(|v| v.len()).product());
    let mut cursor = vec![0usize; d];
    loop {
        let mut idx = 0usize;
        let mut val = 1.0f64;
        for j in 0..d {
            let (i, v) = per_dim[j][cursor[j]];
            idx += i * stride[j];
            val *= v;
        }
        out.push((idx, val));
        let mut dim = d;
        loop {
            if dim == 0 {
                out.sort_unstable_by_key(|&(i, _)| i);
                return Ok(out);
            }
            dim -= 1;
            cursor[dim] += 1;
            if cursor[dim] < per_dim[dim].len() {
                break;
            }
            cursor[dim] = 0;
        }
    }
}

fn full_grid_point_list(grids: &[Vec<f64>]) -> Option<Vec<GridPoint>> {
    let d = grids.len();
    let sizes: Vec<usize> = grids.iter().map(|g| g.len()).collect();
    let n: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut cursor = vec![0usize; d];
    loop {
        let coords: Vec<f64> = (0..d).map(|j| grids[j][cursor[j]]).collect();
        out.push(GridPoint::from_coords(coords).ok()?);
        let mut dim = d;
        loop {
            if dim == 0 {
                return Some(out);
            }
            dim -= 1;
            cursor[dim] += 1;
            if cursor[dim] < sizes[dim] {
                break;
            }
            cursor[dim] = 0;
        }
    }
}
