//! Exact sparse computation of inverse kernel matrices for tensor Markov
//! kernels on one-dimensional grids, full grids, classical sparse grids, and
//! truncated sparse grids, plus regularized solves `(K + Sigma)^-1 b` via the
//! Woodbury identity.
//!
//! The chain of constructions mirrors the designs themselves: the inverse on
//! a one-dimensional grid is tridiagonal with closed-form entries; a full
//! grid inverse is the Kronecker product of the per-dimension tridiagonal
//! inverses; a classical sparse grid inverse is a signed-binomial combination
//! of embedded full-grid inverses; and a truncated sparse grid inverse is a
//! 2x2 block matrix whose augment block is diagonal.

mod full_grid;
mod one_dim;
mod solve;
mod sparse_grid;
mod tsg;

pub use full_grid::{inv_full_grid, kinv_times_kvec_full};
pub use one_dim::{inv_grid_1d, kinv_times_kvec_1d};
pub use solve::{regularized_apply, regularized_solve};
pub use sparse_grid::{combination_terms, inv_classical_sg, kinv_times_kvec_sg};
pub(crate) use sparse_grid::kinv_times_kvec_sg_indexed;
pub use tsg::{augment_conditional_precision, inv_tsg, TsgInverse};

/// `K^-1 + Sigma^-1` as CSR, shared with the surrogate's posterior path.
pub(crate) fn solve_inner_matrix(kinv: &SparsePrecision, sigma_inv: &[f64]) -> Csr {
    solve::inner_matrix(kinv, sigma_inv)
}

/// Conjugate-gradient solve at the library tolerance.
pub(crate) fn solve_pcg(g: &Csr, rhs: &[f64]) -> crate::error::Result<Vec<f64>> {
    solve::pcg(g, rhs, solve::CG_TOLERANCE, 10 * g.n.max(1))
}

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::GridPoint;

/// A sparse vector as (index, value) pairs with strictly increasing indices.
pub type SparseVec = Vec<(usize, f64)>;

/// Sparse symmetric matrix holding the inverse of a kernel matrix. Each
/// off-diagonal entry is stored once under the key `(min(i,j), max(i,j))`
/// and reported for both orientations.
#[derive(Debug, Clone)]
pub struct SparsePrecision {
    n: usize,
    points: Option<Vec<GridPoint>>,
    entries: HashMap<(usize, usize), f64>,
}

impl SparsePrecision {
    pub fn new(n: usize) -> Self {
        SparsePrecision {
            n,
            points: None,
            entries: HashMap::new(),
        }
    }

    pub fn with_points(points: Vec<GridPoint>) -> Self {
        SparsePrecision {
            n: points.len(),
            points: Some(points),
            entries: HashMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The ordered design list the matrix indices refer to, when the design
    /// lives in the unit cube.
    pub fn point_order(&self) -> Option<&[GridPoint]> {
        self.points.as_deref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let key = (i.min(j), i.max(j));
        *self.entries.entry(key).or_insert(0.0) += value;
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let key = (i.min(j), i.max(j));
        if value == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
    }

    /// Stored nonzeros counted symmetrically: off-diagonal pairs count twice.
    pub fn nnz(&self) -> usize {
        self.entries
            .keys()
            .map(|&(i, j)| if i == j { 1 } else { 2 })
            .sum()
    }

    /// All entries reported both ways, sorted by (row, col).
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (&(i, j), &v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out.sort_unstable_by_key(|&(i, j, _)| (i, j));
        out
    }

    /// Upper-triangle entries (i <= j), sorted. One per stored nonzero.
    pub fn upper_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<_> = self.entries.iter().map(|(&(i, j), &v)| (i, j, v)).collect();
        out.sort_unstable_by_key(|&(i, j, _)| (i, j));
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.to_csr().matvec(x)
    }

    pub fn to_csr(&self) -> Csr {
        Csr::from_triplets(self.n(), &self.triplets())
    }

    /// Dense materialization, for oracles and small paths only.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Scale every entry by a constant (covariance of `K^-1` under kernel
    /// scaling: replacing `k` by `c k` maps the inverse to `K^-1 / c`).
    pub fn scale(&mut self, c: f64) {
        for v in self.entries.values_mut() {
            *v *= c;
        }
    }
}

/// Compressed sparse rows, built once for repeated matrix-vector products.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        // triplets are sorted by (row, col) and free of duplicates
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        for &(_, j, v) in triplets {
            cols.push(j);
            vals.push(v);
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[idx] * x[self.cols[idx]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[idx] == i {
                    d[i] = self.vals[idx];
                }
            }
        }
        d
    }
}

/// Strictly positive diagonal noise matrix `Sigma`.
#[derive(Debug, Clone)]
pub struct DiagonalNoise {
    diag: Vec<f64>,
}

impl DiagonalNoise {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("noise diagonal must be nonempty"));
        }
        if diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "noise diagonal entries must be strictly positive and finite",
            ));
        }
        Ok(DiagonalNoise { diag })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        DiagonalNoise::new(vec![value; n])
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}
