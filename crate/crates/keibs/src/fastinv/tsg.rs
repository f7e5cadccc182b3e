//! Block inverse for truncated sparse grid designs.
//!
//! With `A` the kernel matrix over the complete base grid and an augment set
//! of next-level increment points, the inverse kernel matrix over the whole
//! design is
//!
//! ```text
//! K^-1 = [  E     -B D ]      E = A^-1 + B D B^T,   B = A^-1 k(base, aug)
//!        [ -D B^T   D  ]
//! ```
//!
//! where `D` is diagonal: increment points have disjoint hierarchical
//! supports, so they are conditionally independent given the base grid, and
//! each diagonal entry is the per-dimension product of closed-form
//! conditional precisions evaluated at the point's dyadic neighbors.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{GridPoint, TruncatedSparseGrid};
use crate::kernel::TensorMarkovKernel;

use super::sparse_grid::{inv_classical_sg, kinv_times_kvec_sg_indexed};
use super::{SparsePrecision, SparseVec};

/// Conditional precision of an increment point given the rest of a truncated
/// sparse grid: `1 / (k(x,x) - k^T(x) A^-1 k(x))`, in closed form.
///
/// Per dimension the factor is the middle diagonal entry of the tridiagonal
/// inverse on the three-point grid `{c_{l,i-1}, c_{l,i}, c_{l,i+1}}`, with
/// the boundary convention `(p, q) = (0, 1)` below the interval and `(1, 0)`
/// above it when a neighbor index reaches `0` or `2^l`.
pub fn augment_conditional_precision(k: &TensorMarkovKernel, point: &GridPoint) -> Result<f64> {
    let dyadic = point.dyadic().ok_or_else(|| {
        Error::invalid("conditional precision requires a dyadic grid point")
    })?;
    let mut product = 1.0f64;
    for (j, idx) in dyadic.iter().enumerate() {
        let factor = k.factor(j);
        let level = idx.level();
        let i = idx.position();
        let step = (2.0f64).powi(-(level as i32));
        let (p_lo, q_lo) = if i == 1 {
            (0.0, 1.0)
        } else {
            let c = (i - 1) as f64 * step;
            (factor.p(c), factor.q(c))
        };
        let (p_hi, q_hi) = if i + 1 == (1u64 << level) {
            (1.0, 0.0)
        } else {
            let c = (i + 1) as f64 * step;
            (factor.p(c), factor.q(c))
        };
        let c_mid = i as f64 * step;
        let (p_m, q_m) = (factor.p(c_mid), factor.q(c_mid));
        let lower = p_m * q_lo - p_lo * q_m;
        let upper = p_hi * q_m - p_m * q_hi;
        if lower == 0.0 || upper == 0.0 {
            return Err(Error::Singular {
                index: j,
                message: "degenerate conditional precision denominator".into(),
            });
        }
        product *= (p_hi * q_lo - p_lo * q_hi) / (lower * upper);
    }
    if !(product > 0.0) || !product.is_finite() {
        return Err(Error::Singular {
            index: 0,
            message: format!("non-positive conditional precision {product}"),
        });
    }
    Ok(product)
}

/// Structured form of the truncated sparse grid inverse, kept for callers
/// that exploit the blocks directly (the sequential sampler does).
#[derive(Debug, Clone)]
pub struct TsgInverse {
    base_inv: SparsePrecision,
    b_cols: Vec<SparseVec>,
    d_diag: Vec<f64>,
}

impl TsgInverse {
    pub fn build(k: &TensorMarkovKernel, tsg: &TruncatedSparseGrid) -> Result<Self> {
        let d = tsg.dim();
        let tau = tsg.base_level();
        let base_inv = inv_classical_sg(k, d, tau)?;
        let map: HashMap<GridPoint, usize> = tsg
            .base()
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let mut b_cols = Vec::with_capacity(tsg.augment().len());
        let mut d_diag = Vec::with_capacity(tsg.augment().len());
        for point in tsg.augment() {
            b_cols.push(kinv_times_kvec_sg_indexed(k, d, tau, point.coords(), &map)?);
            d_diag.push(augment_conditional_precision(k, point)?);
        }
        Ok(TsgInverse {
            base_inv,
            b_cols,
            d_diag,
        })
    }

    pub fn n_base(&self) -> usize {
        self.base_inv.n()
    }

    pub fn n_aug(&self) -> usize {
        self.d_diag.len()
    }

    pub fn base_inv(&self) -> &SparsePrecision {
        &self.base_inv
    }

    /// Columns of `B = A^-1 k(base, aug)`, one sparse vector per augment point.
    pub fn b_cols(&self) -> &[SparseVec] {
        &self.b_cols
    }

    pub fn d_diag(&self) -> &[f64] {
        &self.d_diag
    }

    /// Append one augment point, reusing the base inverse.
    pub fn push_augment(
        &mut self,
        k: &TensorMarkovKernel,
        base_index: &HashMap<GridPoint, usize>,
        tau: u32,
        point: &GridPoint,
    ) -> Result<()> {
        let d = k.dim();
        self.b_cols
            .push(kinv_times_kvec_sg_indexed(k, d, tau, point.coords(), base_index)?);
        self.d_diag.push(augment_conditional_precision(k, point)?);
        Ok(())
    }

    /// Materialize the full block matrix as a symmetric sparse map over the
    /// design ordering (base points first, then augment points).
    pub fn to_sparse_precision(&self, points: Vec<GridPoint>) -> SparsePrecision {
        let nb = self.n_base();
        debug_assert_eq!(points.len(), nb + self.n_aug());
        let mut out = SparsePrecision::with_points(points);
        for (i, j, v) in self.base_inv.upper_triplets() {
            out.add(i, j, v);
        }
        for (u, col) in self.b_cols.iter().enumerate() {
            let du = self.d_diag[u];
            // E contribution: D_u b_u b_u^T
            for (a, &(i, vi)) in col.iter().enumerate() {
                for &(j, vj) in &col[a..] {
                    out.add(i, j, du * vi * vj);
                }
            }
            // off-diagonal block: -B D
            for &(i, vi) in col {
                out.add(i, nb + u, -du * vi);
            }
            out.add(nb + u, nb + u, du);
        }
        out
    }
}

/// Sparse `K^-1` over a truncated sparse grid, in the design's point order.
pub fn inv_tsg(k: &TensorMarkovKernel, tsg: &TruncatedSparseGrid) -> Result<SparsePrecision> {
    if k.dim() != tsg.dim() {
        return Err(Error::invalid("kernel dimension mismatch"));
    }
    let blocks = TsgInverse::build(k, tsg)?;
    Ok(blocks.to_sparse_precision(tsg.points().cloned().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{canonical_tsg, classical_sg, sg_increment};
    use crate::kernel::{bf_kernel_unit, kernel_matrix};
    use approx::assert_relative_eq;

    fn dense_check(k: &TensorMarkovKernel, tsg: &TruncatedSparseGrid, tol: f64) {
        let inv = inv_tsg(k, tsg).unwrap();
        let points: Vec<GridPoint> = tsg.points().cloned().collect();
        let km = kernel_matrix(k, &points).unwrap();
        let dense = km.try_inverse().unwrap();
        let scale = dense.amax();
        for i in 0..points.len() {
            for j in 0..points.len() {
                assert!(
                    (inv.get(i, j) - dense[(i, j)]).abs() / scale <= tol,
                    "entry ({i},{j}): {} vs {}",
                    inv.get(i, j),
                    dense[(i, j)]
                );
            }
        }
    }

    #[test]
    fn empty_augment_reduces_to_classical() {
        let k = bf_kernel_unit(2);
        let tsg = canonical_tsg(2, 5).unwrap();
        let inv = inv_tsg(&k, &tsg).unwrap();
        let sg = inv_classical_sg(&k, 2, 2).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_relative_eq!(inv.get(i, j), sg.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn partial_augment_matches_dense() {
        let k = bf_kernel_unit(2);
        let base = classical_sg(2, 1).unwrap();
        let inc = sg_increment(2, 1).unwrap();
        let tsg =
            TruncatedSparseGrid::new(2, 1, base, inc.into_iter().take(2).collect()).unwrap();
        dense_check(&k, &tsg, 1e-10);
    }

    #[test]
    fn assorted_tsgs_match_dense() {
        for (d, n) in [(1usize, 5u64), (2, 9), (2, 20), (3, 11)] {
            let k = bf_kernel_unit(d);
            let tsg = canonical_tsg(d, n).unwrap();
            dense_check(&k, &tsg, 1e-9);
        }
    }

    #[test]
    fn d_entries_are_schur_complements() {
        let k = bf_kernel_unit(2);
        let tsg = canonical_tsg(2, 8).unwrap();
        let blocks = TsgInverse::build(&k, &tsg).unwrap();
        let base = tsg.base().to_vec();
        let a = kernel_matrix(&k, &base).unwrap();
        let a_inv = a.try_inverse().unwrap();
        for (u, point) in tsg.augment().iter().enumerate() {
            let kx = nalgebra::DVector::from_iterator(
                base.len(),
                base.iter().map(|p| k.eval_points(p, point)),
            );
            let kxx = k.eval_points(point, point);
            let schur = kxx - (kx.transpose() * &a_inv * &kx)[(0, 0)];
            assert_relative_eq!(blocks.d_diag()[u], 1.0 / schur, max_relative = 1e-9);
        }
    }
}
