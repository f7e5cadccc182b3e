//! Closed-form tridiagonal inverse for a tensor Markov factor on a
//! one-dimensional grid, and the two-nonzero vector `K^-1 k(x)`.
//!
//! With design points `x_1 < ... < x_n`, `p_i = p(x_i)`, `q_i = q(x_i)` and
//! the boundary convention `p_0 = q_{n+1} = 0`, `p_{n+1} = q_0 = 1`:
//!
//! ```text
//! (K^-1)_{i,i}   = (p_{i+1} q_{i-1} - p_{i-1} q_{i+1})
//!                  / [(p_i q_{i-1} - p_{i-1} q_i)(p_{i+1} q_i - p_i q_{i+1})]
//! (K^-1)_{i,i+1} = -1 / (p_{i+1} q_i - p_i q_{i+1})
//! ```
//!
//! and for `x` with `x_{i*} <= x < x_{i*+1}`, `K^-1 k(x)` is supported on
//! `{i*, i*+1}` with the interpolation weights of the bracketing pair.

use crate::error::{Error, Result};
use crate::grid::GridPoint;
use crate::kernel::Factor;

use super::{SparsePrecision, SparseVec};

/// `p_i, q_i` with the boundary convention applied at indices `0` and `n+1`.
struct FactorTable {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl FactorTable {
    fn build(factor: &Factor, xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        let mut p = Vec::with_capacity(n + 2);
        let mut q = Vec::with_capacity(n + 2);
        p.push(0.0);
        q.push(1.0);
        for (i, &x) in xs.iter().enumerate() {
            if !factor.contains(x) {
                return Err(Error::Domain(format!(
                    "design point {i} at {x} lies outside the factor domain"
                )));
            }
            p.push(factor.p(x));
            q.push(factor.q(x));
        }
        p.push(1.0);
        q.push(0.0);
        Ok(FactorTable { p, q })
    }

    /// Denominator `p_{i} q_{i-1} - p_{i-1} q_{i}` for `i = 1..n+1`.
    fn denom(&self, i: usize) -> f64 {
        self.p[i] * self.q[i - 1] - self.p[i - 1] * self.q[i]
    }
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid("design must contain at least one point"));
    }
    for i in 1..xs.len() {
        if !(xs[i] > xs[i - 1]) {
            return Err(Error::Singular {
                index: i,
                message: format!(
                    "design coordinates must be strictly increasing, got {} after {}",
                    xs[i],
                    xs[i - 1]
                ),
            });
        }
    }
    Ok(())
}

fn check_denominators(table: &FactorTable, n: usize) -> Result<()> {
    for i in 1..=n + 1 {
        if table.denom(i) == 0.0 {
            return Err(Error::Singular {
                index: i - 1,
                message: "degenerate denominator p_i q_{i-1} - p_{i-1} q_i".into(),
            });
        }
    }
    Ok(())
}

/// Tridiagonal `K^-1` for a one-dimensional tensor Markov factor.
pub fn inv_grid_1d(factor: &Factor, xs: &[f64]) -> Result<SparsePrecision> {
    check_increasing(xs)?;
    let n = xs.len();
    let table = FactorTable::build(factor, xs)?;
    check_denominators(&table, n)?;
    // coordinates outside the unit cube keep index-only bookkeeping
    let mut out = match xs
        .iter()
        .map(|&x| GridPoint::from_coords(vec![x]))
        .collect::<Result<Vec<_>>>()
    {
        Ok(points) => SparsePrecision::with_points(points),
        Err(_) => SparsePrecision::new(n),
    };
    for i in 1..=n {
        let num = table.p[i + 1] * table.q[i - 1] - table.p[i - 1] * table.q[i + 1];
        out.set(i - 1, i - 1, num / (table.denom(i) * table.denom(i + 1)));
        if i < n {
            out.set(i - 1, i, -1.0 / table.denom(i + 1));
        }
    }
    Ok(out)
}

/// `K^-1 k(x)` for a one-dimensional factor: at most two nonzeros at the
/// indices bracketing `x`.
pub fn kinv_times_kvec_1d(factor: &Factor, xs: &[f64], x: f64) -> Result<SparseVec> {
    check_increasing(xs)?;
    if !factor.contains(x) {
        return Err(Error::Domain(format!(
            "prediction point {x} lies outside the factor domain"
        )));
    }
    let n = xs.len();
    let table = FactorTable::build(factor, xs)?;
    check_denominators(&table, n)?;
    // largest i in 0..=n with xs[i-1] <= x (one-based), i.e. x in [x_i, x_{i+1})
    let i_star = xs.partition_point(|&xi| xi <= x);
    let px = factor.p(x);
    let qx = factor.q(x);
    let denom = table.denom(i_star + 1);
    let mut out = SparseVec::new();
    if i_star >= 1 {
        let v = (table.p[i_star + 1] * qx - px * table.q[i_star + 1]) / denom;
        if v != 0.0 {
            out.push((i_star - 1, v));
        }
    }
    if i_star + 1 <= n {
        let v = (px * table.q[i_star] - table.p[i_star] * qx) / denom;
        if v != 0.0 {
            out.push((i_star, v));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{bf_kernel_unit, kernel_matrix, laplace_kernel};
    use approx::assert_relative_eq;

    fn bf_factor() -> Factor {
        Factor::BrownianField {
            theta: 1.0,
            gamma: 1.0,
        }
    }

    #[test]
    fn bf_three_point_example() {
        let inv = inv_grid_1d(&bf_factor(), &[0.25, 0.5, 0.75]).unwrap();
        assert_relative_eq!(inv.get(0, 0), 4.8, max_relative = 1e-12);
        assert_relative_eq!(inv.get(1, 1), 8.0, max_relative = 1e-12);
        assert_relative_eq!(inv.get(2, 2), 4.0, max_relative = 1e-12);
        assert_relative_eq!(inv.get(0, 1), -4.0, max_relative = 1e-12);
        assert_relative_eq!(inv.get(1, 2), -4.0, max_relative = 1e-12);
        assert_eq!(inv.get(0, 2), 0.0);
    }

    #[test]
    fn single_point_is_reciprocal() {
        let inv = inv_grid_1d(&bf_factor(), &[0.5]).unwrap();
        assert_relative_eq!(inv.get(0, 0), 1.0 / 1.5, max_relative = 1e-14);
    }

    #[test]
    fn product_with_kernel_matrix_is_identity() {
        let xs = [0.25, 0.5, 0.75];
        let inv = inv_grid_1d(&bf_factor(), &xs).unwrap();
        let k = bf_kernel_unit(1);
        let pts: Vec<_> = xs
            .iter()
            .map(|&x| GridPoint::from_coords(vec![x]).unwrap())
            .collect();
        let km = kernel_matrix(&k, &pts).unwrap();
        let prod = inv.to_dense() * km;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn nnz_is_exactly_tridiagonal() {
        for n in 1..=32 {
            let xs: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
            let inv = inv_grid_1d(&bf_factor(), &xs).unwrap();
            assert_eq!(inv.nnz(), 3 * n - 2);
            for (i, j, _) in inv.triplets() {
                assert!(i.abs_diff(j) <= 1, "pattern must be tridiagonal");
            }
        }
    }

    #[test]
    fn laplace_matches_dense() {
        let theta = 1.7;
        let factor = Factor::Laplace { theta };
        let xs: Vec<f64> = vec![0.1, 0.3, 0.55, 0.8, 0.9];
        let inv = inv_grid_1d(&factor, &xs).unwrap();
        let k = laplace_kernel(&[theta]).unwrap();
        let pts: Vec<_> = xs
            .iter()
            .map(|&x| GridPoint::from_coords(vec![x]).unwrap())
            .collect();
        let km = kernel_matrix(&k, &pts).unwrap();
        let dense_inv = km.try_inverse().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_relative_eq!(inv.get(i, j), dense_inv[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn duplicate_point_is_singular() {
        let err = inv_grid_1d(&bf_factor(), &[0.25, 0.25]).unwrap_err();
        assert!(matches!(err, crate::error::Error::Singular { index: 1, .. }));
    }

    #[test]
    fn kvec_at_design_point_is_unit() {
        let xs = [0.25, 0.5, 0.75];
        let v = kinv_times_kvec_1d(&bf_factor(), &xs, 0.5).unwrap();
        assert_eq!(v, vec![(1, 1.0)]);
    }

    #[test]
    fn kvec_interpolates_kernel_column() {
        // K * (K^-1 k(x)) must reproduce k(x, .) at the design points
        let xs = [0.25, 0.5, 0.75];
        let x = 0.375;
        let v = kinv_times_kvec_1d(&bf_factor(), &xs, x).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!((v[0].0, v[1].0), (0, 1));
        let f = bf_factor();
        for &xi in xs.iter() {
            let recon: f64 = v.iter().map(|&(j, w)| f.eval(xi, xs[j]) * w).sum();
            assert_relative_eq!(recon, f.eval(xi, x), epsilon = 1e-12);
        }
    }

    #[test]
    fn kvec_left_of_grid_has_single_nonzero() {
        let xs = [0.25, 0.5, 0.75];
        let v = kinv_times_kvec_1d(&bf_factor(), &xs, 0.1).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, 0);
        // boundary convention gives weight p(x)/p_1
        assert_relative_eq!(v[0].1, 1.1 / 1.25, max_relative = 1e-14);
    }

    #[test]
    fn kvec_right_of_grid_flat_for_bf() {
        let xs = [0.25, 0.5, 0.75];
        let v = kinv_times_kvec_1d(&bf_factor(), &xs, 0.9).unwrap();
        assert_eq!(v, vec![(2, 1.0)]);
    }
}
