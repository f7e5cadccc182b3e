//! Regularized solves `(K + Sigma)^-1 b` through the Woodbury identity
//!
//! ```text
//! (K + Sigma)^-1 = Sigma^-1 - Sigma^-1 (K^-1 + Sigma^-1)^-1 Sigma^-1
//! ```
//!
//! The inner system is sparse because `K^-1` is, and is solved by conjugate
//! gradient with a Jacobi preconditioner to a relative residual of 1e-10.

use crate::error::{Error, Result};

use super::{Csr, DiagonalNoise, SparsePrecision};

pub(crate) const CG_TOLERANCE: f64 = 1e-10;

/// `(K + Sigma)^-1 b` with diagonal `Sigma`, using only the sparse `K^-1`.
pub fn regularized_solve(
    kinv: &SparsePrecision,
    sigma: &DiagonalNoise,
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = kinv.n();
    if sigma.n() != n || b.len() != n {
        return Err(Error::invalid(format!(
            "size mismatch: K^-1 is {n}x{n}, sigma has {}, b has {}",
            sigma.n(),
            b.len()
        )));
    }
    let sigma_inv: Vec<f64> = sigma.diag().iter().map(|&s| 1.0 / s).collect();
    let g = inner_matrix(kinv, &sigma_inv);
    let rhs: Vec<f64> = b.iter().zip(&sigma_inv).map(|(&bi, &si)| bi * si).collect();
    let z = pcg(&g, &rhs, CG_TOLERANCE, 10 * n.max(1))?;
    Ok((0..n).map(|i| sigma_inv[i] * (b[i] - z[i])).collect())
}

/// Same identity with a caller-prepared inner matrix, for repeated solves
/// against one design.
pub fn regularized_apply(
    g: &Csr,
    sigma_inv: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = g.n;
    let rhs: Vec<f64> = b.iter().zip(sigma_inv).map(|(&bi, &si)| bi * si).collect();
    let z = pcg(g, &rhs, CG_TOLERANCE, 10 * n.max(1))?;
    Ok((0..n).map(|i| sigma_inv[i] * (b[i] - z[i])).collect())
}

/// `K^-1 + Sigma^-1` as compressed sparse rows.
pub(crate) fn inner_matrix(kinv: &SparsePrecision, sigma_inv: &[f64]) -> Csr {
    let n = kinv.n();
    let mut triplets = kinv.triplets();
    // fold the diagonal addition into the triplet list
    let mut has_diag = vec![false; n];
    for t in triplets.iter_mut() {
        if t.0 == t.1 {
            t.2 += sigma_inv[t.0];
            has_diag[t.0] = true;
        }
    }
    for (i, seen) in has_diag.iter().enumerate() {
        if !seen {
            triplets.push((i, i, sigma_inv[i]));
        }
    }
    triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
    Csr::from_triplets(n, &triplets)
}

/// Jacobi-preconditioned conjugate gradient on a symmetric positive definite
/// sparse matrix.
pub(crate) fn pcg(a: &Csr, rhs: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let rhs_norm = norm2(rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let diag = a.diagonal();
    let precond: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(&ri, &mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Numerical(format!(
                "conjugate gradient encountered a non-positive curvature {pap}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= tol * rhs_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * precond[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!(
        "conjugate gradient did not reach relative residual {tol:e} within {max_iter} iterations \
         (residual {:e})",
        norm2(&r) / rhs_norm
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastinv::{inv_grid_1d, inv_classical_sg};
    use crate::kernel::{bf_kernel_unit, kernel_matrix};
    use crate::grid::classical_sg;
    use approx::assert_relative_eq;

    #[test]
    fn three_point_example_matches_dense() {
        let k = bf_kernel_unit(1);
        let xs = [0.25, 0.5, 0.75];
        let kinv = inv_grid_1d(k.factor(0), &xs).unwrap();
        let sigma = DiagonalNoise::constant(3, 1.0).unwrap();
        let b = [1.0, 0.0, 0.0];
        let fast = regularized_solve(&kinv, &sigma, &b).unwrap();

        let points: Vec<_> = xs
            .iter()
            .map(|&x| crate::grid::GridPoint::from_coords(vec![x]).unwrap())
            .collect();
        let km = kernel_matrix(&k, &points).unwrap();
        let reg = km + nalgebra::DMatrix::identity(3, 3);
        let dense = reg.lu().solve(&nalgebra::DVector::from_row_slice(&b)).unwrap();
        for i in 0..3 {
            assert_relative_eq!(fast[i], dense[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn huge_noise_returns_b_over_sigma() {
        let k = bf_kernel_unit(2);
        let kinv = inv_classical_sg(&k, 2, 2).unwrap();
        let sigma = DiagonalNoise::constant(5, 1e8).unwrap();
        let b = [2.0, -1.0, 0.5, 3.0, -0.25];
        let x = regularized_solve(&kinv, &sigma, &b).unwrap();
        for i in 0..5 {
            assert_relative_eq!(x[i], b[i] / 1e8, epsilon = 1e-6 * b[i].abs().max(1.0) / 1e8 * 1e6);
        }
        // consistency: K x + Sigma x = b
        let points = classical_sg(2, 2).unwrap();
        let km = kernel_matrix(&k, &points).unwrap();
        let xv = nalgebra::DVector::from_row_slice(&x);
        let recon = &km * &xv + 1e8 * &xv;
        for i in 0..5 {
            assert_relative_eq!(recon[i], b[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn consistency_k_plus_sigma() {
        let k = bf_kernel_unit(2);
        let kinv = inv_classical_sg(&k, 2, 3).unwrap();
        let n = kinv.n();
        let sigma = DiagonalNoise::new((0..n).map(|i| 0.5 + 0.01 * i as f64).collect()).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let x = regularized_solve(&kinv, &sigma, &b).unwrap();
        let points = classical_sg(2, 3).unwrap();
        let km = kernel_matrix(&k, &points).unwrap();
        let xv = nalgebra::DVector::from_row_slice(&x);
        let mut recon = &km * &xv;
        for i in 0..n {
            recon[i] += sigma.diag()[i] * x[i];
        }
        for i in 0..n {
            assert_relative_eq!(recon[i], b[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(DiagonalNoise::new(vec![1.0, 0.0]).is_err());
        assert!(DiagonalNoise::new(vec![-1.0]).is_err());
    }
}
