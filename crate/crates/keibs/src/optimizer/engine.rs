//! Exact batch evaluation of the posterior proxies over the whole candidate
//! grid, per sequential-sampling iteration.
//!
//! The design is always the complete base grid plus sampled increment
//! points, so `K^-1` has the block form `[[E, -BD], [-D B^T, D]]` with a
//! diagonal augment block of size independent of the base. Solves with
//! `G = K^-1 + Sigma^-1` therefore reduce to a dense factorization of the
//! base-sized Schur complement `S = A^-1 + Sigma_base^-1 + B Dh B^T`, and
//! the per-candidate work stays bounded as samples accumulate:
//!
//! * a sampled candidate has weight vector `K^-1 k(x) = e_i`, so its mean
//!   correction is one lookup and its variance one entry of the block
//!   inverse;
//! * an unsampled increment candidate has `K^-1 k(x) = [b_x; 0]` with the
//!   sparse, run-constant `b_x = A^-1 k_base(x)` (its conditional covariance
//!   with other increment points given the base vanishes), so its variance
//!   is the closed-form conditional variance plus a sparse quadratic form in
//!   the Schur inverse.
//!
//! Everything is an exact identity; tests pin the results to the dense
//! formulas.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastinv::{
    augment_conditional_precision, inv_classical_sg, regularized_solve, Csr, DiagonalNoise,
    SparseVec,
};
use crate::grid::{classical_sg, sg_size, GridPoint, TruncatedSparseGrid};
use crate::kernel::TensorMarkovKernel;

use super::ei_value;

pub(crate) struct Engine {
    kernel: TensorMarkovKernel,
    dim: usize,
    tau: u32,
    sigma: f64,
    // candidate grid: the level-(tau+1) sparse grid; the base grid is its
    // canonical prefix
    cands: Vec<GridPoint>,
    n_base: usize,
    base_index: HashMap<GridPoint, usize>,
    /// `A^-1 k_base(x)` per increment candidate (index shifted by `n_base`).
    b_cols: Vec<SparseVec>,
    /// Noise-free conditional variance per increment candidate.
    cond_var: Vec<f64>,
    a_inv: Csr,
    a_inv_dense: DMatrix<f64>,
    /// Ridge weights of the frozen first-stage predictor.
    alpha: Vec<f64>,
    f_hat: Vec<f64>,
    // design bookkeeping: base indices coincide with candidate indices
    design_of_cand: Vec<Option<usize>>,
    aug_cands: Vec<usize>,
    mult: Vec<u64>,
    y_bar: Vec<f64>,
    resid: Vec<f64>,
    // iteration state
    delta: f64,
    schur_inv: Option<DMatrix<f64>>,
    g22: Vec<f64>,
    /// `r - G^-1 (K^-1 r)`, the design-side vector every candidate mean
    /// correction contracts against.
    rz: Vec<f64>,
}

impl Engine {
    pub fn new(
        kernel: TensorMarkovKernel,
        dim: usize,
        tau: u32,
        stage1_values: &[f64],
        lambda: f64,
        sigma: f64,
    ) -> Result<Self> {
        let n_base = sg_size(dim, tau)? as usize;
        if stage1_values.len() != n_base {
            return Err(Error::invalid("stage-1 values must cover the base grid"));
        }
        let cands = classical_sg(dim, tau + 1)?;
        let m = cands.len();
        let base_index: HashMap<GridPoint, usize> = cands[..n_base]
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();

        let a_inv_sp = inv_classical_sg(&kernel, dim, tau)?;
        let a_inv = a_inv_sp.to_csr();
        let a_inv_dense = a_inv_sp.to_dense();

        let mut b_cols = Vec::with_capacity(m - n_base);
        let mut cond_var = Vec::with_capacity(m - n_base);
        for cand in &cands[n_base..] {
            b_cols.push(crate::fastinv::kinv_times_kvec_sg(
                &kernel,
                dim,
                tau,
                cand.coords(),
            )?);
            cond_var.push(1.0 / augment_conditional_precision(&kernel, cand)?);
        }

        // frozen ridge predictor from the stage-1 batch
        let alpha = if lambda == 0.0 {
            a_inv.matvec(stage1_values)
        } else {
            let noise = DiagonalNoise::constant(n_base, n_base as f64 * lambda)?;
            regularized_solve(&a_inv_sp, &noise, stage1_values)?
        };
        // f_hat at every candidate through k_base(x) = A b_x
        let mut a_dense = DMatrix::zeros(n_base, n_base);
        for i in 0..n_base {
            for j in i..n_base {
                let v = kernel.eval_points(&cands[i], &cands[j]);
                a_dense[(i, j)] = v;
                a_dense[(j, i)] = v;
            }
        }
        let a_alpha = &a_dense * DMatrix::from_column_slice(n_base, 1, &alpha);
        let mut f_hat = Vec::with_capacity(m);
        for (c, _cand) in cands.iter().enumerate() {
            if c < n_base {
                f_hat.push(a_alpha[(c, 0)]);
            } else {
                let b = &b_cols[c - n_base];
                f_hat.push(b.iter().map(|&(i, v)| v * a_alpha[(i, 0)]).sum());
            }
        }

        let mut design_of_cand = vec![None; m];
        let mut resid = Vec::with_capacity(n_base);
        for i in 0..n_base {
            design_of_cand[i] = Some(i);
            resid.push(stage1_values[i] - f_hat[i]);
        }

        Ok(Engine {
            kernel,
            dim,
            tau,
            sigma,
            cands,
            n_base,
            base_index,
            b_cols,
            cond_var,
            a_inv,
            a_inv_dense,
            alpha,
            f_hat,
            design_of_cand,
            aug_cands: Vec::new(),
            mult: vec![1; n_base],
            y_bar: stage1_values.to_vec(),
            resid,
            delta: 1.0,
            schur_inv: None,
            g22: Vec::new(),
            rz: Vec::new(),
        })
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn n_candidates(&self) -> usize {
        self.cands.len()
    }

    pub fn candidate(&self, idx: usize) -> &GridPoint {
        &self.cands[idx]
    }

    pub fn is_sampled(&self, idx: usize) -> bool {
        self.design_of_cand[idx].is_some()
    }

    fn precision_of_aug(&self, j: usize) -> f64 {
        1.0 / self.cond_var[self.aug_cands[j] - self.n_base]
    }

    fn b_col_of_aug(&self, j: usize) -> &SparseVec {
        &self.b_cols[self.aug_cands[j] - self.n_base]
    }

    /// Refresh the per-iteration state for a new exploration scale.
    pub fn prepare(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta must be finite and > 0"));
        }
        self.delta = delta;
        if self.sigma == 0.0 {
            self.rz = self.resid.clone();
            self.schur_inv = None;
            return Ok(());
        }
        let nb = self.n_base;
        let na = self.aug_cands.len();
        let c = self.sigma * self.sigma / (delta * delta);

        self.g22 = (0..na)
            .map(|j| self.precision_of_aug(j) + self.mult[nb + j] as f64 / c)
            .collect();

        // Schur complement S = A^-1 + Sigma_base^-1 + B Dh B^T with
        // Dh = (D^-1 + Sigma_aug)^-1 elementwise
        let mut schur = self.a_inv_dense.clone();
        for i in 0..nb {
            schur[(i, i)] += self.mult[i] as f64 / c;
        }
        for j in 0..na {
            let dv = self.cond_var[self.aug_cands[j] - nb];
            let d_hat = 1.0 / (dv + c / self.mult[nb + j] as f64);
            let col = self.b_col_of_aug(j);
            for (a, &(ia, va)) in col.iter().enumerate() {
                for &(ib, vb) in &col[a..] {
                    let add = d_hat * va * vb;
                    schur[(ia, ib)] += add;
                    if ia != ib {
                        schur[(ib, ia)] += add;
                    }
                }
            }
        }
        let chol = nalgebra::Cholesky::new(schur).ok_or_else(|| {
            Error::Numerical("Schur complement lost positive definiteness".into())
        })?;
        let h = chol.inverse();

        // gamma = K^-1 r via the blocks, then z = G^-1 gamma
        let (r1, r2) = self.resid.split_at(nb);
        let bt_r1: Vec<f64> = (0..na).map(|j| sparse_dot(self.b_col_of_aug(j), r1)).collect();
        let mut gamma1 = self.a_inv.matvec(r1);
        let mut gamma2 = vec![0.0; na];
        for j in 0..na {
            let p = self.precision_of_aug(j);
            let scale = p * (bt_r1[j] - r2[j]);
            for &(i, v) in self.b_col_of_aug(j) {
                gamma1[i] += scale * v;
            }
            gamma2[j] = p * (r2[j] - bt_r1[j]);
        }
        let mut rhs1 = gamma1.clone();
        for j in 0..na {
            let t = gamma2[j] / self.g22[j];
            let scale = self.precision_of_aug(j) * t;
            for &(i, v) in self.b_col_of_aug(j) {
                rhs1[i] += scale * v;
            }
        }
        let z1 = &h * DMatrix::from_column_slice(nb, 1, &rhs1);
        let mut rz = Vec::with_capacity(nb + na);
        for i in 0..nb {
            rz.push(self.resid[i] - z1[(i, 0)]);
        }
        for j in 0..na {
            let bz: f64 = self
                .b_col_of_aug(j)
                .iter()
                .map(|&(i, v)| v * z1[(i, 0)])
                .sum();
            let z2 = (gamma2[j] + self.precision_of_aug(j) * bz) / self.g22[j];
            rz.push(self.resid[nb + j] - z2);
        }
        self.rz = rz;
        self.schur_inv = Some(h);
        Ok(())
    }

    /// Posterior mean and scale proxies of a candidate under the state set
    /// by the last [`Engine::prepare`].
    pub fn posterior_at(&self, idx: usize) -> (f64, f64) {
        let nb = self.n_base;
        let mean = match self.design_of_cand[idx] {
            Some(i) => self.f_hat[idx] + self.rz[i],
            None => self.f_hat[idx] + sparse_dot(&self.b_cols[idx - nb], &self.rz[..nb]),
        };
        let var_over_d2 = if self.sigma == 0.0 {
            match self.design_of_cand[idx] {
                Some(_) => 0.0,
                None => self.cond_var[idx - nb],
            }
        } else {
            let h = self.schur_inv.as_ref().expect("prepare sets the inverse");
            match self.design_of_cand[idx] {
                Some(i) if i < nb => h[(i, i)],
                Some(i) => {
                    let j = i - nb;
                    let p = self.precision_of_aug(j);
                    let q = sparse_quadratic(self.b_col_of_aug(j), h);
                    (1.0 + p * p / self.g22[j] * q) / self.g22[j]
                }
                None => self.cond_var[idx - nb] + sparse_quadratic(&self.b_cols[idx - nb], h),
            }
        };
        let sd = self.delta * var_over_d2.max(0.0).sqrt();
        (mean, sd)
    }

    /// Incumbent value `max_i f_tilde(x_i)` over the sampled points.
    pub fn incumbent(&self) -> f64 {
        let nb = self.n_base;
        let mut best = f64::NEG_INFINITY;
        for i in 0..nb {
            best = best.max(self.f_hat[i] + self.rz[i]);
        }
        for (j, &cand) in self.aug_cands.iter().enumerate() {
            best = best.max(self.f_hat[cand] + self.rz[nb + j]);
        }
        best
    }

    /// Argmax of the acquisition over all candidates, with ties resolved to
    /// the lowest canonical index. Returns (index, score, incumbent).
    pub fn select(&self) -> (usize, f64, f64) {
        let incumbent = self.incumbent();
        let scores: Vec<f64> = (0..self.cands.len())
            .into_par_iter()
            .map(|c| {
                let (mean, sd) = self.posterior_at(c);
                ei_value(mean, sd, incumbent)
            })
            .collect();
        let mut best = 0usize;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        (best, scores[best], incumbent)
    }

    /// Argmax of the posterior mean over all candidates.
    pub fn argmax_mean(&self) -> (usize, f64) {
        let means: Vec<f64> = (0..self.cands.len())
            .into_par_iter()
            .map(|c| self.posterior_at(c).0)
            .collect();
        let mut best = 0usize;
        for (c, &v) in means.iter().enumerate() {
            if v > means[best] {
                best = c;
            }
        }
        (best, means[best])
    }

    /// Record one sample at a candidate.
    pub fn add_sample(&mut self, idx: usize, y: f64) -> Result<()> {
        match self.design_of_cand[idx] {
            Some(i) => {
                if self.sigma == 0.0 {
                    return Err(Error::invalid(
                        "revisits require a positive noise proxy to aggregate",
                    ));
                }
                self.mult[i] += 1;
                self.y_bar[i] += (y - self.y_bar[i]) / self.mult[i] as f64;
                self.resid[i] = self.y_bar[i] - self.f_hat[idx];
            }
            None => {
                let design_idx = self.n_base + self.aug_cands.len();
                self.design_of_cand[idx] = Some(design_idx);
                self.aug_cands.push(idx);
                self.mult.push(1);
                self.y_bar.push(y);
                self.resid.push(y - self.f_hat[idx]);
            }
        }
        Ok(())
    }

    /// Posterior mean at an arbitrary unit-cube point under the prepared
    /// state; used by the optional vertex-refinement pass.
    pub fn mean_at(&self, x: &[f64]) -> Result<f64> {
        let nb = self.n_base;
        let na = self.aug_cands.len();
        let a: Vec<f64> = self.cands[..nb]
            .iter()
            .map(|p| self.kernel.eval(p.coords(), x))
            .collect();
        let f_hat: f64 = a.iter().zip(&self.alpha).map(|(&k, &al)| k * al).sum();
        let b_x = crate::fastinv::kinv_times_kvec_sg_indexed(
            &self.kernel,
            self.dim,
            self.tau,
            x,
            &self.base_index,
        )?;
        let mut w1 = vec![0.0; nb];
        for &(i, v) in &b_x {
            w1[i] = v;
        }
        let mut w2 = vec![0.0; na];
        for j in 0..na {
            let u = self
                .kernel
                .eval(self.cands[self.aug_cands[j]].coords(), x);
            let v = u - sparse_dot(self.b_col_of_aug(j), &a);
            let p = self.precision_of_aug(j);
            w2[j] = p * v;
            for &(i, bv) in self.b_col_of_aug(j) {
                w1[i] -= p * v * bv;
            }
        }
        let (rz1, rz2) = self.rz.split_at(nb);
        let corr: f64 = w1.iter().zip(rz1).map(|(&w, &r)| w * r).sum::<f64>()
            + w2.iter().zip(rz2).map(|(&w, &r)| w * r).sum::<f64>();
        Ok(f_hat + corr)
    }

    /// Scan the vertices of the rectangular partition induced by the design
    /// coordinates for a higher surrogate mean. Returns the improvement, if
    /// one exists.
    pub fn refine_over_partition(
        &self,
        current_best: f64,
        vertex_limit: u64,
    ) -> Result<Option<(GridPoint, f64)>> {
        let nb = self.n_base;
        let mut per_dim: Vec<Vec<f64>> = vec![Vec::new(); self.dim];
        for i in 0..nb {
            for (j, &x) in self.cands[i].coords().iter().enumerate() {
                per_dim[j].push(x);
            }
        }
        for &c in &self.aug_cands {
            for (j, &x) in self.cands[c].coords().iter().enumerate() {
                per_dim[j].push(x);
            }
        }
        for axis in per_dim.iter_mut() {
            axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
            axis.dedup_by(|a, b| a.to_bits() == b.to_bits());
        }
        let total: u64 = per_dim
            .iter()
            .map(|a| a.len() as u64)
            .try_fold(1u64, |acc, n| acc.checked_mul(n))
            .ok_or_else(|| Error::Overflow("vertex count".into()))?;
        if total > vertex_limit {
            return Err(Error::invalid(format!(
                "refinement pass would visit {total} vertices, above the limit {vertex_limit}"
            )));
        }
        let mut best: Option<(GridPoint, f64)> = None;
        let mut best_val = current_best;
        let mut cursor = vec![0usize; self.dim];
        loop {
            let coords: Vec<f64> = cursor
                .iter()
                .zip(&per_dim)
                .map(|(&c, axis)| axis[c])
                .collect();
            let mean = self.mean_at(&coords)?;
            if mean > best_val {
                best_val = mean;
                best = Some((GridPoint::from_coords(coords)?, mean));
            }
            let mut dim = self.dim;
            loop {
                if dim == 0 {
                    return Ok(best);
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

    /// Tear down into the final design with its aggregated data.
    pub fn into_design(self) -> Result<(TruncatedSparseGrid, Vec<f64>, Vec<u64>)> {
        let base = self.cands[..self.n_base].to_vec();
        let augment: Vec<GridPoint> = self
            .aug_cands
            .iter()
            .map(|&c| self.cands[c].clone())
            .collect();
        let design = TruncatedSparseGrid::new(self.dim, self.tau, base, augment)?;
        Ok((design, self.y_bar, self.mult))
    }

    /// The frozen first-stage prediction at an arbitrary point.
    #[cfg(test)]
    pub fn prior_at(&self, x: &[f64]) -> f64 {
        self.cands[..self.n_base]
            .iter()
            .zip(&self.alpha)
            .map(|(p, &a)| self.kernel.eval(p.coords(), x) * a)
            .sum()
    }
}

fn sparse_dot(v: &SparseVec, dense: &[f64]) -> f64 {
    v.iter().map(|&(i, val)| val * dense[i]).sum()
}

fn sparse_quadratic(v: &SparseVec, h: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for &(i, vi) in v {
        for &(j, vj) in v {
            acc += vi * vj * h[(i, j)];
        }
    }
    acc
}
