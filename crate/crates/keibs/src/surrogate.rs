//! Surrogates over truncated sparse grid designs: kernel ridge regression,
//! kernel interpolation, the posterior mean/scale proxies used by the
//! sequential sampler, and the kernel-induced hierarchical basis that serves
//! as an independent oracle for the grid interpolants.
//!
//! Repeated samples at one design point are stored as an averaged response
//! with a multiplicity, which is algebraically identical to stacking the
//! rows and keeps the design a set of distinct points — the structure the
//! sparse inverse algorithms require. Noise then enters every solve through
//! the per-point diagonal `sigma^2 / m_i` (scaled by `delta^-2` on the
//! posterior path, `n lambda` on the ridge path).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fastinv::{inv_tsg, regularized_solve, DiagonalNoise, SparsePrecision};
use crate::grid::{GridPoint, LevelMultiIndex, TruncatedSparseGrid};
use crate::kernel::TensorMarkovKernel;

/// Slack below zero tolerated for the variance proxy before the state is
/// declared numerically broken.
pub const VARIANCE_SLACK: f64 = 1e-12;

// ---------------------------------------------------------------------------
// hierarchical basis
// ---------------------------------------------------------------------------

/// Per-dimension data of a kernel-induced hat function: the three
/// breakpoints `c_{l,i-1}, c_{l,i}, c_{l,i+1}` and the factor values at the
/// outer two, with the boundary convention `(p,q) = (0,1)` below the domain
/// and `(1,0)` above it.
#[derive(Debug, Clone)]
struct HatDim {
    c_lo: f64,
    c_mid: f64,
    c_hi: f64,
    p_lo: f64,
    q_lo: f64,
    p_hi: f64,
    q_hi: f64,
    denom_left: f64,
    denom_right: f64,
}

/// A tensor-product hierarchical basis function centered at a dyadic point.
/// Value 1 at its center, 0 at every other dyadic point of level up to its
/// own, supported on the open box of its dyadic neighbors.
#[derive(Debug, Clone)]
pub struct HierBasisFn {
    level_index: LevelMultiIndex,
    position_index: Vec<u64>,
    dims: Vec<HatDim>,
}

impl HierBasisFn {
    /// Basis function for center `c_{l,i}`; positions may be any index of
    /// the level-`l` grid, odd or even.
    pub fn new(kernel: &TensorMarkovKernel, l: &LevelMultiIndex, positions: &[u64]) -> Result<Self> {
        if kernel.dim() != l.dim() || positions.len() != l.dim() {
            return Err(Error::invalid("dimension mismatch"));
        }
        let mut dims = Vec::with_capacity(l.dim());
        for (j, (&level, &i)) in l.levels().iter().zip(positions).enumerate() {
            if i == 0 || i >= (1u64 << level) {
                return Err(Error::invalid(format!(
                    "position {i} out of range for level {level} in dimension {j}"
                )));
            }
            let factor = kernel.factor(j);
            let step = (2.0f64).powi(-(level as i32));
            let c_mid = i as f64 * step;
            let c_lo = (i - 1) as f64 * step;
            let c_hi = (i + 1) as f64 * step;
            let (p_lo, q_lo) = if i == 1 {
                (0.0, 1.0)
            } else {
                (factor.p(c_lo), factor.q(c_lo))
            };
            let (p_hi, q_hi) = if i + 1 == (1u64 << level) {
                (1.0, 0.0)
            } else {
                (factor.p(c_hi), factor.q(c_hi))
            };
            let (p_m, q_m) = (factor.p(c_mid), factor.q(c_mid));
            let denom_left = p_m * q_lo - p_lo * q_m;
            let denom_right = p_hi * q_m - p_m * q_hi;
            if denom_left == 0.0 || denom_right == 0.0 {
                return Err(Error::Singular {
                    index: j,
                    message: "degenerate hat denominators".into(),
                });
            }
            dims.push(HatDim {
                c_lo,
                c_mid,
                c_hi,
                p_lo,
                q_lo,
                p_hi,
                q_hi,
                denom_left,
                denom_right,
            });
        }
        Ok(HierBasisFn {
            level_index: l.clone(),
            position_index: positions.to_vec(),
            dims,
        })
    }

    pub fn level_index(&self) -> &LevelMultiIndex {
        &self.level_index
    }

    pub fn position_index(&self) -> &[u64] {
        &self.position_index
    }

    /// Center of the support, where the function equals 1.
    pub fn center(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.c_mid).collect()
    }

    fn eval_dim(&self, kernel: &TensorMarkovKernel, j: usize, x: f64) -> f64 {
        let d = &self.dims[j];
        if x <= d.c_lo || x >= d.c_hi {
            return 0.0;
        }
        let factor = kernel.factor(j);
        let (px, qx) = (factor.p(x), factor.q(x));
        if x <= d.c_mid {
            (px * d.q_lo - d.p_lo * qx) / d.denom_left
        } else {
            (d.p_hi * qx - px * d.q_hi) / d.denom_right
        }
    }
}

/// Evaluate a hierarchical basis function at a point.
pub fn hier_basis_eval(kernel: &TensorMarkovKernel, f: &HierBasisFn, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), f.dims.len());
    let mut prod = 1.0;
    for (j, &xj) in x.iter().enumerate() {
        prod *= f.eval_dim(kernel, j, xj);
        if prod == 0.0 {
            return 0.0;
        }
    }
    prod
}

/// Full-grid interpolant in hierarchical form: the sum of `f(c_{l,i})
/// phi_{l,i}(x)` over the whole anisotropic grid. Coincides with kernel
/// interpolation on that grid.
pub fn hier_expansion(
    kernel: &TensorMarkovKernel,
    l: &LevelMultiIndex,
    values: &[f64],
    x: &[f64],
) -> Result<f64> {
    let d = l.dim();
    if x.len() != d || kernel.dim() != d {
        return Err(Error::invalid("dimension mismatch"));
    }
    let sizes: Vec<u64> = l.levels().iter().map(|&lj| (1u64 << lj) - 1).collect();
    let total: u64 = sizes.iter().product();
    if values.len() as u64 != total {
        return Err(Error::invalid(format!(
            "expected {total} grid values, got {}",
            values.len()
        )));
    }
    // per dimension, at most two hats are nonzero at x
    let mut active: Vec<Vec<(u64, f64)>> = Vec::with_capacity(d);
    for (j, &level) in l.levels().iter().enumerate() {
        let step = (2.0f64).powi(-(level as i32));
        let cell = (x[j] / step).floor() as i64;
        let mut per_dim = Vec::with_capacity(2);
        for i in [cell, cell + 1] {
            if i < 1 || i as u64 > sizes[j] {
                continue;
            }
            let hat = single_hat(kernel, j, level, i as u64)?;
            let v = hat_eval(kernel, j, &hat, x[j]);
            if v != 0.0 {
                per_dim.push((i as u64 - 1, v)); // zero-based grid index
            }
        }
        active.push(per_dim);
    }
    if active.iter().any(|a| a.is_empty()) {
        return Ok(0.0);
    }
    // strides of the row-major (last dimension fastest) value layout
    let mut stride = vec![1u64; d];
    for j in (0..d.saturating_sub(1)).rev() {
        stride[j] = stride[j + 1] * sizes[j + 1];
    }
    let mut acc = 0.0;
    let mut cursor = vec![0usize; d];
    loop {
        let mut idx = 0u64;
        let mut w = 1.0;
        for j in 0..d {
            let (i, v) = active[j][cursor[j]];
            idx += i * stride[j];
            w *= v;
        }
        acc += w * values[idx as usize];
        let mut dim = d;
        loop {
            if dim == 0 {
                return Ok(acc);
            }
            dim -= 1;
            cursor[dim] += 1;
            if cursor[dim] < active[dim].len() {
                break;
            }
            cursor[dim] = 0;
        }
    }
}

fn single_hat(kernel: &TensorMarkovKernel, j: usize, level: u32, i: u64) -> Result<HatDim> {
    let factor = kernel.factor(j);
    let step = (2.0f64).powi(-(level as i32));
    let c_mid = i as f64 * step;
    let c_lo = (i - 1) as f64 * step;
    let c_hi = (i + 1) as f64 * step;
    let (p_lo, q_lo) = if i == 1 { (0.0, 1.0) } else { (factor.p(c_lo), factor.q(c_lo)) };
    let (p_hi, q_hi) = if i + 1 == (1u64 << level) {
        (1.0, 0.0)
    } else {
        (factor.p(c_hi), factor.q(c_hi))
    };
    let (p_m, q_m) = (factor.p(c_mid), factor.q(c_mid));
    Ok(HatDim {
        c_lo,
        c_mid,
        c_hi,
        p_lo,
        q_lo,
        p_hi,
        q_hi,
        denom_left: p_m * q_lo - p_lo * q_m,
        denom_right: p_hi * q_m - p_m * q_hi,
    })
}

fn hat_eval(kernel: &TensorMarkovKernel, j: usize, d: &HatDim, x: f64) -> f64 {
    if x <= d.c_lo || x >= d.c_hi {
        return 0.0;
    }
    let factor = kernel.factor(j);
    let (px, qx) = (factor.p(x), factor.q(x));
    if x <= d.c_mid {
        (px * d.q_lo - d.p_lo * qx) / d.denom_left
    } else {
        (d.p_hi * qx - px * d.q_hi) / d.denom_right
    }
}

// ---------------------------------------------------------------------------
// kernel interpolation (dense oracle path)
// ---------------------------------------------------------------------------

/// Kernel interpolation `k_n^T(x) K_n^-1 y_n` through a dense solve. This is
/// the small-scale oracle; large designs go through the sparse state below.
pub fn ki_predict(
    kernel: &TensorMarkovKernel,
    points: &[GridPoint],
    values: &[f64],
    x: &[f64],
) -> Result<f64> {
    if points.is_empty() || points.len() != values.len() {
        return Err(Error::invalid("points and values must be nonempty and aligned"));
    }
    let km = crate::kernel::kernel_matrix(kernel, points)?;
    let y = DVector::from_row_slice(values);
    let alpha = km
        .lu()
        .solve(&y)
        .ok_or_else(|| Error::Numerical("singular kernel matrix in kernel interpolation".into()))?;
    Ok(points
        .iter()
        .zip(alpha.iter())
        .map(|(p, &a)| kernel.eval(p.coords(), x) * a)
        .sum())
}

// ---------------------------------------------------------------------------
// surrogate state
// ---------------------------------------------------------------------------

/// A fitted surrogate: the design with sample multiplicities and averaged
/// responses, the cached sparse inverse for the current design, the frozen
/// ridge predictor, and the active `(lambda, sigma, delta)` configuration.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    kernel: TensorMarkovKernel,
    design: TruncatedSparseGrid,
    multiplicities: Vec<u64>,
    y_bar: Vec<f64>,
    kinv: SparsePrecision,
    sigma: f64,
    lambda: f64,
    delta: f64,
    /// Ridge weights of the frozen mean predictor, aligned with the design
    /// at fit time.
    prior_points: Vec<GridPoint>,
    prior_alpha: Vec<f64>,
}

impl SurrogateState {
    /// Fit kernel ridge regression on a design with one response per point.
    /// `lambda = 0` is exact interpolation.
    pub fn krr_fit(
        kernel: TensorMarkovKernel,
        design: TruncatedSparseGrid,
        responses: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        if responses.len() != design.len() {
            return Err(Error::invalid(format!(
                "expected {} responses, got {}",
                design.len(),
                responses.len()
            )));
        }
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if kernel.dim() != design.dim() {
            return Err(Error::invalid("kernel dimension mismatch"));
        }
        let kinv = inv_tsg(&kernel, &design)?;
        let n = design.len();
        let alpha = if lambda == 0.0 {
            kinv.matvec(responses)
        } else {
            let noise = DiagonalNoise::constant(n, n as f64 * lambda)?;
            regularized_solve(&kinv, &noise, responses)?
        };
        Ok(SurrogateState {
            prior_points: design.points().cloned().collect(),
            prior_alpha: alpha,
            kernel,
            design,
            multiplicities: vec![1; n],
            y_bar: responses.to_vec(),
            kinv,
            sigma: 0.0,
            lambda,
            delta: 1.0,
        })
    }

    /// Set the noise proxy and exploration scale for the posterior path.
    pub fn with_noise(mut self, sigma: f64, delta: f64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and >= 0"));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta must be finite and > 0"));
        }
        self.sigma = sigma;
        self.delta = delta;
        Ok(self)
    }

    pub fn set_delta(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("delta must be finite and > 0"));
        }
        self.delta = delta;
        Ok(())
    }

    pub fn kernel(&self) -> &TensorMarkovKernel {
        &self.kernel
    }

    pub fn design(&self) -> &TruncatedSparseGrid {
        &self.design
    }

    pub fn multiplicities(&self) -> &[u64] {
        &self.multiplicities
    }

    pub fn y_bar(&self) -> &[f64] {
        &self.y_bar
    }

    pub fn kinv(&self) -> &SparsePrecision {
        &self.kinv
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The frozen ridge prediction `f_hat(x)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.prior_points
            .iter()
            .zip(&self.prior_alpha)
            .map(|(p, &a)| self.kernel.eval(p.coords(), x) * a)
            .sum()
    }

    /// Record one more sample. A revisit of an existing design point updates
    /// its running mean; a new point must belong to the design's next-level
    /// increment and triggers a sparse inverse rebuild.
    pub fn add_observation(&mut self, point: GridPoint, y: f64) -> Result<()> {
        let existing = self.design.points().position(|p| p == &point);
        match existing {
            Some(i) => {
                if self.sigma == 0.0 {
                    return Err(Error::invalid(
                        "repeated design points require a positive noise proxy",
                    ));
                }
                self.multiplicities[i] += 1;
                let m = self.multiplicities[i] as f64;
                self.y_bar[i] += (y - self.y_bar[i]) / m;
            }
            None => {
                let mut augment = self.design.augment().to_vec();
                augment.push(point);
                let design = TruncatedSparseGrid::new(
                    self.design.dim(),
                    self.design.base_level(),
                    self.design.base().to_vec(),
                    augment,
                )?;
                self.kinv = inv_tsg(&self.kernel, &design)?;
                self.design = design;
                self.multiplicities.push(1);
                self.y_bar.push(y);
            }
        }
        Ok(())
    }

    fn kvec(&self, x: &[f64]) -> Vec<f64> {
        self.design
            .points()
            .map(|p| self.kernel.eval(p.coords(), x))
            .collect()
    }

    fn residuals(&self) -> Vec<f64> {
        self.design
            .points()
            .zip(&self.y_bar)
            .map(|(p, &y)| y - self.predict(p.coords()))
            .collect()
    }

    fn posterior_noise(&self) -> Result<DiagonalNoise> {
        let c = self.sigma * self.sigma / (self.delta * self.delta);
        DiagonalNoise::new(
            self.multiplicities
                .iter()
                .map(|&m| c / m as f64)
                .collect(),
        )
    }

    fn check_interpolation_path(&self) -> Result<()> {
        if self.multiplicities.iter().any(|&m| m > 1) {
            return Err(Error::invalid(
                "noise-free posterior requires distinct design points (all multiplicities 1)",
            ));
        }
        Ok(())
    }
}

/// Posterior mean proxy
/// `f_tilde(x) = f_hat(x) + delta^2 k^T(x) (delta^2 K + sigma^2 I)^-1 (y - f_hat)`.
///
/// The solve is expressed on the precision side of the Woodbury identity,
/// `(K + S)^-1 = K^-1 - K^-1 (K^-1 + S^-1)^-1 K^-1`, so the correction is
/// `w . r - w^T G^-1 (K^-1 r)` with the sparse `w = K^-1 k(x)`.
pub fn posterior_mean(state: &SurrogateState, x: &[f64]) -> Result<f64> {
    let kx = state.kvec(x);
    let r = state.residuals();
    let w = state.kinv.matvec(&kx);
    let corr = if state.sigma == 0.0 {
        state.check_interpolation_path()?;
        dot(&w, &r)
    } else {
        let noise = state.posterior_noise()?;
        let sigma_inv: Vec<f64> = noise.diag().iter().map(|&s| 1.0 / s).collect();
        let g = crate::fastinv::solve_inner_matrix(&state.kinv, &sigma_inv);
        let gamma = state.kinv.matvec(&r);
        let z = crate::fastinv::solve_pcg(&g, &gamma)?;
        dot(&w, &r) - dot(&w, &z)
    };
    Ok(state.predict(x) + corr)
}

/// Posterior scale proxy
/// `s^2(x) = delta^2 k(x,x) - delta^4 k^T(x) (delta^2 K + sigma^2 I)^-1 k(x)`,
/// clamped to zero within [`VARIANCE_SLACK`] of it.
///
/// Written as the sum of the noise-free conditional variance and the
/// positive-definite form `w^T (K^-1 + S^-1)^-1 w`, both of which stay
/// nonnegative in floating arithmetic, so the clamp slack is reachable even
/// as `sigma` tends to zero.
pub fn posterior_sd(state: &SurrogateState, x: &[f64]) -> Result<f64> {
    let kx = state.kvec(x);
    let w = state.kinv.matvec(&kx);
    let noise_free = state.kernel.eval(x, x) - dot(&kx, &w);
    let s2_over_d2 = if state.sigma == 0.0 {
        state.check_interpolation_path()?;
        noise_free
    } else {
        let noise = state.posterior_noise()?;
        let sigma_inv: Vec<f64> = noise.diag().iter().map(|&s| 1.0 / s).collect();
        let g = crate::fastinv::solve_inner_matrix(&state.kinv, &sigma_inv);
        let z = crate::fastinv::solve_pcg(&g, &w)?;
        noise_free + dot(&w, &z)
    };
    let s2 = state.delta * state.delta * s2_over_d2;
    if s2 < -VARIANCE_SLACK {
        return Err(Error::Numerical(format!(
            "variance proxy {s2} fell below the cancellation slack"
        )));
    }
    Ok(s2.max(0.0).sqrt())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Dense evaluation of the posterior proxies with stacked (unaggregated)
/// observations; the oracle the sparse path is tested against.
pub fn posterior_dense_oracle(
    kernel: &TensorMarkovKernel,
    points: &[GridPoint],
    values: &[f64],
    prior: &dyn Fn(&[f64]) -> f64,
    sigma: f64,
    delta: f64,
    x: &[f64],
) -> Result<(f64, f64)> {
    let n = points.len();
    if values.len() != n {
        return Err(Error::invalid("points and values must align"));
    }
    let km = crate::kernel::kernel_matrix(kernel, points)?;
    let d2 = delta * delta;
    let mut a = &km * d2;
    for i in 0..n {
        a[(i, i)] += sigma * sigma;
    }
    let lu = a.lu();
    let resid = DVector::from_iterator(n, points.iter().zip(values).map(|(p, &y)| y - prior(p.coords())));
    let beta = lu
        .solve(&resid)
        .ok_or_else(|| Error::Numerical("singular dense posterior system".into()))?;
    let kx = DVector::from_iterator(n, points.iter().map(|p| kernel.eval(p.coords(), x)));
    let mean = prior(x) + d2 * kx.dot(&beta);
    let u = lu
        .solve(&kx)
        .ok_or_else(|| Error::Numerical("singular dense posterior system".into()))?;
    let s2 = d2 * kernel.eval(x, x) - d2 * d2 * kx.dot(&u);
    Ok((mean, s2.max(0.0).sqrt()))
}

/// Dense KRR weights for stacked data, the oracle for `krr_fit`.
pub fn krr_dense_oracle(
    kernel: &TensorMarkovKernel,
    points: &[GridPoint],
    values: &[f64],
    lambda: f64,
    x: &[f64],
) -> Result<f64> {
    let n = points.len();
    let km = crate::kernel::kernel_matrix(kernel, points)?;
    let reg = km + DMatrix::identity(n, n) * (n as f64 * lambda);
    let alpha = reg
        .lu()
        .solve(&DVector::from_row_slice(values))
        .ok_or_else(|| Error::Numerical("singular dense ridge system".into()))?;
    Ok(points
        .iter()
        .zip(alpha.iter())
        .map(|(p, &a)| kernel.eval(p.coords(), x) * a)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{canonical_tsg, classical_sg, full_grid_points};
    use crate::kernel::bf_kernel_unit;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn test_values(points: &[GridPoint]) -> Vec<f64> {
        points
            .iter()
            .map(|p| {
                p.coords()
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| (1.3 + j as f64) * x + (x * 2.7).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn hat_center_and_endpoint() {
        let k = bf_kernel_unit(1);
        let l = LevelMultiIndex::new(vec![2]).unwrap();
        let f = HierBasisFn::new(&k, &l, &[1]).unwrap();
        assert_relative_eq!(hier_basis_eval(&k, &f, &[0.25]), 1.0);
        assert_eq!(hier_basis_eval(&k, &f, &[0.5]), 0.0);
        // boundary convention on the left branch: p(x)/p(c)
        assert_relative_eq!(hier_basis_eval(&k, &f, &[0.125]), 1.125 / 1.25, max_relative = 1e-14);
    }

    #[test]
    fn hats_vanish_at_coarser_points() {
        let k = bf_kernel_unit(1);
        let l = LevelMultiIndex::new(vec![3]).unwrap();
        let f = HierBasisFn::new(&k, &l, &[5]).unwrap();
        for x in [0.25, 0.5, 0.75, 0.125] {
            assert_eq!(hier_basis_eval(&k, &f, &[x]), 0.0, "x={x}");
        }
        assert_relative_eq!(hier_basis_eval(&k, &f, &[0.625]), 1.0);
    }

    #[test]
    fn expansion_matches_ki_one_dim() {
        let k = bf_kernel_unit(1);
        let l = LevelMultiIndex::new(vec![2]).unwrap();
        let points = full_grid_points(&l);
        let values = test_values(&points);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = [rng.gen::<f64>()];
            let a = hier_expansion(&k, &l, &values, &x).unwrap();
            let b = ki_predict(&k, &points, &values, &x).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn expansion_matches_ki_two_dim() {
        let k = bf_kernel_unit(2);
        let l = LevelMultiIndex::new(vec![2, 2]).unwrap();
        let points = full_grid_points(&l);
        let values = test_values(&points);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let a = hier_expansion(&k, &l, &values, &x).unwrap();
            let b = ki_predict(&k, &points, &values, &x).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_point_expansion() {
        let k = bf_kernel_unit(2);
        let l = LevelMultiIndex::new(vec![1, 1]).unwrap();
        let v = hier_expansion(&k, &l, &[2.5], &[0.3, 0.8]).unwrap();
        let f = HierBasisFn::new(&k, &l, &[1, 1]).unwrap();
        assert_relative_eq!(v, 2.5 * hier_basis_eval(&k, &f, &[0.3, 0.8]), epsilon = 1e-14);
    }

    #[test]
    fn combination_identity() {
        // the sparse grid interpolant equals the signed-binomial combination
        // of full-grid interpolants
        for (d, tau) in [(2usize, 3u32), (3, 3)] {
            let k = bf_kernel_unit(d);
            let points = classical_sg(d, tau).unwrap();
            let values = test_values(&points);
            let terms = crate::fastinv::combination_terms(d, tau).unwrap();
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                let sg = ki_predict(&k, &points, &values, &x).unwrap();
                let mut combo = 0.0;
                for (l, coeff) in &terms {
                    let fg_points = full_grid_points(l);
                    let fg_values: Vec<f64> = test_values(&fg_points);
                    combo += *coeff as f64 * hier_expansion(&k, l, &fg_values, &x).unwrap();
                }
                assert_relative_eq!(sg, combo, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn krr_interpolates_at_lambda_zero() {
        let k = bf_kernel_unit(2);
        let design = canonical_tsg(2, 8).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let state = SurrogateState::krr_fit(k, design, &values, 0.0).unwrap();
        for (p, &v) in points.iter().zip(&values) {
            assert_relative_eq!(state.predict(p.coords()), v, epsilon = 1e-10);
        }
    }

    #[test]
    fn krr_scalar_example() {
        let k = bf_kernel_unit(1);
        let design = canonical_tsg(1, 1).unwrap();
        let state = SurrogateState::krr_fit(k, design, &[2.0], 0.5).unwrap();
        assert_relative_eq!(state.predict(&[0.5]), 1.5 * 2.0 / (1.5 + 0.5), epsilon = 1e-12);
    }

    #[test]
    fn krr_shrinks_to_zero() {
        let k = bf_kernel_unit(2);
        let design = canonical_tsg(2, 5).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let y_max = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let state = SurrogateState::krr_fit(k, design, &values, 1e8).unwrap();
        for p in &points {
            assert!(state.predict(p.coords()).abs() <= 1e-5 * y_max * 4.0);
        }
    }

    #[test]
    fn krr_matches_dense_oracle() {
        let k = bf_kernel_unit(2);
        let design = canonical_tsg(2, 12).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let state = SurrogateState::krr_fit(k.clone(), design, &values, 0.3).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let dense = krr_dense_oracle(&k, &points, &values, 0.3, &x).unwrap();
            assert_relative_eq!(state.predict(&x), dense, epsilon = 1e-8);
        }
    }

    #[test]
    fn ki_reproduces_kernel_span() {
        // representer exactness: any g in the span of k(x_i, .) is
        // reproduced everywhere, not just at the nodes
        let k = bf_kernel_unit(1);
        let points: Vec<GridPoint> = canonical_tsg(1, 7).unwrap().points().cloned().collect();
        let coef = [0.5, -1.0, 2.0, 0.3, -0.7, 1.1, 0.9];
        let g = |x: &[f64]| -> f64 {
            points
                .iter()
                .zip(&coef)
                .map(|(p, &c)| c * k.eval(p.coords(), x))
                .sum()
        };
        let values: Vec<f64> = points.iter().map(|p| g(p.coords())).collect();
        for x in [[0.11], [0.33], [0.77], [0.99]] {
            assert_relative_eq!(ki_predict(&k, &points, &values, &x).unwrap(), g(&x), epsilon = 1e-9);
        }
    }

    #[test]
    fn posterior_scalar_example() {
        let k = bf_kernel_unit(1);
        let design = canonical_tsg(1, 1).unwrap();
        let state = SurrogateState::krr_fit(k, design, &[2.0], 0.0)
            .unwrap()
            .with_noise(1.0, 1.0)
            .unwrap();
        let s = posterior_sd(&state, &[0.5]).unwrap();
        assert_relative_eq!(s * s, 1.5 - 1.5 * 1.5 / (1.5 + 1.0), epsilon = 1e-10);
    }

    #[test]
    fn posterior_sd_vanishes_as_noise_fades() {
        let k = bf_kernel_unit(1);
        let design = canonical_tsg(1, 3).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let state = SurrogateState::krr_fit(k, design, &values, 0.0)
            .unwrap()
            .with_noise(1e-6, 1.0)
            .unwrap();
        for p in &points {
            assert!(posterior_sd(&state, p.coords()).unwrap() <= 1e-3);
        }
    }

    #[test]
    fn zero_residual_means_prior() {
        // lambda = 0 makes the ridge interpolate, so residuals vanish and
        // the posterior mean equals the prior everywhere
        let k = bf_kernel_unit(2);
        let design = canonical_tsg(2, 6).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let state = SurrogateState::krr_fit(k, design, &values, 0.0)
            .unwrap()
            .with_noise(0.5, 0.8)
            .unwrap();
        for x in [[0.3, 0.6], [0.55, 0.21]] {
            assert_relative_eq!(
                posterior_mean(&state, &x).unwrap(),
                state.predict(&x),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn posterior_matches_dense_oracle() {
        let k = bf_kernel_unit(2);
        let design = canonical_tsg(2, 9).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let state = SurrogateState::krr_fit(k.clone(), design, &values, 0.2)
            .unwrap()
            .with_noise(0.7, 0.9)
            .unwrap();
        let prior = |x: &[f64]| state.predict(x);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(6);
        for _ in 0..20 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let (m_dense, s_dense) =
                posterior_dense_oracle(&k, &points, &values, &prior, 0.7, 0.9, &x).unwrap();
            assert_relative_eq!(posterior_mean(&state, &x).unwrap(), m_dense, epsilon = 1e-8);
            assert_relative_eq!(posterior_sd(&state, &x).unwrap(), s_dense, epsilon = 1e-8);
        }
    }

    #[test]
    fn duplicate_aggregation_equivalence() {
        // stacking r identical rows equals multiplicity r with the mean kept
        let k = bf_kernel_unit(1);
        let design = canonical_tsg(1, 3).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = vec![1.0, -0.5, 2.0];
        let mut state = SurrogateState::krr_fit(k.clone(), design, &values, 0.0)
            .unwrap()
            .with_noise(0.6, 1.2)
            .unwrap();
        // two revisits of point 1 with different samples
        state.add_observation(points[1].clone(), 0.1).unwrap();
        state.add_observation(points[1].clone(), -0.3).unwrap();

        // dense stacked equivalent
        let mut stacked_points = points.clone();
        stacked_points.push(points[1].clone());
        stacked_points.push(points[1].clone());
        let stacked_values = vec![1.0, -0.5, 2.0, 0.1, -0.3];
        let prior = |x: &[f64]| state.predict(x);
        for x in [[0.21], [0.48], [0.83]] {
            let (m_dense, s_dense) = posterior_dense_oracle(
                &k,
                &stacked_points,
                &stacked_values,
                &prior,
                0.6,
                1.2,
                &x,
            )
            .unwrap();
            assert_relative_eq!(posterior_mean(&state, &x).unwrap(), m_dense, epsilon = 1e-8);
            assert_relative_eq!(posterior_sd(&state, &x).unwrap(), s_dense, epsilon = 1e-8);
        }
    }

    #[test]
    fn sd_invariant_to_response_shift() {
        let k = bf_kernel_unit(2);
        let design = canonical_tsg(2, 7).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let values = test_values(&points);
        let shifted: Vec<f64> = values.iter().map(|v| v + 42.0).collect();
        let a = SurrogateState::krr_fit(k.clone(), design.clone(), &values, 0.0)
            .unwrap()
            .with_noise(0.4, 1.0)
            .unwrap();
        let b = SurrogateState::krr_fit(k, design, &shifted, 0.0)
            .unwrap()
            .with_noise(0.4, 1.0)
            .unwrap();
        for x in [[0.3, 0.6], [0.7, 0.15]] {
            assert_relative_eq!(
                posterior_sd(&a, &x).unwrap(),
                posterior_sd(&b, &x).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let k = bf_kernel_unit(1);
        let design = canonical_tsg(1, 3).unwrap();
        assert!(SurrogateState::krr_fit(k, design, &[1.0], 0.0).is_err());
    }

    #[test]
    fn sigma_zero_with_revisit_rejected() {
        let k = bf_kernel_unit(1);
        let design = canonical_tsg(1, 3).unwrap();
        let points: Vec<GridPoint> = design.points().cloned().collect();
        let mut state = SurrogateState::krr_fit(k, design, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!(state.add_observation(points[0].clone(), 1.5).is_err());
    }
}
