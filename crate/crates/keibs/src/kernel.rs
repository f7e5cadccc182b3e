//! Tensor Markov kernels: products of one-dimensional factors
//! `k_j(x, x') = p_j(min) * q_j(max)` with `p_j/q_j` strictly increasing.
//!
//! Two specializations are provided. The Brownian-field kernel has factors
//! `theta_j + gamma_j * min(x, x')`, realized with `p_j(x) = theta_j +
//! gamma_j x` and `q_j = 1`. The Laplace kernel `exp(-sum theta_j |x_j -
//! x'_j|)` is realized with `p_j(x) = e^{theta_j x}` and `q_j(x) =
//! e^{-theta_j x}`.
//!
//! Factors expose `p` and `q` directly because the sparse inverse formulas
//! consume those values rather than kernel evaluations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridPoint;

/// Parameters of the Brownian-field kernel `prod_j [theta_j + gamma_j (x_j ^ x_j')]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianFieldParams {
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl BrownianFieldParams {
    pub fn new(theta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.len() != gamma.len() {
            return Err(Error::invalid(
                "theta and gamma must be nonempty and of equal length",
            ));
        }
        if theta.iter().chain(gamma.iter()).any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::invalid(
                "Brownian-field parameters must be strictly positive",
            ));
        }
        Ok(BrownianFieldParams { theta, gamma })
    }

    /// The default used throughout the benchmarks: `theta_j = gamma_j = 1`.
    pub fn unit(d: usize) -> Self {
        BrownianFieldParams {
            theta: vec![1.0; d],
            gamma: vec![1.0; d],
        }
    }
}

/// One-dimensional factor of a tensor Markov kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    /// `p(x) = theta + gamma x`, `q(x) = 1` on `(-theta/gamma, inf)`.
    BrownianField { theta: f64, gamma: f64 },
    /// `p(x) = e^{theta x}`, `q(x) = e^{-theta x}` on the whole line.
    Laplace { theta: f64 },
}

impl Factor {
    pub fn p(&self, x: f64) -> f64 {
        match *self {
            Factor::BrownianField { theta, gamma } => theta + gamma * x,
            Factor::Laplace { theta } => (theta * x).exp(),
        }
    }

    pub fn q(&self, x: f64) -> f64 {
        match *self {
            Factor::BrownianField { .. } => 1.0,
            Factor::Laplace { theta } => (-theta * x).exp(),
        }
    }

    /// Open interval on which the factor is defined and positive.
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            Factor::BrownianField { theta, gamma } => (-theta / gamma, f64::INFINITY),
            Factor::Laplace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (a, b) = self.domain();
        x > a && x < b
    }

    /// `k(x, x') = p(min) q(max)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        self.p(lo) * self.q(hi)
    }
}

/// A tensor Markov kernel on a box containing the open unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMarkovKernel {
    factors: Vec<Factor>,
}

const PROBE_POINTS: usize = 1024;

impl TensorMarkovKernel {
    /// Assemble a kernel from per-dimension factors, checking positivity of
    /// `p, q` and strict monotonicity of `p/q` on a probe lattice over (0,1).
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("kernel must have dimension >= 1"));
        }
        for (j, f) in factors.iter().enumerate() {
            let mut prev_ratio = f64::NEG_INFINITY;
            for i in 0..=PROBE_POINTS {
                let x = i as f64 / PROBE_POINTS as f64;
                let (p, q) = (f.p(x), f.q(x));
                if !(p > 0.0) || !(q > 0.0) || !p.is_finite() || !q.is_finite() {
                    return Err(Error::invalid(format!(
                        "factor {j}: p and q must be positive and finite on [0,1], p({x})={p}, q({x})={q}"
                    )));
                }
                let ratio = p / q;
                if ratio <= prev_ratio {
                    return Err(Error::invalid(format!(
                        "factor {j}: p/q must be strictly increasing, violated near x={x}"
                    )));
                }
                prev_ratio = ratio;
            }
        }
        Ok(TensorMarkovKernel { factors })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, j: usize) -> &Factor {
        &self.factors[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.factors).all(|(&xi, f)| f.contains(xi))
    }

    /// Kernel evaluation `prod_j p_j(min) q_j(max)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        self.factors
            .iter()
            .zip(x.iter().zip(y.iter()))
            .map(|(f, (&a, &b))| f.eval(a, b))
            .product()
    }

    pub fn eval_points(&self, x: &GridPoint, y: &GridPoint) -> f64 {
        self.eval(x.coords(), y.coords())
    }
}

/// Brownian-field kernel with the given parameters.
pub fn bf_kernel(params: &BrownianFieldParams) -> Result<TensorMarkovKernel> {
    let factors = params
        .theta
        .iter()
        .zip(&params.gamma)
        .map(|(&theta, &gamma)| Factor::BrownianField { theta, gamma })
        .collect();
    TensorMarkovKernel::new(factors)
}

/// Brownian-field kernel with `theta_j = gamma_j = 1`, the benchmark default.
pub fn bf_kernel_unit(d: usize) -> TensorMarkovKernel {
    bf_kernel(&BrownianFieldParams::unit(d)).expect("unit parameters are valid")
}

/// Laplace kernel `exp(-sum_j theta_j |x_j - x_j'|)`.
pub fn laplace_kernel(theta: &[f64]) -> Result<TensorMarkovKernel> {
    if theta.is_empty() {
        return Err(Error::invalid("kernel must have dimension >= 1"));
    }
    if theta.iter().any(|&t| t <= 0.0 || !t.is_finite()) {
        return Err(Error::invalid("Laplace rates must be strictly positive"));
    }
    TensorMarkovKernel::new(theta.iter().map(|&t| Factor::Laplace { theta: t }).collect())
}

/// Dense kernel matrix over an ordered point list. Used as a test oracle and
/// for small dense paths; the fast algorithms never materialize it.
pub fn kernel_matrix(k: &TensorMarkovKernel, points: &[GridPoint]) -> Result<DMatrix<f64>> {
    for (i, p) in points.iter().enumerate() {
        if !k.contains(p.coords()) {
            return Err(Error::Domain(format!(
                "point {i} at {:?} lies outside the kernel domain",
                p.coords()
            )));
        }
    }
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = k.eval_points(&points[i], &points[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn pts(coords: &[&[f64]]) -> Vec<GridPoint> {
        coords
            .iter()
            .map(|c| GridPoint::from_coords(c.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn bf_examples() {
        let k = bf_kernel_unit(1);
        assert_relative_eq!(k.eval(&[0.5], &[0.25]), 1.25);
        let k2 = bf_kernel_unit(2);
        assert_relative_eq!(k2.eval(&[0.5, 0.5], &[0.25, 0.75]), 1.25 * 1.5);
    }

    #[test]
    fn bf_symmetry() {
        let k = bf_kernel_unit(3);
        let x = [0.2, 0.7, 0.4];
        let y = [0.9, 0.1, 0.4];
        assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
    }

    #[test]
    fn bf_rejects_nonpositive_params() {
        assert!(BrownianFieldParams::new(vec![0.0], vec![1.0]).is_err());
        assert!(BrownianFieldParams::new(vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn laplace_examples() {
        let k = laplace_kernel(&[1.0]).unwrap();
        assert_relative_eq!(k.eval(&[0.3], &[0.3]), 1.0);
        assert_relative_eq!(k.eval(&[0.0], &[2f64.ln()]), 0.5, max_relative = 1e-14);
        // factor form: p(x) q(x') = e^{-theta (x' - x)} for x <= x'
        let f = Factor::Laplace { theta: 2.0 };
        assert_relative_eq!(f.p(0.1) * f.q(0.4), (-2.0 * 0.3f64).exp(), max_relative = 1e-14);
        assert!(laplace_kernel(&[0.0]).is_err());
    }

    #[test]
    fn one_dim_bf_is_one_plus_min() {
        let k = bf_kernel_unit(1);
        for &(x, y) in &[(0.1, 0.9), (0.5, 0.5), (0.875, 0.125)] {
            assert_eq!(k.eval(&[x], &[y]), 1.0 + x.min(y));
        }
    }

    #[test]
    fn tensor_identity_random_pairs() {
        let k = bf_kernel(&BrownianFieldParams::new(vec![1.5, 0.7, 2.0], vec![0.4, 1.1, 3.0]).unwrap())
            .unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let direct = k.eval(&x, &y);
            let product: f64 = (0..3).map(|j| k.factor(j).eval(x[j], y[j])).product();
            assert_relative_eq!(direct, product, max_relative = 1e-12);
        }
    }

    #[test]
    fn markov_factor_form() {
        let factors = [Factor::BrownianField { theta: 0.5, gamma: 2.0 }, Factor::Laplace { theta: 1.3 }];
        for f in &factors {
            for &(x, y) in &[(0.25, 0.75), (0.6, 0.2), (0.5, 0.5)] {
                let direct = f.eval(x, y);
                let (lo, hi) = (x.min(y), x.max(y));
                assert_relative_eq!(direct, f.p(lo) * f.q(hi), max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn kernel_matrix_example() {
        let k = bf_kernel_unit(1);
        let points = pts(&[&[0.25], &[0.5], &[0.75]]);
        let m = kernel_matrix(&k, &points).unwrap();
        let expected = [
            [1.25, 1.25, 1.25],
            [1.25, 1.5, 1.5],
            [1.25, 1.5, 1.75],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], expected[i][j]);
            }
        }
    }

    #[test]
    fn kernel_matrix_is_psd() {
        let k = bf_kernel_unit(2);
        let points = crate::grid::classical_sg(2, 3).unwrap();
        let m = kernel_matrix(&k, &points).unwrap();
        let eig = m.symmetric_eigenvalues();
        assert!(eig.iter().all(|&v| v >= -1e-10), "eigenvalues: {eig:?}");
    }

    #[test]
    fn single_point_matrix() {
        let k = bf_kernel_unit(2);
        let points = pts(&[&[0.5, 0.5]]);
        let m = kernel_matrix(&k, &points).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_eq!(m[(0, 0)], k.eval(&[0.5, 0.5], &[0.5, 0.5]));
    }
}
