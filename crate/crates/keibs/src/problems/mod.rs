//! Benchmark objectives and noise models.
//!
//! Every objective lives on a user-space box and is affinely rescaled onto
//! the open unit cube for the sampler. Minimization problems are exposed to
//! the maximizer by negation; reported values stay in the problem's own
//! scale and orientation.

mod assortment;
mod functions;
mod jackson;
mod prodline;

pub use assortment::{assortment, assortment_default, AssortmentParams};
pub use functions::{griewank, rosenbrock, schwefel222};
pub use jackson::{jackson_ct, jackson_default, JacksonParams};
pub use prodline::{production_line, production_line_default, ProductionLineParams, SimStats};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::ObjectiveSampler;

/// Whether the raw objective is to be maximized or minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Known optimum of a benchmark objective, in user space and raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueOptimum {
    pub location: Option<Vec<f64>>,
    pub value: f64,
}

#[derive(Debug, Clone)]
enum ObjectiveKind {
    Griewank,
    Schwefel222,
    Rosenbrock,
    Assortment(AssortmentParams),
    Jackson(JacksonParams),
    ProductionLine(ProductionLineParams),
}

/// A benchmark objective on a user-space box.
#[derive(Debug, Clone)]
pub struct Objective {
    name: String,
    dim: usize,
    bounds: Vec<(f64, f64)>,
    sense: Sense,
    kind: ObjectiveKind,
    /// Offset added to the argument before evaluation; relocates the
    /// optimum without changing the optimal value.
    shift: Vec<f64>,
    true_opt: Option<TrueOptimum>,
}

impl Objective {
    fn new(
        name: impl Into<String>,
        bounds: Vec<(f64, f64)>,
        sense: Sense,
        kind: ObjectiveKind,
        true_opt: Option<TrueOptimum>,
    ) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("objective must have dimension >= 1"));
        }
        if bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::invalid("box bounds must be finite with low < high"));
        }
        let dim = bounds.len();
        Ok(Objective {
            name: name.into(),
            dim,
            bounds,
            sense,
            kind,
            shift: vec![0.0; dim],
            true_opt,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn true_opt(&self) -> Option<&TrueOptimum> {
        self.true_opt.as_ref()
    }

    /// Whether a single evaluation consumes randomness.
    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, ObjectiveKind::ProductionLine(_))
    }

    /// Map a unit-cube point into the user-space box.
    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.bounds)
            .map(|(&zi, &(lo, hi))| lo + zi * (hi - lo))
            .collect()
    }

    /// Map a user-space point onto the unit cube.
    pub fn to_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(&ui, &(lo, hi))| (ui - lo) / (hi - lo))
            .collect()
    }

    /// The raw objective value in the problem's own orientation. One call is
    /// one simulation replication for stochastic objectives.
    pub fn eval_raw(&self, u: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        if u.len() != self.dim {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                self.dim,
                u.len()
            )));
        }
        let arg: Vec<f64> = u.iter().zip(&self.shift).map(|(&a, &s)| a + s).collect();
        match &self.kind {
            ObjectiveKind::Griewank => Ok(functions::griewank_value(&arg)),
            ObjectiveKind::Schwefel222 => Ok(functions::schwefel222_value(&arg)),
            ObjectiveKind::Rosenbrock => Ok(functions::rosenbrock_value(&arg)),
            ObjectiveKind::Assortment(p) => p.value(&arg),
            ObjectiveKind::Jackson(p) => p.value(&arg),
            ObjectiveKind::ProductionLine(p) => p.value(&arg, rng),
        }
    }

    /// Raw value oriented so that larger is better.
    pub fn eval_max(&self, u: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let v = self.eval_raw(u, rng)?;
        Ok(match self.sense {
            Sense::Maximize => v,
            Sense::Minimize => -v,
        })
    }

    /// Relocate the optimum by evaluating at `x + u/sqrt(d)`; the optimal
    /// value is unchanged.
    pub fn shifted(mut self, u: &[f64]) -> Result<Self> {
        if u.len() != self.dim {
            return Err(Error::invalid("shift vector dimension mismatch"));
        }
        let scale = (self.dim as f64).sqrt();
        for (s, &uj) in self.shift.iter_mut().zip(u) {
            *s += uj / scale;
        }
        if let Some(opt) = self.true_opt.as_mut() {
            if let Some(loc) = opt.location.as_mut() {
                for ((l, &uj), &(lo, hi)) in loc.iter_mut().zip(u).zip(&self.bounds) {
                    *l -= uj / scale;
                    if !(*l > lo && *l < hi) {
                        return Err(Error::invalid(
                            "shift moves the optimum outside the design box",
                        ));
                    }
                }
            }
        }
        Ok(self)
    }
}

/// Simulation-noise model added on top of an objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Gaussian with constant variance `sigma^2`.
    GaussianConst { sigma: f64 },
    /// Gaussian with variance `zeta * |f(x)|`.
    GaussianPropAbs { zeta: f64 },
    /// Gaussian with variance `zeta^2 f(x)^2`.
    GaussianPropSq { zeta: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseModel::None => true,
            NoiseModel::GaussianConst { sigma } => sigma >= 0.0 && sigma.is_finite(),
            NoiseModel::GaussianPropAbs { zeta } | NoiseModel::GaussianPropSq { zeta } => {
                zeta >= 0.0 && zeta.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("noise parameters must be finite and >= 0"))
        }
    }

    fn draw(&self, f: f64, rng: &mut dyn RngCore) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::GaussianConst { sigma } => sigma * standard_normal(rng),
            NoiseModel::GaussianPropAbs { zeta } => {
                (zeta * f.abs()).sqrt() * standard_normal(rng)
            }
            NoiseModel::GaussianPropSq { zeta } => zeta * f.abs() * standard_normal(rng),
        }
    }
}

/// One noisy observation `y(x) = f(x) + eps(x)` in the raw scale.
pub fn observe(
    objective: &Objective,
    noise: &NoiseModel,
    u: &[f64],
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let f = objective.eval_raw(u, rng)?;
    Ok(f + noise.draw(f, rng))
}

/// An objective paired with its noise model; the sampler's view of a
/// benchmark problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub objective: Objective,
    pub noise: NoiseModel,
}

impl Problem {
    pub fn new(objective: Objective, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        Ok(Problem { objective, noise })
    }

    pub fn noise_free(objective: Objective) -> Self {
        Problem {
            objective,
            noise: NoiseModel::None,
        }
    }
}

impl ObjectiveSampler for Problem {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn sample(&self, z: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let u = self.objective.from_unit(z);
        let y = observe(&self.objective, &self.noise, &u, rng)?;
        Ok(match self.objective.sense() {
            Sense::Maximize => y,
            Sense::Minimize => -y,
        })
    }
}

/// Names accepted by the benchmark problem registry.
pub fn problem_names() -> &'static [&'static str] {
    &[
        "griewank",
        "schwefel222",
        "rosenbrock",
        "assortment",
        "jackson",
        "prodline",
    ]
}

/// Standard normal draw via Box-Muller, stable across platforms for a fixed
/// generator stream.
pub(crate) fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * (0.5f64).powi(53);
    let u2 = (rng.next_u64() >> 11) as f64 * (0.5f64).powi(53);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Exponential draw with the given rate.
pub(crate) fn exponential(rate: f64, rng: &mut dyn RngCore) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 1.0) * (0.5f64).powi(53);
    -u.ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn rescaling_round_trip() {
        let obj = assortment_default(5).unwrap();
        let z = [0.12, 0.9, 0.33, 0.5, 0.78];
        let u = obj.from_unit(&z);
        let back = obj.to_unit(&u);
        for (a, b) in z.iter().zip(&back) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn observe_without_noise_is_exact() {
        let obj = griewank(3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let u = [1.0, -2.0, 0.5];
        let f = obj.eval_raw(&u, &mut rng).unwrap();
        let y = observe(&obj, &NoiseModel::None, &u, &mut rng).unwrap();
        assert_eq!(f, y);
        let y0 = observe(&obj, &NoiseModel::GaussianPropAbs { zeta: 0.0 }, &u, &mut rng).unwrap();
        assert_eq!(f, y0);
    }

    #[test]
    fn noise_mean_matches_objective() {
        let obj = schwefel222(2).unwrap();
        let noise = NoiseModel::GaussianPropSq { zeta: 0.05 };
        let u = [3.0, -1.5];
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let f = obj.eval_raw(&u, &mut rng).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| observe(&obj, &noise, &u, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let se = 0.05 * f / (n as f64).sqrt();
        assert!((mean - f).abs() <= 4.0 * se, "mean {mean} vs f {f}");
    }

    #[test]
    fn shifted_optimum_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..20 {
            let d = 4;
            let u: Vec<f64> = (0..d).map(|_| 2.0 * rand::Rng::gen::<f64>(&mut rng) - 1.0).collect();
            let obj = schwefel222(d).unwrap().shifted(&u).unwrap();
            let opt = obj.true_opt().unwrap();
            let loc = opt.location.clone().unwrap();
            let v = obj.eval_raw(&loc, &mut rng).unwrap();
            assert_relative_eq!(v, opt.value, epsilon = 1e-9);
        }
    }

    #[test]
    fn shifted_example() {
        let obj = schwefel222(4).unwrap().shifted(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let opt = obj.true_opt().unwrap();
        let loc = opt.location.clone().unwrap();
        for l in &loc {
            assert_relative_eq!(*l, -0.5, epsilon = 1e-12);
        }
        assert_relative_eq!(opt.value, 100.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_relative_eq!(obj.eval_raw(&loc, &mut rng).unwrap(), 100.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_shift_identity() {
        let a = griewank(2).unwrap();
        let b = griewank(2).unwrap().shifted(&[0.0, 0.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for u in [[0.3, -4.0], [5.5, 2.2]] {
            assert_eq!(
                a.eval_raw(&u, &mut rng).unwrap(),
                b.eval_raw(&u, &mut rng).unwrap()
            );
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| d * d).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }
}
