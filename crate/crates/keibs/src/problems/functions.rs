//! Closed-form global-optimization test functions on `(-10, 10)^d`, exposed
//! as minimization problems with known optima.

use crate::error::{Error, Result};

use super::{Objective, ObjectiveKind, Sense, TrueOptimum};

pub(crate) fn griewank_value(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|&v| v * v / 4000.0).sum();
    let prod: f64 = x
        .iter()
        .enumerate()
        .map(|(j, &v)| (v / (j + 1) as f64).cos())
        .product();
    50.0 * (sum - prod + 1.0)
}

pub(crate) fn schwefel222_value(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|&v| v.abs()).sum();
    let prod: f64 = x.iter().map(|&v| v.abs()).product();
    sum + prod + 100.0
}

pub(crate) fn rosenbrock_value(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

fn box_10(d: usize) -> Vec<(f64, f64)> {
    vec![(-10.0, 10.0); d]
}

/// `50 [ sum x_j^2 / 4000 - prod cos(x_j / j) + 1 ]`, minimized at the origin.
pub fn griewank(d: usize) -> Result<Objective> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    Objective::new(
        "griewank",
        box_10(d),
        Sense::Minimize,
        ObjectiveKind::Griewank,
        Some(TrueOptimum {
            location: Some(vec![0.0; d]),
            value: 0.0,
        }),
    )
}

/// `sum |x_j| + prod |x_j| + 100`, minimized at the origin with value 100.
pub fn schwefel222(d: usize) -> Result<Objective> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    Objective::new(
        "schwefel222",
        box_10(d),
        Sense::Minimize,
        ObjectiveKind::Schwefel222,
        Some(TrueOptimum {
            location: Some(vec![0.0; d]),
            value: 100.0,
        }),
    )
}

/// `sum 100 (x_{j+1} - x_j^2)^2 + (x_j - 1)^2`, minimized at the all-ones
/// point.
pub fn rosenbrock(d: usize) -> Result<Objective> {
    if d < 2 {
        return Err(Error::invalid("rosenbrock requires dimension >= 2"));
    }
    Objective::new(
        "rosenbrock",
        box_10(d),
        Sense::Minimize,
        ObjectiveKind::Rosenbrock,
        Some(TrueOptimum {
            location: Some(vec![1.0; d]),
            value: 0.0,
        }),
    )
}
