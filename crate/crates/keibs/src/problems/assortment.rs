//! Product assortment pricing: expected newsvendor profit under the optimal
//! inventory decision, as a function of the price vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Objective, ObjectiveKind, Sense};

/// Parameters of the assortment profit surface
/// `f(x) = 1/(2(b-a)) sum_j [ (b-a)(x_j - c_j)/x_j + a ]^2 Q_j^2(x)` with
/// logit demand shares `Q_j(x) = e^{alpha_j - x_j} / (1 + sum_i e^{alpha_i - x_i})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortmentParams {
    pub a: f64,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub cost: Vec<f64>,
}

impl AssortmentParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.len() != self.cost.len() {
            return Err(Error::invalid(
                "alpha and cost must be nonempty and of equal length",
            ));
        }
        if !(self.b > self.a) {
            return Err(Error::invalid("demand bounds must satisfy a < b"));
        }
        Ok(())
    }

    pub(crate) fn value(&self, x: &[f64]) -> Result<f64> {
        if x.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("prices must be strictly positive".into()));
        }
        let denom: f64 = 1.0 + x
            .iter()
            .zip(&self.alpha)
            .map(|(&xj, &aj)| (aj - xj).exp())
            .sum::<f64>();
        let span = self.b - self.a;
        let mut total = 0.0;
        for ((&xj, &aj), &cj) in x.iter().zip(&self.alpha).zip(&self.cost) {
            let q = (aj - xj).exp() / denom;
            let margin = span * (xj - cj) / xj + self.a;
            total += margin * margin * q * q;
        }
        Ok(total / (2.0 * span))
    }
}

/// Assortment objective with explicit parameters and price box.
pub fn assortment(params: AssortmentParams, bounds: Vec<(f64, f64)>) -> Result<Objective> {
    params.validate()?;
    if bounds.len() != params.alpha.len() {
        return Err(Error::invalid("bounds must match the number of products"));
    }
    if bounds.iter().any(|&(lo, _)| lo <= 0.0) {
        return Err(Error::invalid("price boxes must be strictly positive"));
    }
    Objective::new(
        "assortment",
        bounds,
        Sense::Maximize,
        ObjectiveKind::Assortment(params),
        None,
    )
}

/// The benchmark parameterization: `a = 100`, `b = 400`,
/// `alpha_j = 10.5 + 0.5 (j-1)`, `c_j = 6.5 + 0.5 (j-1)`, prices in
/// `(h_j, h_j + 10)` with `h_j = 9 + 0.5 (j-1)`.
pub fn assortment_default(d: usize) -> Result<Objective> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let params = AssortmentParams {
        a: 100.0,
        b: 400.0,
        alpha: (0..d).map(|j| 10.5 + 0.5 * j as f64).collect(),
        cost: (0..d).map(|j| 6.5 + 0.5 * j as f64).collect(),
    };
    let bounds = (0..d)
        .map(|j| {
            let h = 9.0 + 0.5 * j as f64;
            (h, h + 10.0)
        })
        .collect();
    assortment(params, bounds)
}
