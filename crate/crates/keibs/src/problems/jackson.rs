//! Steady-state mean cycle time of class-1 jobs in an open Jackson network,
//! under the square-root change of variables that turns the simplex of
//! class fractions into a box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Objective, ObjectiveKind, Sense};

/// Network data: `mu[i]` service rates, `visits[i][j]` expected visits of
/// class-`j` jobs to station `i`. The decision vector has `d` entries:
/// `x_1..x_{d-1}` encode the class fractions through
/// `alpha_1 = x_1^2`, `alpha_j = x_j^2 (1 - sum_{h<j} alpha_h)`, with
/// `alpha_d` the remainder, and `x_d` is the bottleneck utilization `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacksonParams {
    pub mu: Vec<f64>,
    pub visits: Vec<Vec<f64>>,
}

impl JacksonParams {
    pub fn n_stations(&self) -> usize {
        self.mu.len()
    }

    pub fn n_classes(&self) -> usize {
        self.visits.first().map_or(0, |row| row.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mu.len();
        if n == 0 || self.visits.len() != n {
            return Err(Error::invalid(
                "visit matrix must have one row per station",
            ));
        }
        let d = self.n_classes();
        if d == 0 || self.visits.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("visit matrix rows must share one width"));
        }
        if self.mu.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::invalid("service rates must be strictly positive"));
        }
        if self
            .visits
            .iter()
            .any(|row| row.iter().any(|&v| v < 0.0 || !v.is_finite()))
        {
            return Err(Error::invalid("visit counts must be finite and >= 0"));
        }
        Ok(())
    }

    /// Class fractions recovered from the box variables `x_1..x_{d-1}`.
    pub fn fractions(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_classes();
        let mut alpha = Vec::with_capacity(d);
        let mut remaining = 1.0;
        for &xj in x.iter().take(d - 1) {
            let a = xj * xj * remaining;
            alpha.push(a);
            remaining -= a;
        }
        alpha.push(remaining);
        alpha
    }

    pub(crate) fn value(&self, x: &[f64]) -> Result<f64> {
        let d = self.n_classes();
        debug_assert_eq!(x.len(), d);
        let alpha = self.fractions(x);
        let rho = x[d - 1];
        // bottleneck normalizer: max_l sum_j alpha_j visits[l][j] / mu_l
        let mut normalizer = f64::NEG_INFINITY;
        for (l, row) in self.visits.iter().enumerate() {
            let load: f64 = row.iter().zip(&alpha).map(|(&v, &a)| v * a).sum();
            normalizer = normalizer.max(load / self.mu[l]);
        }
        if !(normalizer > 0.0) {
            return Err(Error::Domain(
                "class mix generates no load on any station".into(),
            ));
        }
        let mut ct = 0.0;
        for (i, row) in self.visits.iter().enumerate() {
            let load: f64 = row.iter().zip(&alpha).map(|(&v, &a)| v * a).sum();
            let bracket = self.mu[i] - rho * load / normalizer;
            if !(bracket > 0.0) {
                return Err(Error::Domain(format!(
                    "station {i} is unstable at this configuration"
                )));
            }
            ct += self.visits[i][0] / bracket;
        }
        Ok(ct)
    }
}

/// Jackson cycle-time objective with explicit parameters and box.
pub fn jackson_ct(params: JacksonParams, bounds: Vec<(f64, f64)>) -> Result<Objective> {
    params.validate()?;
    let d = params.n_classes();
    if bounds.len() != d {
        return Err(Error::invalid(format!(
            "expected {d} box dimensions (d-1 mix variables plus rho)"
        )));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo > 0.0) || !(hi < 1.0)) {
        return Err(Error::invalid(
            "jackson boxes must lie strictly inside (0, 1)",
        ));
    }
    Objective::new(
        "jackson",
        bounds,
        Sense::Minimize,
        ObjectiveKind::Jackson(params),
        None,
    )
}

/// A three-station, three-class instance used by the tests and examples.
pub fn jackson_default() -> Result<Objective> {
    let params = JacksonParams {
        mu: vec![2.0, 2.5, 3.0],
        visits: vec![
            vec![2.0, 1.0, 0.5],
            vec![1.0, 2.0, 1.0],
            vec![0.5, 1.0, 2.0],
        ],
    };
    jackson_ct(params, vec![(0.05, 0.95); 3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_station_single_class_collapses() {
        let params = JacksonParams {
            mu: vec![2.0],
            visits: vec![vec![3.0]],
        };
        // alpha = (1), normalizer = 3/2; CT = 3 / (2 - rho 3/(3/2)) = 3/(2(1-rho))
        let rho = 0.6;
        let v = params.value(&[rho]).unwrap();
        assert_relative_eq!(v, 3.0 / (2.0 * (1.0 - rho)), epsilon = 1e-12);
    }

    #[test]
    fn fractions_sum_to_one() {
        let obj = jackson_default().unwrap();
        let params = JacksonParams {
            mu: vec![2.0, 2.5, 3.0],
            visits: vec![
                vec![2.0, 1.0, 0.5],
                vec![1.0, 2.0, 1.0],
                vec![0.5, 1.0, 2.0],
            ],
        };
        for x in [[0.3, 0.7, 0.5], [0.9, 0.1, 0.2], [0.5, 0.5, 0.8]] {
            let alpha = params.fractions(&x);
            let total: f64 = alpha.iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            assert!(alpha.iter().all(|&a| a >= 0.0));
        }
        let _ = obj;
    }

    #[test]
    fn stable_for_rho_below_one() {
        let obj = jackson_default().unwrap();
        let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(0);
        let v = obj.eval_raw(&[0.5, 0.5, 0.9], &mut rng).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn unstable_bracket_is_domain_error() {
        let params = JacksonParams {
            mu: vec![1.0, 10.0],
            visits: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        };
        // rho = 1 would zero the bottleneck bracket; values above are invalid
        assert!(params.value(&[0.5, 1.0]).is_err());
    }
}
