//! Tandem production line with finite buffers and manufacturing blocking,
//! simulated by discrete events.
//!
//! Parts arrive at station 1 as a Poisson stream and are lost if station 1
//! is at capacity. Service times are exponential with per-station rates (the
//! decision variables). A part finishing at station `i` moves downstream
//! unless station `i+1` already holds `K` parts, in which case it stays at
//! station `i`, occupying the server and blocking further service there.
//! Capacity counts every part physically at a station, including the one in
//! service and a finished-but-blocked part. The objective is the revenue
//! rate `r * Th(x) / (c_0 + c^T x)` with `Th` the number of departures from
//! the last station within the horizon.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{exponential, Objective, ObjectiveKind, Sense};

/// Parameters of the tandem-line revenue objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionLineParams {
    /// Buffer capacity per station, in-service part included.
    pub capacity: u64,
    /// Exogenous Poisson arrival rate at station 1.
    pub arrival_rate: f64,
    /// Simulated time horizon.
    pub horizon: f64,
    /// Revenue per completed part.
    pub revenue: f64,
    /// Fixed operating cost.
    pub fixed_cost: f64,
    /// Per-station cost coefficients.
    pub costs: Vec<f64>,
}

impl ProductionLineParams {
    pub fn validate(&self) -> Result<()> {
        if self.costs.is_empty() {
            return Err(Error::invalid("at least one station is required"));
        }
        if self.capacity == 0 {
            return Err(Error::invalid("capacity must be >= 1"));
        }
        if !(self.arrival_rate > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::invalid("arrival rate and horizon must be > 0"));
        }
        Ok(())
    }

    pub(crate) fn value(&self, rates: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        let stats = simulate_tandem_line(
            rates,
            self.capacity,
            self.arrival_rate,
            self.horizon,
            rng,
        )?;
        let cost: f64 = self.fixed_cost
            + self
                .costs
                .iter()
                .zip(rates)
                .map(|(&c, &x)| c * x)
                .sum::<f64>();
        Ok(self.revenue * stats.departures as f64 / cost)
    }
}

/// Path statistics of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimStats {
    /// Departures from the last station within the horizon.
    pub departures: u64,
    /// All exogenous arrivals, whether admitted or lost.
    pub arrivals: u64,
    /// Arrivals turned away because station 1 was full.
    pub lost: u64,
}

struct Station {
    queue: u64,
    in_service: bool,
    /// A finished part holding the server while downstream is full.
    blocked: bool,
    completion: f64,
}

impl Station {
    fn count(&self) -> u64 {
        self.queue + self.in_service as u64 + self.blocked as u64
    }
}

/// One replication of the tandem line; deterministic given the generator
/// stream.
pub fn simulate_tandem_line(
    rates: &[f64],
    capacity: u64,
    arrival_rate: f64,
    horizon: f64,
    rng: &mut dyn RngCore,
) -> Result<SimStats> {
    let d = rates.len();
    if d == 0 {
        return Err(Error::invalid("at least one station is required"));
    }
    if rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid("service rates must be strictly positive"));
    }
    let mut stations: Vec<Station> = (0..d)
        .map(|_| Station {
            queue: 0,
            in_service: false,
            blocked: false,
            completion: f64::INFINITY,
        })
        .collect();
    let mut stats = SimStats {
        departures: 0,
        arrivals: 0,
        lost: 0,
    };
    #[allow(unused_assignments)]
    let mut now = 0.0f64;
    let mut next_arrival = exponential(arrival_rate, rng);

    // start service at station i if the server is free and work is waiting
    macro_rules! try_start {
        ($i:expr) => {{
            let i = $i;
            if !stations[i].in_service && !stations[i].blocked && stations[i].queue > 0 {
                stations[i].queue -= 1;
                stations[i].in_service = true;
                stations[i].completion = now + exponential(rates[i], rng);
            }
        }};
    }

    // a slot opened at station `gap`; pull blocked parts downstream,
    // cascading the freed space upstream one station at a time
    macro_rules! cascade {
        ($gap:expr) => {{
            let mut gap = $gap;
            while gap >= 1 && stations[gap - 1].blocked && stations[gap].count() < capacity {
                stations[gap - 1].blocked = false;
                stations[gap].queue += 1;
                try_start!(gap);
                try_start!(gap - 1);
                gap -= 1;
            }
        }};
    }

    loop {
        let mut next_completion = f64::INFINITY;
        let mut station_idx = usize::MAX;
        for (i, s) in stations.iter().enumerate() {
            if s.in_service && s.completion < next_completion {
                next_completion = s.completion;
                station_idx = i;
            }
        }
        let t_next = next_arrival.min(next_completion);
        if t_next > horizon {
            break;
        }
        now = t_next;
        if next_arrival <= next_completion {
            stats.arrivals += 1;
            if stations[0].count() < capacity {
                stations[0].queue += 1;
                try_start!(0);
            } else {
                stats.lost += 1;
            }
            next_arrival = now + exponential(arrival_rate, rng);
        } else {
            let i = station_idx;
            stations[i].in_service = false;
            stations[i].completion = f64::INFINITY;
            if i == d - 1 {
                stats.departures += 1;
                try_start!(i);
                cascade!(i);
            } else if stations[i + 1].count() < capacity {
                stations[i + 1].queue += 1;
                try_start!(i + 1);
                try_start!(i);
                cascade!(i);
            } else {
                stations[i].blocked = true;
            }
        }
    }
    Ok(stats)
}

/// Tandem-line objective with explicit parameters; service rates are the
/// decision variables on the given box.
pub fn production_line(
    params: ProductionLineParams,
    bounds: Vec<(f64, f64)>,
) -> Result<Objective> {
    params.validate()?;
    if bounds.len() != params.costs.len() {
        return Err(Error::invalid("bounds must match the number of stations"));
    }
    if bounds.iter().any(|&(lo, _)| lo < 0.0) {
        return Err(Error::invalid("service-rate boxes must be nonnegative"));
    }
    Objective::new(
        "prodline",
        bounds,
        Sense::Maximize,
        ObjectiveKind::ProductionLine(params),
        None,
    )
}

/// The benchmark parameterization: capacity 10, revenue `2e5`, fixed cost 1,
/// per-station costs `c_i = i`, rates in `(0, 2)^d`.
pub fn production_line_default(d: usize, arrival_rate: f64, horizon: f64) -> Result<Objective> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let params = ProductionLineParams {
        capacity: 10,
        arrival_rate,
        horizon,
        revenue: 2e5,
        fixed_cost: 1.0,
        costs: (1..=d).map(|i| i as f64).collect(),
    };
    production_line(params, vec![(0.0, 2.0); d])
}

/// Stationary loss probability of an M/M/1/K queue, the independent oracle
/// for the single-station line.
pub fn mm1k_loss_probability(rho: f64, k: u64) -> f64 {
    if (rho - 1.0).abs() < 1e-12 {
        return 1.0 / (k as f64 + 1.0);
    }
    (1.0 - rho) * rho.powi(k as i32) / (1.0 - rho.powi(k as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn single_station_matches_mm1k() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let (alpha, rate, k, horizon) = (0.5, 1.0, 10, 1e5);
        let stats = simulate_tandem_line(&[rate], k, alpha, horizon, &mut rng).unwrap();
        let throughput = stats.departures as f64 / horizon;
        let expected = alpha * (1.0 - mm1k_loss_probability(alpha / rate, k));
        assert!(
            (throughput - expected).abs() / expected < 0.02,
            "throughput {throughput} vs oracle {expected}"
        );
    }

    #[test]
    fn vanishing_arrivals_vanishing_throughput() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let stats = simulate_tandem_line(&[1.0, 1.0], 10, 1e-4, 1e3, &mut rng).unwrap();
        assert!(stats.departures <= 2);
    }

    #[test]
    fn conservation_throughput_below_arrivals() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let stats = simulate_tandem_line(&[0.8, 1.2, 0.6], 3, 1.5, 500.0, &mut rng).unwrap();
            assert!(stats.departures <= stats.arrivals);
        }
    }

    #[test]
    fn departures_monotone_in_horizon_under_crn() {
        let mut prev = 0u64;
        for horizon in [100.0, 200.0, 400.0, 800.0] {
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            let stats = simulate_tandem_line(&[1.0, 0.9], 5, 0.7, horizon, &mut rng).unwrap();
            assert!(stats.departures >= prev);
            prev = stats.departures;
        }
    }

    #[test]
    fn blocking_throttles_throughput() {
        // a slow last station with tiny buffers should throttle the line
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let fast = simulate_tandem_line(&[2.0, 2.0], 10, 1.5, 2e4, &mut rng).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let slow = simulate_tandem_line(&[2.0, 0.3], 1, 1.5, 2e4, &mut rng).unwrap();
        assert!(slow.departures < fast.departures / 2);
        // rate through a capacity-1 pipeline cannot exceed the slow server
        assert!((slow.departures as f64) / 2e4 <= 0.3 * 1.05);
    }

    #[test]
    fn objective_value_scales_revenue() {
        let obj = production_line_default(2, 0.5, 1e3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let v = obj.eval_raw(&[1.0, 1.0], &mut rng).unwrap();
        assert!(v > 0.0);
        assert!(obj.is_stochastic());
    }

    #[test]
    fn rejects_nonpositive_rates() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        assert!(simulate_tandem_line(&[0.0], 5, 1.0, 10.0, &mut rng).is_err());
    }
}
