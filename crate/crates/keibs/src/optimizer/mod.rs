//! The two-stage sampler: batch sampling of a classical sparse grid with a
//! kernel ridge fit, then sequential expected-improvement sampling over the
//! next sparse-grid level until the budget is exhausted.
//!
//! Stage 2 scores every candidate of the level-`tau+1` grid each iteration.
//! Revisits of already-sampled points are permitted and aggregate into the
//! per-point running means; the distinct sampled set is always a truncated
//! sparse grid, which is what keeps every inverse sparse and exact.

mod engine;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{classical_sg, level_for_budget, sg_size, GridPoint, TruncatedSparseGrid};
use crate::surrogate::SurrogateState;

pub(crate) use engine::Engine;

/// A problem the sampler can draw one noisy evaluation from, parameterized
/// over the open unit cube.
pub trait ObjectiveSampler: Sync {
    fn dim(&self) -> usize;
    /// One simulation replication at a unit-cube point.
    fn sample(&self, z: &[f64], rng: &mut dyn rand::RngCore) -> Result<f64>;
}

/// Smoothness order the tuning schedules are calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

/// Tuning schedule for the regularization `lambda` and exploration scale
/// `delta_n`. With a zero noise proxy the schedule is pinned to
/// `lambda = 0`, `delta_n = 1`; with noise the rates follow the smoothness
/// order, with user constants, optional caps, and optional hard overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub smoothness: Smoothness,
    /// Sub-Gaussian noise variance proxy (standard-deviation scale).
    pub sigma: f64,
    pub c_lambda: f64,
    pub c_delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_delta: Option<f64>,
}

impl Schedule {
    /// Noise-free schedule: `lambda = 0`, `delta_n = 1`.
    pub fn noise_free() -> Self {
        Schedule {
            smoothness: Smoothness::One,
            sigma: 0.0,
            c_lambda: 1.0,
            c_delta: 1.0,
            lambda_override: None,
            delta_override: None,
            cap_lambda: None,
            cap_delta: None,
        }
    }

    /// Schedule with a positive noise proxy and unit constants.
    pub fn noisy(smoothness: Smoothness, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and > 0"));
        }
        Ok(Schedule {
            smoothness,
            sigma,
            c_lambda: 1.0,
            c_delta: 1.0,
            lambda_override: None,
            delta_override: None,
            cap_lambda: None,
            cap_delta: None,
        })
    }

    /// Cap both tuning values at 1, the benchmark-harness profile.
    pub fn with_unit_caps(mut self) -> Self {
        self.cap_lambda = Some(1.0);
        self.cap_delta = Some(1.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and >= 0"));
        }
        if !(self.c_lambda > 0.0) || !(self.c_delta > 0.0) {
            return Err(Error::invalid("schedule constants must be > 0"));
        }
        if self.sigma == 0.0 {
            // the noise-free theory pins the tuning values
            if self.lambda_override.is_some_and(|l| l != 0.0) {
                return Err(Error::invalid("sigma = 0 forces lambda = 0"));
            }
            if self.delta_override.is_some_and(|d| d != 1.0) {
                return Err(Error::invalid("sigma = 0 forces delta_n = 1"));
            }
        }
        if let Some(l) = self.lambda_override {
            if l < 0.0 || !l.is_finite() {
                return Err(Error::invalid("lambda override must be finite and >= 0"));
            }
        }
        if let Some(d) = self.delta_override {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::invalid("delta override must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// `(lambda, delta_n)` for a schedule at batch size `n_tau` and current
/// sample count `n`.
pub fn schedule_values(sched: &Schedule, d: usize, n_tau: u64, n: u64) -> Result<(f64, f64)> {
    sched.validate()?;
    if sched.sigma == 0.0 {
        return Ok((0.0, 1.0));
    }
    if n_tau < 2 || n < n_tau {
        return Err(Error::invalid(
            "noisy schedules require n >= n_tau >= 2 so the logarithms are defined",
        ));
    }
    let sigma = sched.sigma;
    let dd = d as f64;
    let log_sn_tau = (sigma * n_tau as f64).ln().abs();
    let log_sn = (sigma * n as f64).ln().abs();
    let (mut lambda, mut delta) = match sched.smoothness {
        Smoothness::One => {
            let lambda = sched.c_lambda
                * (sigma.powi(4) * (n_tau as f64).powi(-2) * log_sn_tau.powf(2.0 * dd - 1.0))
                    .powf(1.0 / 3.0);
            let delta = sched.c_delta
                * (sigma.powi(2) / n as f64 * log_sn.powf(1.0 - 2.0 * dd)).powf(1.0 / 6.0);
            (lambda, delta)
        }
        Smoothness::Two => {
            let lambda = sched.c_lambda
                * (sigma.powi(4)
                    * (n_tau as f64).powi(-2)
                    * log_sn_tau.powf(2.0 * dd - 1.0)
                    * (n_tau as f64).ln().powf(6.0 * (1.0 - dd)))
                .powf(1.0 / 5.0);
            let delta = sched.c_delta
                * (sigma.powi(6)
                    * (n as f64).powi(-3)
                    * log_sn.powf(1.0 - 2.0 * dd)
                    * (n as f64).ln().powf(6.0 * (dd - 1.0)))
                .powf(1.0 / 10.0);
            (lambda, delta)
        }
    };
    if let Some(cap) = sched.cap_lambda {
        lambda = lambda.min(cap);
    }
    if let Some(cap) = sched.cap_delta {
        delta = delta.min(cap);
    }
    if let Some(l) = sched.lambda_override {
        lambda = l;
    }
    if let Some(dl) = sched.delta_override {
        delta = dl;
    }
    if !lambda.is_finite() || !delta.is_finite() || !(delta > 0.0) {
        return Err(Error::Numerical(format!(
            "degenerate schedule values lambda={lambda}, delta={delta}"
        )));
    }
    Ok((lambda, delta))
}

/// Level of the largest classical sparse grid within the budget.
pub fn select_level(d: usize, budget: u64) -> Result<u32> {
    level_for_budget(d, budget)
}

/// The information value function `eta(z) = z Phi(z) + phi(z)`.
pub fn info_value(z: f64) -> f64 {
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    z * cdf + pdf
}

/// Expected improvement from the posterior pieces, with the continuous
/// `s -> 0` limit `max(mean - incumbent, 0)`.
pub fn ei_value(mean: f64, sd: f64, incumbent: f64) -> f64 {
    if sd > 0.0 {
        sd * info_value((mean - incumbent) / sd)
    } else {
        (mean - incumbent).max(0.0)
    }
}

/// Expected improvement of a candidate under a fitted surrogate state.
pub fn ei_score(state: &SurrogateState, x: &[f64], incumbent: f64) -> Result<f64> {
    let mean = crate::surrogate::posterior_mean(state, x)?;
    let sd = crate::surrogate::posterior_sd(state, x)?;
    Ok(ei_value(mean, sd, incumbent))
}

/// One sequential-sampling step in the run history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// Sample count when the selection was made.
    pub n: u64,
    pub chosen: GridPoint,
    pub acquisition: f64,
    /// Incumbent `max_i f_tilde(x_i)` at selection time.
    pub running_best: f64,
    /// Observed simulation response at the chosen point.
    pub sample: f64,
    /// Whether the chosen point had been sampled before.
    pub revisit: bool,
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub x_star: GridPoint,
    pub f_tilde_star: f64,
    pub history: Vec<HistoryRecord>,
    pub design_final: TruncatedSparseGrid,
    pub dim: usize,
    pub budget: u64,
    pub tau: u32,
    pub n_tau: u64,
    pub lambda: f64,
    pub delta_final: f64,
    pub seed: u64,
    pub schedule: Schedule,
    /// First-stage responses, one per base grid point in canonical order.
    pub stage1_values: Vec<f64>,
    /// Final per-point averaged responses and multiplicities, aligned with
    /// `design_final`.
    pub final_y_bar: Vec<f64>,
    pub final_multiplicities: Vec<u64>,
    /// Wall-clock seconds spent in the run.
    pub runtime_s: f64,
}

/// Options beyond the core algorithm.
#[derive(Debug, Clone, Default)]
pub struct KeibsOptions {
    /// After the grid argmax, also scan the vertices of the rectangular
    /// partition induced by the design's per-dimension coordinates. The
    /// surrogate mean is piecewise multilinear, so its box maximum is
    /// attained at such a vertex.
    pub refine_vertices: bool,
    /// Guard on the vertex count of the refinement pass.
    pub refine_vertex_limit: u64,
}

impl KeibsOptions {
    pub fn with_refinement() -> Self {
        KeibsOptions {
            refine_vertices: true,
            refine_vertex_limit: 1 << 20,
        }
    }
}

/// Run the two-stage sampler with the default options.
pub fn run_keibs(
    problem: &dyn ObjectiveSampler,
    budget: u64,
    schedule: &Schedule,
    seed: u64,
) -> Result<RunResult> {
    run_keibs_with(problem, budget, schedule, seed, &KeibsOptions::default())
}

/// Run the two-stage sampler.
pub fn run_keibs_with(
    problem: &dyn ObjectiveSampler,
    budget: u64,
    schedule: &Schedule,
    seed: u64,
    options: &KeibsOptions,
) -> Result<RunResult> {
    let start = Instant::now();
    schedule.validate()?;
    let d = problem.dim();
    if d == 0 {
        return Err(Error::invalid("problem dimension must be >= 1"));
    }
    if budget < sg_size(d, 1)? {
        return Err(Error::invalid(
            "budget must cover at least the level-1 sparse grid",
        ));
    }
    let tau = select_level(d, budget)?;
    let n_tau = sg_size(d, tau)?;
    let kernel = crate::kernel::bf_kernel_unit(d);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Stage 1: one sample at every base grid point, in canonical order.
    let base = classical_sg(d, tau)?;
    let mut stage1_values = Vec::with_capacity(base.len());
    for (i, point) in base.iter().enumerate() {
        let y = problem
            .sample(point.coords(), &mut rng)
            .map_err(|e| Error::Simulation {
                iteration: i,
                source: Box::new(e),
            })?;
        stage1_values.push(y);
    }
    let (lambda, _) = schedule_values(schedule, d, n_tau, n_tau.max(2))
        .or_else(|_| schedule_values(schedule, d, n_tau.max(2), n_tau.max(2)))?;

    let mut engine = Engine::new(kernel, d, tau, &stage1_values, lambda, schedule.sigma)?;

    // Stage 2: iterate the expected-improvement selection.
    let mut history = Vec::with_capacity((budget - n_tau) as usize);
    let mut n = n_tau;
    let mut delta = 1.0;
    while n < budget {
        let (_, delta_n) = schedule_values(schedule, d, n_tau, n)?;
        delta = delta_n;
        engine.prepare(delta_n)?;
        let (cand_idx, acq, incumbent) = engine.select();
        let point = engine.candidate(cand_idx).clone();
        let y = problem
            .sample(point.coords(), &mut rng)
            .map_err(|e| Error::Simulation {
                iteration: history.len() + base.len(),
                source: Box::new(e),
            })?;
        let revisit = engine.is_sampled(cand_idx);
        engine.add_sample(cand_idx, y)?;
        history.push(HistoryRecord {
            n,
            chosen: point,
            acquisition: acq,
            running_best: incumbent,
            sample: y,
            revisit,
        });
        n += 1;
    }

    // Final report: maximize the surrogate mean over the evaluated
    // candidate set (all of the level-(tau+1) grid).
    if budget > n_tau {
        let (_, delta_n) = schedule_values(schedule, d, n_tau, budget)?;
        delta = delta_n;
    }
    engine.prepare(delta)?;
    let (mut best_idx, mut best_mean) = engine.argmax_mean();
    let mut x_star = engine.candidate(best_idx).clone();
    if options.refine_vertices {
        if let Some((point, mean)) =
            engine.refine_over_partition(best_mean, options.refine_vertex_limit.max(1))?
        {
            x_star = point;
            best_mean = mean;
            best_idx = usize::MAX;
        }
    }
    let _ = best_idx;

    let (design_final, final_y_bar, final_multiplicities) = engine.into_design()?;
    Ok(RunResult {
        x_star,
        f_tilde_star: best_mean,
        history,
        design_final,
        dim: d,
        budget,
        tau,
        n_tau,
        lambda,
        delta_final: delta,
        seed,
        schedule: schedule.clone(),
        stage1_values,
        final_y_bar,
        final_multiplicities,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

impl<'de> Deserialize<'de> for TruncatedSparseGrid {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            base_level: u32,
            base: Vec<GridPoint>,
            augment: Vec<GridPoint>,
        }
        let raw = Raw::deserialize(deserializer)?;
        TruncatedSparseGrid::new(raw.dim, raw.base_level, raw.base, raw.augment)
            .map_err(serde::de::Error::custom)
    }
}
