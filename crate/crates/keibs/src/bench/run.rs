//! Seeded macro-replication runner and the uniform random-search baseline.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{run_keibs, RunResult};
use crate::problems::{observe, Problem, Sense};

use super::config::{build_objective, ExperimentConfig, OptimizerChoice, ShiftMode};

/// Outcome of the uniform random-search baseline: sample `n` uniform points,
/// observe each once, keep the best observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchResult {
    /// Best point, unit-cube coordinates.
    pub x_star: Vec<f64>,
    /// Its observed (noisy) value, in the maximization orientation.
    pub best_observed: f64,
    pub evaluations: u64,
    pub seed: u64,
}

/// Uniform random search over the unit cube.
pub fn random_search(problem: &Problem, n: u64, rng: &mut dyn RngCore) -> Result<RandomSearchResult> {
    if n < 1 {
        return Err(Error::invalid("random search needs a budget of at least 1"));
    }
    let d = problem.objective.dim();
    let mut best_x = Vec::new();
    let mut best_y = f64::NEG_INFINITY;
    for _ in 0..n {
        let z: Vec<f64> = (0..d)
            .map(|_| ((rng.next_u64() >> 11) as f64 + 0.5) * (0.5f64).powi(53))
            .collect();
        let y = crate::optimizer::ObjectiveSampler::sample(problem, &z, rng)?;
        if y > best_y {
            best_y = y;
            best_x = z;
        }
    }
    Ok(RandomSearchResult {
        x_star: best_x,
        best_observed: best_y,
        evaluations: n,
        seed: 0,
    })
}

/// Per-run payload, depending on the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "optimizer", rename_all = "snake_case")]
pub enum RunDetail {
    Keibs(Box<RunResult>),
    RandomSearch(RandomSearchResult),
}

/// One macro-replication of one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub dim: usize,
    pub budget: u64,
    pub optimizer: String,
    pub replication: u32,
    pub seed: u64,
    /// Returned solution in user-space coordinates.
    pub x_star_user: Vec<f64>,
    /// True objective at the returned solution, raw scale and orientation.
    pub estimated_value: f64,
    pub runtime_s: f64,
    pub detail: RunDetail,
}

/// Aggregated metrics for one (budget, optimizer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub problem: String,
    pub dim: usize,
    pub budget: u64,
    pub optimizer: String,
    /// Mean true objective at the returned solutions.
    pub aeov: f64,
    /// Sample standard deviation with the `R - 1` denominator.
    pub sd: f64,
    pub mean_runtime_s: f64,
    /// The per-replication true values behind the aggregate.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<MetricsRow>,
    pub records: Vec<RunRecord>,
}

const fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x100000001b3);
        i += 1;
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed derivation: adding budgets or optimizers never
/// reshuffles existing replication streams.
pub fn derive_seed(master: u64, budget: u64, replication: u32, tag: &str) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ budget);
    h = splitmix64(h ^ replication as u64);
    h = splitmix64(h ^ fnv1a(tag.as_bytes()));
    h
}

fn instantiate_problem(
    cfg: &ExperimentConfig,
    budget: u64,
    replication: u32,
) -> Result<Problem> {
    let mut objective = build_objective(&cfg.problem)?;
    match &cfg.problem.shift {
        ShiftMode::None => {}
        ShiftMode::Fixed(u) => {
            objective = objective.shifted(u)?;
        }
        ShiftMode::PerReplication => {
            // the shift defines the problem instance, so it is shared across
            // optimizers at the same (budget, replication) key
            let mut rng =
                ChaCha12Rng::seed_from_u64(derive_seed(cfg.run.master_seed, budget, replication, "shift"));
            let u: Vec<f64> = (0..cfg.problem.dim)
                .map(|_| 2.0 * ((rng.next_u64() >> 11) as f64 * (0.5f64).powi(53)) - 1.0)
                .collect();
            objective = objective.shifted(&u)?;
        }
    }
    Problem::new(objective, cfg.noise.clone())
}

/// True objective at a returned solution: closed forms exactly, simulators
/// by averaging fresh replications.
fn true_value(
    problem: &Problem,
    x_user: &[f64],
    replications: u32,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if problem.objective.is_stochastic() {
        let mut acc = 0.0;
        for _ in 0..replications {
            acc += problem.objective.eval_raw(x_user, rng)?;
        }
        Ok(acc / replications as f64)
    } else {
        problem.objective.eval_raw(x_user, rng)
    }
}

fn run_single(
    cfg: &ExperimentConfig,
    schedule: &crate::optimizer::Schedule,
    budget: u64,
    replication: u32,
) -> Result<RunRecord> {
    let problem = instantiate_problem(cfg, budget, replication)?;
    let optimizer = cfg.run.optimizer;
    let seed = derive_seed(cfg.run.master_seed, budget, replication, optimizer.as_str());
    let start = Instant::now();
    let (x_unit, detail) = match optimizer {
        OptimizerChoice::Keibs => {
            let result = run_keibs(&problem, budget, schedule, seed)?;
            (
                result.x_star.coords().to_vec(),
                RunDetail::Keibs(Box::new(result)),
            )
        }
        OptimizerChoice::RandomSearch => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut result = random_search(&problem, budget, &mut rng)?;
            result.seed = seed;
            (result.x_star.clone(), RunDetail::RandomSearch(result))
        }
    };
    let runtime_s = start.elapsed().as_secs_f64();
    let x_user = problem.objective.from_unit(&x_unit);
    let mut eval_rng =
        ChaCha12Rng::seed_from_u64(derive_seed(cfg.run.master_seed, budget, replication, "eval"));
    let estimated_value = true_value(
        &problem,
        &x_user,
        cfg.run.true_value_replications,
        &mut eval_rng,
    )?;
    Ok(RunRecord {
        problem: cfg.problem.name.clone(),
        dim: cfg.problem.dim,
        budget,
        optimizer: optimizer.as_str().to_string(),
        replication,
        seed,
        x_star_user: x_user,
        estimated_value,
        runtime_s,
        detail,
    })
}

/// Run every (budget, replication) cell of the configured experiment.
/// Replications run concurrently on independent streams; results are ordered
/// deterministically.
pub fn run_experiment(cfg: &ExperimentConfig, raw_schedules: bool) -> Result<ExperimentOutcome> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        let joined = errors
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Config {
            path: "<config>".into(),
            message: joined,
        });
    }
    let schedule = cfg.schedule.to_schedule(raw_schedules)?;
    let jobs: Vec<(u64, u32)> = cfg
        .run
        .budgets
        .iter()
        .flat_map(|&n| (0..cfg.run.replications).map(move |r| (n, r)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(n, r)| run_single(cfg, &schedule, n, r))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.run.budgets.len());
    for &n in &cfg.run.budgets {
        let cell: Vec<&RunRecord> = records.iter().filter(|rec| rec.budget == n).collect();
        let values: Vec<f64> = cell.iter().map(|rec| rec.estimated_value).collect();
        let runtimes: Vec<f64> = cell.iter().map(|rec| rec.runtime_s).collect();
        rows.push(MetricsRow {
            problem: cfg.problem.name.clone(),
            dim: cfg.problem.dim,
            budget: n,
            optimizer: cfg.run.optimizer.as_str().to_string(),
            aeov: mean(&values),
            sd: sample_sd(&values),
            mean_runtime_s: mean(&runtimes),
            values,
        });
    }
    Ok(ExperimentOutcome { rows, records })
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `R - 1` denominator; zero for a single
/// replication.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let r = values.len();
    if r < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|&v| (v - m) * (v - m)).sum();
    (ss / (r - 1) as f64).sqrt()
}

/// Solutions are compared in the problem's own orientation: lower wins for
/// minimization problems, higher wins otherwise.
pub fn better_of(sense: Sense, a: f64, b: f64) -> f64 {
    match sense {
        Sense::Minimize => a.min(b),
        Sense::Maximize => a.max(b),
    }
}

/// One noisy observation helper re-exported for examples.
pub fn observe_once(problem: &Problem, u: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
    observe(&problem.objective, &problem.noise, u, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{griewank, NoiseModel};
    use std::collections::HashSet;

    #[test]
    fn seed_streams_do_not_collide() {
        let mut seen = HashSet::new();
        for n in [5u64, 17, 49, 129, 500] {
            for r in 0..1000u32 {
                for tag in ["keibs", "random_search", "eval", "shift"] {
                    assert!(seen.insert(derive_seed(42, n, r, tag)), "collision at {n}/{r}/{tag}");
                }
            }
        }
        assert_eq!(seen.len(), 20_000);
    }

    #[test]
    fn random_search_single_point() {
        let problem = Problem::noise_free(griewank(2).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let r = random_search(&problem, 1, &mut rng).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.x_star.len(), 2);
    }

    #[test]
    fn random_search_noise_free_returns_running_max() {
        let problem = Problem::noise_free(griewank(2).unwrap());
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let r = random_search(&problem, 200, &mut rng).unwrap();
        // replay and confirm the reported best is the max of the stream
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..200 {
            let z: Vec<f64> = (0..2)
                .map(|_| ((rng.next_u64() >> 11) as f64 + 0.5) * (0.5f64).powi(53))
                .collect();
            let y = crate::optimizer::ObjectiveSampler::sample(&problem, &z, &mut rng).unwrap();
            best = best.max(y);
        }
        assert_eq!(r.best_observed, best);
    }

    #[test]
    fn more_budget_never_hurts_under_nesting() {
        let problem = Problem::noise_free(griewank(2).unwrap());
        let mut prev = f64::NEG_INFINITY;
        for n in [10u64, 50, 250] {
            // nested sampling: the same stream replayed for longer
            let mut rng = ChaCha12Rng::seed_from_u64(3);
            let r = random_search(&problem, n, &mut rng).unwrap();
            assert!(r.best_observed >= prev);
            prev = r.best_observed;
        }
    }

    #[test]
    fn noise_model_echo() {
        let problem = Problem::new(griewank(2).unwrap(), NoiseModel::GaussianConst { sigma: 0.5 })
            .unwrap();
        assert_eq!(problem.noise, NoiseModel::GaussianConst { sigma: 0.5 });
    }
}
