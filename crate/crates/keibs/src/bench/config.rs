//! TOML experiment configuration and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{Schedule, Smoothness};
use crate::problems::{self, NoiseModel, Objective};

fn default_caps() -> bool {
    true
}

fn default_true_value_reps() -> u32 {
    100
}

fn default_c() -> f64 {
    1.0
}

/// Which optimizer a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Keibs,
    RandomSearch,
}

impl OptimizerChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerChoice::Keibs => "keibs",
            OptimizerChoice::RandomSearch => "random_search",
        }
    }
}

/// How the objective's optimum is relocated per macro-replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Use the objective as defined.
    None,
    /// One fixed shift vector applied to every replication.
    Fixed(Vec<f64>),
    /// Independent uniform (-1,1)^d shifts, one per replication, shared
    /// across optimizers at the same (budget, replication) key.
    PerReplication,
}

impl Default for ShiftMode {
    fn default() -> Self {
        ShiftMode::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub shift: ShiftMode,
    /// Tandem-line knobs.
    #[serde(default)]
    pub arrival_rate: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub capacity: Option<u64>,
    /// Jackson knobs.
    #[serde(default)]
    pub service_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub visit_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub box_low: Option<Vec<f64>>,
    #[serde(default)]
    pub box_high: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub smoothness: u8,
    pub sigma: f64,
    #[serde(default = "default_c")]
    pub c_lambda: f64,
    #[serde(default = "default_c")]
    pub c_delta: f64,
    /// Cap lambda and delta at 1, the harness profile default.
    #[serde(default = "default_caps")]
    pub caps: bool,
    #[serde(default)]
    pub lambda_override: Option<f64>,
    #[serde(default)]
    pub delta_override: Option<f64>,
}

impl ScheduleConfig {
    pub fn to_schedule(&self, raw: bool) -> Result<Schedule> {
        let smoothness = match self.smoothness {
            1 => Smoothness::One,
            2 => Smoothness::Two,
            other => {
                return Err(Error::Config {
                    path: "schedule.smoothness".into(),
                    message: format!("must be 1 or 2, got {other}"),
                })
            }
        };
        let mut schedule = Schedule {
            smoothness,
            sigma: self.sigma,
            c_lambda: self.c_lambda,
            c_delta: self.c_delta,
            lambda_override: self.lambda_override,
            delta_override: self.delta_override,
            cap_lambda: None,
            cap_delta: None,
        };
        if self.caps && !raw {
            schedule = schedule.with_unit_caps();
        }
        schedule.validate().map_err(|e| Error::Config {
            path: "schedule".into(),
            message: e.to_string(),
        })?;
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub optimizer: OptimizerChoice,
    pub budgets: Vec<u64>,
    pub replications: u32,
    pub master_seed: u64,
    #[serde(default = "default_true_value_reps")]
    pub true_value_replications: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub out_dir: PathBuf,
    /// Record wall-clock runtimes in the outputs. Disable to make reruns of
    /// one config byte-identical.
    #[serde(default = "default_caps")]
    pub include_runtimes: bool,
}

/// A full experiment: problem, noise, schedule, run plan, and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub noise: NoiseModel,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: "<config>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Every validation failure, each with its field path.
    pub fn validate(&self) -> Vec<Error> {
        let mut errors = Vec::new();
        let mut push = |path: &str, message: String| {
            errors.push(Error::Config {
                path: path.into(),
                message,
            });
        };
        if !problems::problem_names().contains(&self.problem.name.as_str()) {
            push(
                "problem.name",
                format!(
                    "unknown problem `{}`; known: {:?}",
                    self.problem.name,
                    problems::problem_names()
                ),
            );
        }
        if self.problem.dim == 0 {
            push("problem.dim", "dimension must be >= 1".into());
        }
        if self.problem.name == "rosenbrock" && self.problem.dim < 2 {
            push("problem.dim", "rosenbrock requires dim >= 2".into());
        }
        if let ShiftMode::Fixed(v) = &self.problem.shift {
            if v.len() != self.problem.dim {
                push("problem.shift", "fixed shift length must equal dim".into());
            }
            if v.iter().any(|&x| x.abs() >= 1.0) {
                push("problem.shift", "shift entries must lie in (-1, 1)".into());
            }
        }
        if let Err(e) = self.noise.validate() {
            push("noise", e.to_string());
        }
        if let Err(e) = self.schedule.to_schedule(false) {
            push("schedule", e.to_string());
        }
        if self.run.budgets.is_empty() {
            push("run.budgets", "at least one budget is required".into());
        }
        if self.run.budgets.windows(2).any(|w| w[0] >= w[1]) {
            push("run.budgets", "budgets must be strictly increasing".into());
        }
        if self.run.budgets.iter().any(|&n| n < 1) {
            push("run.budgets", "budgets must be >= 1".into());
        }
        if self.run.replications < 1 {
            push("run.replications", "replications must be >= 1".into());
        }
        if self.run.true_value_replications < 1 {
            push(
                "run.true_value_replications",
                "true-value replications must be >= 1".into(),
            );
        }
        // the instantiation itself can fail on problem-specific parameters
        if errors.is_empty() {
            if let Err(e) = build_objective(&self.problem) {
                push("problem", e.to_string());
            }
        }
        errors
    }
}

/// Construct the configured objective, before any shift is applied.
pub fn build_objective(cfg: &ProblemConfig) -> Result<Objective> {
    let d = cfg.dim;
    match cfg.name.as_str() {
        "griewank" => problems::griewank(d),
        "schwefel222" => problems::schwefel222(d),
        "rosenbrock" => problems::rosenbrock(d),
        "assortment" => problems::assortment_default(d),
        "jackson" => match (&cfg.service_rates, &cfg.visit_matrix) {
            (Some(mu), Some(visits)) => {
                let params = problems::JacksonParams {
                    mu: mu.clone(),
                    visits: visits.clone(),
                };
                let bounds = custom_bounds(cfg, d)?.unwrap_or(vec![(0.05, 0.95); d]);
                problems::jackson_ct(params, bounds)
            }
            (None, None) => {
                if d != 3 {
                    return Err(Error::invalid(
                        "the default jackson instance is three-dimensional; pass \
                         service_rates and visit_matrix for other sizes",
                    ));
                }
                problems::jackson_default()
            }
            _ => Err(Error::invalid(
                "jackson needs both service_rates and visit_matrix, or neither",
            )),
        },
        "prodline" => {
            let arrival = cfg.arrival_rate.unwrap_or(0.5);
            let horizon = cfg.horizon.unwrap_or(1000.0);
            let mut obj = problems::production_line_default(d, arrival, horizon)?;
            if let Some(capacity) = cfg.capacity {
                let params = problems::ProductionLineParams {
                    capacity,
                    arrival_rate: arrival,
                    horizon,
                    revenue: 2e5,
                    fixed_cost: 1.0,
                    costs: (1..=d).map(|i| i as f64).collect(),
                };
                obj = problems::production_line(params, vec![(0.0, 2.0); d])?;
            }
            Ok(obj)
        }
        other => Err(Error::invalid(format!("unknown problem `{other}`"))),
    }
}

fn custom_bounds(cfg: &ProblemConfig, d: usize) -> Result<Option<Vec<(f64, f64)>>> {
    match (&cfg.box_low, &cfg.box_high) {
        (Some(lo), Some(hi)) => {
            if lo.len() != d || hi.len() != d {
                return Err(Error::invalid("box_low/box_high must have length dim"));
            }
            Ok(Some(lo.iter().copied().zip(hi.iter().copied()).collect()))
        }
        (None, None) => Ok(None),
        _ => Err(Error::invalid("box_low and box_high must come together")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[problem]
name = "schwefel222"
dim = 10
shift = "per_replication"

[noise]
kind = "gaussian_prop_sq"
zeta = 0.1

[schedule]
smoothness = 1
sigma = 20.0

[run]
optimizer = "keibs"
budgets = [500]
replications = 10
master_seed = 424242

[output]
out_dir = "results"
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.run.true_value_replications, 100);
        assert!(cfg.output.include_runtimes);
    }

    #[test]
    fn rejects_unknown_problem_and_bad_budgets() {
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        cfg.problem.name = "sphere".into();
        cfg.run.budgets = vec![100, 100];
        let errors = cfg.validate();
        let paths: Vec<String> = errors
            .iter()
            .map(|e| match e {
                Error::Config { path, .. } => path.clone(),
                _ => String::new(),
            })
            .collect();
        assert!(paths.contains(&"problem.name".to_string()));
        assert!(paths.contains(&"run.budgets".to_string()));
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = EXAMPLE.replace("[output]", "unknown_key = 1\n[output]");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn schedule_caps_follow_raw_flag() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        let capped = cfg.schedule.to_schedule(false).unwrap();
        assert_eq!(capped.cap_lambda, Some(1.0));
        let raw = cfg.schedule.to_schedule(true).unwrap();
        assert_eq!(raw.cap_lambda, None);
    }
}
