//! Experiment configs, deterministic execution, sweeps, slope fits and export.
//!
//! A run is described by an [`ExperimentConfig`] (JSON, versioned, unknown keys
//! rejected). [`run_experiment`] builds the problem, topology and algorithm,
//! runs every repeat with a derived seed and aggregates the recorded
//! suboptimality.

mod export;
mod fit;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::compressors::Compressor;
use crate::error::{config, Error, Result};
use crate::objectives::{regularize, LogisticSpec, NoiseModel, Problem, QuadraticSpec, Vector};
use crate::optimizers::{
    accelerated_gradient, compressed_distributed_sgd, decentralized_accelerated, decentralized_sgd, gradient_sliding,
    local_sgd, sgd, variance_reduced, AcceleratedOptions, CompositeProblem, DecentralizedAcceleratedOptions,
    DsgdOptions, LocalSgdOptions, Nonsmooth, StepSchedule, VrOptions,
};
use crate::rng::derive_seed;
use crate::topology::{Generator, TopologySchedule};
use crate::trace::{RunBudget, RunTrace};
use crate::zeroth_order::{gradient_free_sliding, zo_sgd, SmoothingConfig};

pub use export::{read_json, read_sweep, write_csv, write_json, write_sweep, TraceDocument, CSV_COLUMNS};
pub use fit::{fit_loglog, SlopeFit};
pub use sweep::{run_sweep, FitRequest, FitVariable, SweepAxis, SweepCell, SweepConfig, SweepResult};

/// Config schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Environment variable bounding the number of worker threads of a sweep.
pub const THREADS_ENV: &str = "DECOPT_THREADS";

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default = "one")]
    pub repeats: usize,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub topology: Option<Generator>,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub compressor: Option<Compressor>,
    pub budget: RunBudget,
    #[serde(default)]
    pub output: OutputConfig,
    /// Keep measured wall-clock times in the records; off by default so exports are reproducible.
    #[serde(default)]
    pub wall_clock: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub json: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemFamily {
    Quadratic(QuadraticSpec),
    Logistic(LogisticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub generator: ProblemFamily,
    /// Seed of the problem instance; independent of the run seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub value_noise: f64,
    /// Nonsmooth term for the sliding methods.
    #[serde(default)]
    pub nonsmooth: Option<Nonsmooth>,
    #[serde(default)]
    pub regularize: Option<RegularizeConfig>,
}

/// Adds `(ε/(2R²))‖x − x0‖²`; `radius` defaults to the distance from the start to the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizeConfig {
    pub eps: f64,
    #[serde(default)]
    pub radius: Option<f64>,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        let mut p = match &self.generator {
            ProblemFamily::Quadratic(spec) => Problem::random_quadratic(spec, self.seed)?,
            ProblemFamily::Logistic(spec) => Problem::logistic(spec, self.seed)?,
        };
        if let Some(noise) = self.noise {
            p = p.with_noise(noise)?;
        }
        if self.value_noise != 0.0 {
            p = p.with_value_noise(self.value_noise)?;
        }
        if let Some(reg) = self.regularize {
            let x0 = p.initial_point().clone();
            let r = reg.radius.unwrap_or(p.profile().r);
            p = regularize(&p, &x0, reg.eps, r)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Sgd {
        schedule: StepSchedule,
    },
    AcceleratedGradient(AcceleratedOptions),
    VarianceReduced(VrOptions),
    GradientSliding {
        eps: f64,
        #[serde(default)]
        radius: Option<f64>,
    },
    DecentralizedSgd {
        #[serde(default = "one")]
        local_steps: usize,
        step: StepSchedule,
        #[serde(default)]
        consensus_step: Option<f64>,
    },
    DecentralizedAccelerated(DecentralizedAcceleratedOptions),
    LocalSgd(LocalSgdOptions),
    CompressedSgd {
        schedule: StepSchedule,
    },
    ZoSgd {
        #[serde(default)]
        tau: Option<f64>,
        schedule: StepSchedule,
    },
    GradientFreeSliding {
        eps: f64,
        #[serde(default)]
        tau: Option<f64>,
    },
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Sgd { .. } => "sgd",
            AlgorithmConfig::AcceleratedGradient(_) => "accelerated_gradient",
            AlgorithmConfig::VarianceReduced(_) => "variance_reduced",
            AlgorithmConfig::GradientSliding { .. } => "gradient_sliding",
            AlgorithmConfig::DecentralizedSgd { .. } => "decentralized_sgd",
            AlgorithmConfig::DecentralizedAccelerated(_) => "decentralized_accelerated",
            AlgorithmConfig::LocalSgd(_) => "local_sgd",
            AlgorithmConfig::CompressedSgd { .. } => "compressed_sgd",
            AlgorithmConfig::ZoSgd { .. } => "zo_sgd",
            AlgorithmConfig::GradientFreeSliding { .. } => "gradient_free_sliding",
        }
    }

    fn is_sliding(&self) -> bool {
        matches!(self, AlgorithmConfig::GradientSliding { .. } | AlgorithmConfig::GradientFreeSliding { .. })
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return config(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.repeats == 0 {
            return config("repeats must be at least 1");
        }
        self.budget.validate()?;
        if self.problem.nonsmooth.is_some() && !self.algorithm.is_sliding() {
            return config(format!("{} does not accept a nonsmooth term", self.algorithm.name()));
        }
        if self.compressor.is_some()
            && !matches!(self.algorithm, AlgorithmConfig::DecentralizedSgd { .. } | AlgorithmConfig::CompressedSgd { .. })
        {
            return config(format!("{} does not use a compressor", self.algorithm.name()));
        }
        Ok(())
    }

    /// Seed of repeat `index`; a single repeat uses the config seed itself.
    pub fn repeat_seed(&self, index: usize) -> u64 {
        if self.repeats == 1 {
            self.seed
        } else {
            derive_seed(self.seed, index as u64)
        }
    }
}

/// Mean recorded suboptimality across repeats, at the rounds present in every repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rounds: Vec<u64>,
    pub mean_subopt: Vec<f64>,
}

impl Aggregate {
    pub fn of(traces: &[RunTrace]) -> Self {
        let Some(first) = traces.first() else {
            return Self { rounds: vec![], mean_subopt: vec![] };
        };
        let mut rounds = Vec::new();
        let mut mean_subopt = Vec::new();
        for (i, rec) in first.records.iter().enumerate() {
            let values: Option<Vec<f64>> = traces
                .iter()
                .map(|t| t.records.get(i).filter(|r| r.round == rec.round).map(|r| r.subopt))
                .collect();
            match values {
                Some(v) => {
                    rounds.push(rec.round);
                    mean_subopt.push(v.iter().sum::<f64>() / v.len() as f64);
                }
                None => break,
            }
        }
        Self { rounds, mean_subopt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub traces: Vec<RunTrace>,
    pub aggregate: Aggregate,
}

/// Runs every repeat of `config`. Errors carry the partial trace of the failing repeat.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let problem = config.problem.build()?;
    let topology = config.topology.clone().map(TopologySchedule::new).transpose()?;
    let composite = if config.algorithm.is_sliding() {
        Some(CompositeProblem::new(problem.clone(), config.problem.nonsmooth.unwrap_or(Nonsmooth::Zero))?)
    } else {
        None
    };
    let mut traces = Vec::with_capacity(config.repeats);
    for i in 0..config.repeats {
        let seed = config.repeat_seed(i);
        let mut trace = run_once(config, &problem, topology.as_ref(), composite.as_ref(), seed)
            .map_err(|e| strip_wall_clock_err(e, config.wall_clock))?;
        if !config.wall_clock {
            strip_wall_clock(&mut trace);
        }
        traces.push(trace);
    }
    let aggregate = Aggregate::of(&traces);
    Ok(ExperimentOutcome { traces, aggregate })
}

fn strip_wall_clock(trace: &mut RunTrace) {
    trace.records.iter_mut().for_each(|r| r.wall_ms = 0.0);
}

fn strip_wall_clock_err(e: Error, keep: bool) -> Error {
    if keep {
        return e;
    }
    match e {
        Error::Divergence { round, mut trace } => {
            strip_wall_clock(&mut trace);
            Error::Divergence { round, trace }
        }
        Error::BudgetExhausted(mut trace) => {
            strip_wall_clock(&mut trace);
            Error::BudgetExhausted(trace)
        }
        other => other,
    }
}

fn run_once(
    cfg: &ExperimentConfig,
    problem: &Problem,
    topology: Option<&TopologySchedule>,
    composite: Option<&CompositeProblem>,
    seed: u64,
) -> Result<RunTrace> {
    let x0: &Vector = problem.initial_point();
    let budget = &cfg.budget;
    let need_topology = || {
        topology.ok_or_else(|| Error::Config(format!("{} needs a topology", cfg.algorithm.name())))
    };
    match &cfg.algorithm {
        AlgorithmConfig::Sgd { schedule } => sgd(problem, x0, *schedule, budget, seed),
        AlgorithmConfig::AcceleratedGradient(opts) => accelerated_gradient(problem, x0, *opts, budget, seed),
        AlgorithmConfig::VarianceReduced(opts) => variance_reduced(problem, x0, *opts, budget, seed),
        AlgorithmConfig::GradientSliding { eps, radius } => {
            gradient_sliding(composite.expect("sliding builds a composite"), x0, *eps, *radius, budget, seed)
        }
        AlgorithmConfig::DecentralizedSgd { local_steps, step, consensus_step } => {
            let opts = DsgdOptions {
                local_steps: *local_steps,
                step: *step,
                compressor: cfg.compressor,
                consensus_step: *consensus_step,
            };
            decentralized_sgd(problem, x0, need_topology()?, opts, budget, seed)
        }
        AlgorithmConfig::DecentralizedAccelerated(opts) => {
            decentralized_accelerated(problem, x0, need_topology()?, *opts, budget, seed)
        }
        AlgorithmConfig::LocalSgd(opts) => local_sgd(problem, x0, *opts, budget, seed),
        AlgorithmConfig::CompressedSgd { schedule } => {
            let compressor = cfg.compressor.ok_or_else(|| Error::Config("compressed_sgd needs a compressor".into()))?;
            compressed_distributed_sgd(problem, x0, compressor, *schedule, budget, seed)
        }
        AlgorithmConfig::ZoSgd { tau, schedule } => {
            let smoothing = match tau {
                Some(t) => SmoothingConfig::new(*t)?,
                None => SmoothingConfig::for_radius(problem.profile().r)?,
            };
            zo_sgd(problem, x0, smoothing, *schedule, budget, seed)
        }
        AlgorithmConfig::GradientFreeSliding { eps, tau } => {
            let smoothing = tau.map(SmoothingConfig::new).transpose()?;
            gradient_free_sliding(composite.expect("sliding builds a composite"), x0, *eps, smoothing, budget, seed)
        }
    }
}
