use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config, Error, Result};
use crate::harness::{fit_loglog, run_experiment, ExperimentConfig, ExperimentOutcome, SlopeFit, CONFIG_VERSION, THREADS_ENV};
use crate::trace::{RunTrace, TraceRecord};

/// A grid of experiments: the base config with every combination of axis values
/// substituted at the given JSON pointers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub version: u32,
    pub base: Value,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
    #[serde(default)]
    pub fits: Vec<FitRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// JSON pointer into the base config, e.g. `/topology/m`.
    pub pointer: String,
    /// Further pointers that receive the same value, e.g. `/problem/generator/nodes`.
    #[serde(default)]
    pub linked: Vec<String>,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub x: FitVariable,
    pub y: FitVariable,
}

/// A per-cell scalar; trace-derived values are averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitVariable {
    /// The numeric value substituted at `pointer`.
    Axis { pointer: String },
    /// A scalar from the trace metadata, such as `chi`.
    Meta { key: String },
    /// A CSV column of the last record.
    Last { column: String },
    /// A CSV column of the first record with suboptimality at or below `eps`.
    FirstBelow { column: String, eps: f64 },
}

impl FitVariable {
    pub fn label(&self) -> String {
        match self {
            FitVariable::Axis { pointer } => format!("axis:{pointer}"),
            FitVariable::Meta { key } => format!("meta:{key}"),
            FitVariable::Last { column } => format!("last:{column}"),
            FitVariable::FirstBelow { column, eps } => format!("first_below({eps:e}):{column}"),
        }
    }

    fn evaluate(&self, cell: &SweepCell) -> Option<f64> {
        if let FitVariable::Axis { pointer } = self {
            return cell.overrides.iter().find(|(p, _)| p == pointer).and_then(|(_, v)| v.as_f64());
        }
        let traces = &cell.outcome.as_ref()?.traces;
        let values: Option<Vec<f64>> = traces.iter().map(|t| self.of_trace(t)).collect();
        let values = values?;
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }

    fn of_trace(&self, trace: &RunTrace) -> Option<f64> {
        match self {
            FitVariable::Axis { .. } => None,
            FitVariable::Meta { key } => trace.meta.get(key).copied(),
            FitVariable::Last { column } => column_value(trace.last()?, column),
            FitVariable::FirstBelow { column, eps } => column_value(trace.first_below(*eps)?, column),
        }
    }
}

fn column_value(rec: &TraceRecord, column: &str) -> Option<f64> {
    Some(match column {
        "round" => rec.round as f64,
        "comm_rounds" => rec.comm_rounds as f64,
        "sent_numbers" => rec.sent_numbers as f64,
        "calls_full" => rec.calls_full as f64,
        "calls_stoch" => rec.calls_stoch as f64,
        "calls_comp" => rec.calls_comp as f64,
        "calls_value" => rec.calls_value as f64,
        "subopt" => rec.subopt,
        "consensus_err" => rec.consensus_err,
        "wall_ms" => rec.wall_ms,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub overrides: Vec<(String, Value)>,
    #[serde(default)]
    pub outcome: Option<ExperimentOutcome>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub fits: Vec<SlopeFit>,
    /// Fits that could not be computed, with the reason.
    #[serde(default)]
    pub fit_errors: Vec<String>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.version != CONFIG_VERSION {
            return config(format!("unsupported sweep version {} (expected {CONFIG_VERSION})", cfg.version));
        }
        Ok(cfg)
    }

    /// Every combination of axis values, first axis slowest.
    pub fn grid(&self) -> Vec<Vec<(String, Value)>> {
        let mut grid = vec![Vec::new()];
        for axis in &self.axes {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut cell = prefix.clone();
                        for p in std::iter::once(&axis.pointer).chain(&axis.linked) {
                            cell.push((p.clone(), v.clone()));
                        }
                        cell
                    })
                })
                .collect();
        }
        grid
    }
}

fn cell_config(base: &Value, overrides: &[(String, Value)]) -> Result<ExperimentConfig> {
    let mut doc = base.clone();
    for (pointer, value) in overrides {
        let slot = doc
            .pointer_mut(pointer)
            .ok_or_else(|| Error::Config(format!("sweep pointer {pointer} does not exist in the base config")))?;
        *slot = value.clone();
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_cell(base: &Value, overrides: Vec<(String, Value)>) -> SweepCell {
    match cell_config(base, &overrides).and_then(|c| run_experiment(&c)) {
        Ok(outcome) => SweepCell { overrides, outcome: Some(outcome), error: None },
        Err(e) => SweepCell { overrides, outcome: None, error: Some(e.to_string()) },
    }
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|n| *n > 0)
}

/// Runs the grid (cells may run concurrently) and the requested fits.
/// Cell failures are recorded and do not stop the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    use rayon::prelude::*;

    let grid = cfg.grid();
    let run = || grid.into_par_iter().map(|o| run_cell(&cfg.base, o)).collect::<Vec<_>>();
    let cells = match thread_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut fits = Vec::new();
    let mut fit_errors = Vec::new();
    for req in &cfg.fits {
        let points: Vec<(f64, f64)> =
            cells.iter().filter_map(|c| Some((req.x.evaluate(c)?, req.y.evaluate(c)?))).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        match fit_loglog(&req.x.label(), &req.y.label(), &xs, &ys) {
            Ok(f) => fits.push(f),
            Err(e) => fit_errors.push(format!("{} vs {}: {e}", req.y.label(), req.x.label())),
        }
    }
    Ok(SweepResult { cells, fits, fit_errors })
}
