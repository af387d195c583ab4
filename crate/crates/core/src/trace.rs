//! Run ledgers: one record per observed round plus the final oracle ledger.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Ledger;

/// Suboptimality growth (relative to the start, floored at one) that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    pub comm_rounds: u64,
    pub sent_numbers: u64,
    pub calls_full: u64,
    pub calls_stoch: u64,
    pub calls_comp: u64,
    pub calls_value: u64,
    pub subopt: f64,
    pub consensus_err: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    RoundLimit,
    CommLimit,
    OracleLimit,
    /// The method ran its planned schedule to the end.
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// Final per-node oracle ledger.
    pub ledger: Ledger,
    pub stop: Option<StopReason>,
    /// Scalar run parameters worth keeping next to the records (K, T, χ, ...).
    #[serde(default)]
    pub meta: BTreeMap<String, f64>,
}

impl RunTrace {
    pub fn new(algorithm: impl Into<String>, seed: u64, nodes: usize) -> Self {
        Self {
            algorithm: algorithm.into(),
            seed,
            records: Vec::new(),
            ledger: Ledger::new(nodes),
            stop: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_subopt(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.subopt)
    }

    /// Running minimum of the recorded suboptimality.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.min(r.subopt);
                best
            })
            .collect()
    }

    /// First record at or below `eps`.
    pub fn first_below(&self, eps: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.subopt <= eps)
    }

    pub fn reached_target(&self) -> bool {
        self.stop == Some(StopReason::TargetReached)
    }

    /// Per-node gradient work in component-gradient units: a full node gradient costs `r`.
    pub fn component_equivalents(&self, components_per_node: usize) -> u64 {
        self.ledger
            .per_node()
            .iter()
            .map(|c| c.component + c.full * components_per_node as u64)
            .sum()
    }
}

/// Stopping rules of a run. At least one bound must be finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBudget {
    /// Bound on the round index (one per outer iteration of the method).
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default)]
    pub max_comm_rounds: Option<u64>,
    /// Bound on per-node oracle calls of all kinds.
    #[serde(default)]
    pub max_oracle_calls: Option<u64>,
    /// Stop once the recorded suboptimality reaches this value.
    #[serde(default)]
    pub target_eps: Option<f64>,
    #[serde(default = "default_every")]
    pub record_every: u64,
}

fn default_every() -> u64 {
    1
}

impl RunBudget {
    pub fn rounds(max_rounds: u64) -> Self {
        Self { max_rounds: Some(max_rounds), ..Self::empty() }
    }

    pub fn target(eps: f64, max_rounds: u64) -> Self {
        Self { max_rounds: Some(max_rounds), target_eps: Some(eps), ..Self::empty() }
    }

    pub fn every(mut self, record_every: u64) -> Self {
        self.record_every = record_every;
        self
    }

    fn empty() -> Self {
        Self { max_rounds: None, max_comm_rounds: None, max_oracle_calls: None, target_eps: None, record_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds.is_none()
            && self.max_comm_rounds.is_none()
            && self.max_oracle_calls.is_none()
            && self.target_eps.is_none()
        {
            return Err(Error::Config("budget needs at least one finite bound".into()));
        }
        if let Some(eps) = self.target_eps {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::Config("target_eps must be finite and >= 0".into()));
            }
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Shared bookkeeping for optimizers: budget checks, recording, divergence detection.
pub(crate) struct Recorder {
    budget: RunBudget,
    trace: RunTrace,
    comm_rounds: u64,
    sent_numbers: u64,
    start: Instant,
    subopt0: Option<f64>,
}

impl Recorder {
    pub fn new(algorithm: &str, seed: u64, nodes: usize, budget: &RunBudget) -> Result<Self> {
        budget.validate()?;
        Ok(Self {
            budget: budget.clone(),
            trace: RunTrace::new(algorithm, seed, nodes),
            comm_rounds: 0,
            sent_numbers: 0,
            start: Instant::now(),
            subopt0: None,
        })
    }

    pub fn meta(&mut self, key: &str, value: f64) {
        self.trace.meta.insert(key.to_string(), value);
    }

    pub fn communicate(&mut self, rounds: u64, sent_numbers: u64) {
        self.comm_rounds += rounds;
        self.sent_numbers += sent_numbers;
    }

    /// Observes the state after `round`; returns a stop reason once the run must end.
    pub fn observe(
        &mut self,
        round: u64,
        ledger: &Ledger,
        subopt: f64,
        consensus_err: f64,
    ) -> Result<Option<StopReason>> {
        let start = *self.subopt0.get_or_insert(subopt);
        let diverged = !subopt.is_finite() || subopt > DIVERGENCE_FACTOR * start.max(1.0);

        let max_calls = ledger.max().total();
        let stop = if self.budget.target_eps.is_some_and(|eps| subopt <= eps) {
            Some(StopReason::TargetReached)
        } else if self.budget.max_rounds.is_some_and(|cap| round >= cap) {
            Some(StopReason::RoundLimit)
        } else if self.budget.max_comm_rounds.is_some_and(|cap| self.comm_rounds >= cap) {
            Some(StopReason::CommLimit)
        } else if self.budget.max_oracle_calls.is_some_and(|cap| max_calls >= cap) {
            Some(StopReason::OracleLimit)
        } else {
            None
        };

        if diverged || stop.is_some() || round.is_multiple_of(self.budget.record_every) {
            self.push(round, ledger, subopt, consensus_err);
        }
        if diverged {
            let trace = self.take_trace(ledger, None);
            return Err(Error::Divergence { round, trace: Box::new(trace) });
        }
        Ok(stop)
    }

    fn push(&mut self, round: u64, ledger: &Ledger, subopt: f64, consensus_err: f64) {
        let calls = ledger.max();
        self.trace.records.push(TraceRecord {
            round,
            comm_rounds: self.comm_rounds,
            sent_numbers: self.sent_numbers,
            calls_full: calls.full,
            calls_stoch: calls.stochastic,
            calls_comp: calls.component,
            calls_value: calls.value,
            subopt,
            consensus_err,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }

    fn take_trace(&mut self, ledger: &Ledger, stop: Option<StopReason>) -> RunTrace {
        let mut trace = std::mem::replace(&mut self.trace, RunTrace::new("", 0, 0));
        trace.ledger = ledger.clone();
        trace.stop = stop;
        trace
    }

    pub fn finish(mut self, ledger: &Ledger, stop: StopReason) -> RunTrace {
        self.take_trace(ledger, Some(stop))
    }
}
