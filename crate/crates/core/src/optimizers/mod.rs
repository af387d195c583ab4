//! Optimization methods whose oracle and communication costs the simulator prices.
//!
//! Every method takes an explicit seed and a [`RunBudget`](crate::trace::RunBudget)
//! and returns a [`RunTrace`](crate::trace::RunTrace) whose counters are the
//! oracle ledger of the run. Step sizes use the exact profile constants.

mod accelerated;
mod decentralized;
mod local;
pub(crate) mod sgd;
pub(crate) mod sliding;
mod variance_reduced;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::objectives::{Oracle, Scope, SmoothnessProfile, Vector};

pub use accelerated::{accelerated_gradient, stm_alpha, AcceleratedOptions};
pub use decentralized::{decentralized_accelerated, decentralized_sgd, DecentralizedAcceleratedOptions, DsgdOptions};
pub use local::{local_sgd, LocalSgdOptions};
pub use sgd::{compressed_distributed_sgd, sgd};
pub use sliding::{gradient_sliding, sliding_plan, CompositeProblem, InnerOracle, Nonsmooth, SlidingPlan};
pub use variance_reduced::{variance_reduced, VrOptions};

/// Step-size rule `h_k` for SGD-type methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { h: f64 },
    /// `h_k = 1/(μ(k+1))`.
    InverseMu,
    /// `h = min{1/L, R/(M√N)}` for a horizon of `N` steps.
    FixedHorizon { horizon: u64 },
}

impl StepSchedule {
    pub fn validate(&self, profile: &SmoothnessProfile) -> Result<()> {
        match *self {
            StepSchedule::Constant { h } if !(h > 0.0 && h.is_finite()) => config("constant step must be positive"),
            StepSchedule::InverseMu if !(profile.mu > 0.0) => config("inverse_mu schedule needs mu > 0"),
            StepSchedule::FixedHorizon { horizon: 0 } => config("fixed-horizon schedule needs horizon >= 1"),
            _ => Ok(()),
        }
    }

    /// Step used to produce iterate `k + 1`; `r` is the start's distance to the optimum.
    pub fn step(&self, k: u64, profile: &SmoothnessProfile, r: f64) -> f64 {
        match *self {
            StepSchedule::Constant { h } => h,
            StepSchedule::InverseMu => 1.0 / (profile.mu * (k + 1) as f64),
            StepSchedule::FixedHorizon { horizon } => {
                let stochastic = if profile.m_bound > 0.0 {
                    r / (profile.m_bound * (horizon as f64).sqrt())
                } else {
                    f64::INFINITY
                };
                (1.0 / profile.l).min(stochastic)
            }
        }
    }

    /// Strongly convex schedules report the last iterate, others a suffix average.
    pub fn reports_last_iterate(&self) -> bool {
        matches!(self, StepSchedule::InverseMu)
    }
}

/// Stochastic gradient when the problem has a noise model, exact node gradient otherwise.
pub(crate) fn local_gradient<R: Rng + ?Sized>(
    oracle: &mut Oracle<'_>,
    k: usize,
    x: &Vector,
    rng: &mut R,
) -> Result<Vector> {
    if oracle.problem().noise().is_some() {
        oracle.stochastic_gradient(k, x, rng)
    } else {
        oracle.full_gradient(Scope::Node(k), x)
    }
}

/// Mean of vectors accumulated in order; the shared reduction of all server-side averages.
pub(crate) fn mean_of(mut vs: impl Iterator<Item = Result<Vector>>) -> Result<Vector> {
    let mut acc = vs.next().expect("at least one vector")?;
    let mut count = 1usize;
    for v in vs {
        acc += v?;
        count += 1;
    }
    if count > 1 {
        acc /= count as f64;
    }
    Ok(acc)
}
