use std::collections::VecDeque;

use crate::compressors::Compressor;
use crate::error::{check_dim, Error, Result};
use crate::objectives::{Oracle, Problem, Vector};
use crate::optimizers::{local_gradient, mean_of, StepSchedule};
use crate::rng::{stream, Purpose};
use crate::trace::{Recorder, RunBudget, RunTrace};

/// Running mean of the last `⌈k/2⌉` of `k` iterates.
pub(crate) struct SuffixAverage {
    window: VecDeque<Vector>,
    sum: Vector,
    pushed: u64,
}

impl SuffixAverage {
    pub fn new(n: usize) -> Self {
        Self { window: VecDeque::new(), sum: Vector::zeros(n), pushed: 0 }
    }

    pub fn push(&mut self, x: &Vector) {
        self.pushed += 1;
        self.sum += x;
        self.window.push_back(x.clone());
        let keep = self.pushed.div_ceil(2) as usize;
        while self.window.len() > keep {
            let old = self.window.pop_front().expect("window is non-empty");
            self.sum -= old;
        }
    }

    pub fn mean(&self) -> Vector {
        &self.sum / self.window.len() as f64
    }
}

/// Minibatch SGD `x^{k+1} = x^k − h_k ∇f(x^k, ξ^k)` where the stochastic gradient
/// averages one draw per node.
///
/// Strongly convex schedules report the last iterate; the others report the
/// average of the last half of the iterates.
pub fn sgd(problem: &Problem, x0: &Vector, schedule: StepSchedule, budget: &RunBudget, seed: u64) -> Result<RunTrace> {
    server_sgd("sgd", problem, x0, schedule, Compressor::Identity, budget, seed)
}

/// Workers send compressed stochastic gradients to a server that averages them.
///
/// Only unbiased compressors are accepted; steps are divided by `1 + ω` where
/// `E‖Q(z) − z‖² ≤ ω‖z‖²`.
pub fn compressed_distributed_sgd(
    problem: &Problem,
    x0: &Vector,
    compressor: Compressor,
    schedule: StepSchedule,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    if !compressor.is_unbiased() {
        return Err(Error::Unsupported(format!(
            "{compressor:?} is biased; compressed SGD without error feedback needs an unbiased compressor"
        )));
    }
    server_sgd("compressed_sgd", problem, x0, schedule, compressor, budget, seed)
}

fn server_sgd(
    name: &str,
    problem: &Problem,
    x0: &Vector,
    schedule: StepSchedule,
    compressor: Compressor,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    check_dim(n, x0.len())?;
    compressor.validate(n)?;
    let profile = *problem.profile();
    schedule.validate(&profile)?;
    let omega = compressor.variance_factor(n).unwrap_or(0.0);
    let r = (x0 - &problem.optimum().x_star).norm().max(1e-12);

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new(name, seed, m, budget)?;
    rec.meta("omega", omega);
    let mut x = x0.clone();
    let mut average = SuffixAverage::new(n);
    let report_last = schedule.reports_last_iterate();

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(&x), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() {
        let h = schedule.step(round, &profile, r) / (1.0 + omega);
        round += 1;
        let direction = mean_of((0..m).map(|k| {
            let mut grad_rng = stream(seed, k, round, Purpose::Gradient);
            let g = local_gradient(&mut oracle, k, &x, &mut grad_rng)?;
            match compressor {
                Compressor::Identity => Ok(g),
                c => c.compress(&g, &mut stream(seed, k, round, Purpose::Compression)),
            }
        }))?;
        x.axpy(-h, &direction, 1.0);
        if m > 1 {
            rec.communicate(1, m as u64 * compressor.message_cost(n));
        }
        let subopt = if report_last {
            problem.suboptimality(&x)
        } else {
            average.push(&x);
            problem.suboptimality(&average.mean())
        };
        stop = rec.observe(round, oracle.ledger(), subopt, 0.0)?;
    }
    Ok(rec.finish(oracle.ledger(), stop.expect("loop exits on a stop reason")))
}
