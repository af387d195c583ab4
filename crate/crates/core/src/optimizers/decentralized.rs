use serde::{Deserialize, Serialize};

use crate::compressors::Compressor;
use crate::consensus::{chebyshev_consensus, column_means, consensus_depth, consensus_error, gossip_round, CommCounter};
use crate::error::{check_dim, config, Error, Result};
use crate::objectives::{Matrix, Oracle, Problem, Scope, Vector};
use crate::optimizers::accelerated::stm_alpha;
use crate::optimizers::{local_gradient, StepSchedule};
use crate::rng::{stream, Purpose};
use crate::topology::TopologySchedule;
use crate::trace::{Recorder, RunBudget, RunTrace};

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsgdOptions {
    /// Local steps between communication rounds.
    #[serde(default = "one")]
    pub local_steps: usize,
    pub step: StepSchedule,
    /// Compressed gossip of the model differences; unbiased compressors only.
    #[serde(default)]
    pub compressor: Option<Compressor>,
    /// Gossip step for compressed gossip; defaults to `1/(1 + ω)`.
    #[serde(default)]
    pub consensus_step: Option<f64>,
}

fn node_matrix(x0: &Vector, m: usize) -> Matrix {
    Matrix::from_fn(m, x0.len(), |_, j| x0[j])
}

fn row(x: &Matrix, k: usize) -> Vector {
    x.row(k).transpose()
}

/// Decentralized SGD: every node takes local (stochastic) gradient steps, then
/// one gossip round `X ← W_t X`, or a compressed gossip round.
///
/// Compressed gossip keeps a public copy `X̂` known to the neighbours. Each
/// node sends `Q(x_k − x̂_k)`, the copy moves by that message times `1/(1 + ω)`,
/// and the models move by `γ(W X̂ − X̂)`.
///
/// One round of the trace is one communication round. The reported point is
/// the node average.
pub fn decentralized_sgd(
    problem: &Problem,
    x0: &Vector,
    topology: &TopologySchedule,
    options: DsgdOptions,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    check_dim(n, x0.len())?;
    check_dim(m, topology.nodes())?;
    let profile = *problem.profile();
    options.step.validate(&profile)?;
    if options.local_steps == 0 {
        return config("local_steps must be at least 1");
    }
    let (gamma, shrink) = match options.compressor {
        None => (1.0, 1.0),
        Some(c) => {
            c.validate(n)?;
            if !c.is_unbiased() {
                return Err(Error::Unsupported(format!(
                    "{c:?} is biased; compressed gossip here needs an unbiased compressor"
                )));
            }
            let shrink = 1.0 / (1.0 + c.variance_factor(n).unwrap_or(0.0));
            let g = options.consensus_step.unwrap_or(shrink);
            if !(g > 0.0 && g <= 1.0) {
                return config("consensus step must lie in (0, 1]");
            }
            (g, shrink)
        }
    };
    let r = (x0 - &problem.optimum().x_star).norm().max(1e-12);

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new("decentralized_sgd", seed, m, budget)?;
    rec.meta("chi", topology.chi());
    let mut x = node_matrix(x0, m);
    let mut public = Matrix::zeros(m, n);
    let mut counter = CommCounter::default();
    let mut local_step = 0u64;

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(&column_means(&x)), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() {
        round += 1;
        for k in 0..m {
            let mut rng = stream(seed, k, round, Purpose::Gradient);
            let mut xk = row(&x, k);
            for i in 0..options.local_steps {
                let h = options.step.step(local_step + i as u64, &profile, r);
                let g = local_gradient(&mut oracle, k, &xk, &mut rng)?;
                xk.axpy(-h, &g, 1.0);
            }
            x.set_row(k, &xk.transpose());
        }
        local_step += options.local_steps as u64;

        let w = topology.matrix(round - 1);
        match options.compressor {
            None => {
                x = gossip_round(w, &x, &mut counter)?;
                rec.communicate(1, m as u64 * n as u64);
            }
            Some(c) => {
                for k in 0..m {
                    let diff = row(&x, k) - row(&public, k);
                    let q = c.compress(&diff, &mut stream(seed, k, round, Purpose::Compression))?;
                    let updated = row(&public, k) + q * shrink;
                    public.set_row(k, &updated.transpose());
                }
                let mixed = gossip_round(w, &public, &mut counter)?;
                x += (mixed - &public) * gamma;
                rec.communicate(1, m as u64 * c.message_cost(n));
            }
        }
        let mean = column_means(&x);
        stop = rec.observe(round, oracle.ledger(), problem.suboptimality(&mean), consensus_error(&x))?;
    }
    Ok(rec.finish(oracle.ledger(), stop.expect("loop exits on a stop reason")))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecentralizedAcceleratedOptions {
    /// Relative consensus accuracy per iteration; defaults to the budget target, else `1e-6`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Defaults to the largest node smoothness constant.
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
}

/// Accelerated gradient with multi-step consensus.
///
/// Every iteration runs the similar-triangles update row-wise with local
/// gradients, then `T = ⌈√χ·ln(max(χ,10)/δ)⌉` Chebyshev consensus rounds on the
/// dual sequence. Time-varying schedules fall back to `⌈χ·ln(max(χ,10)/δ)⌉`
/// plain gossip rounds. One trace round is one outer iteration.
pub fn decentralized_accelerated(
    problem: &Problem,
    x0: &Vector,
    topology: &TopologySchedule,
    options: DecentralizedAcceleratedOptions,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    check_dim(n, x0.len())?;
    check_dim(m, topology.nodes())?;
    let profile = problem.profile();
    let l = options.l.unwrap_or(profile.l_node_max);
    let mu = options.mu.unwrap_or(profile.mu);
    if !(mu > 0.0) {
        return config("decentralized accelerated method needs mu > 0; regularize the problem first");
    }
    if !(l >= mu && l.is_finite()) {
        return config(format!("smoothness {l} must be at least mu = {mu}"));
    }
    let delta = options.delta.or(budget.target_eps).unwrap_or(1e-6).min(0.1);
    if !(delta > 0.0) {
        return config("consensus accuracy must be positive");
    }
    let chi = topology.chi();
    let accelerated = topology.is_static();
    let depth = if m == 1 { 0 } else { consensus_depth(chi, delta, accelerated) };

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new("decentralized_accelerated", seed, m, budget)?;
    rec.meta("chi", chi);
    rec.meta("consensus_depth", depth as f64);
    rec.meta("L", l);

    let mut x = node_matrix(x0, m);
    let mut u = x.clone();
    let mut a = 0.0;
    let mut counter = CommCounter::default();

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(x0), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() {
        round += 1;
        let alpha = stm_alpha(l, mu, a);
        let next_a = a + alpha;
        let y = (&u * alpha + &x * a) / next_a;
        let mut grads = Matrix::zeros(m, n);
        for k in 0..m {
            let g = oracle.full_gradient(Scope::Node(k), &row(&y, k))?;
            grads.set_row(k, &g.transpose());
        }
        let mut next_u = &u * (1.0 + mu * a) + &y * (alpha * mu) - grads * alpha;
        next_u /= 1.0 + mu * next_a;

        if depth > 0 {
            let before = counter.rounds;
            next_u = if accelerated {
                chebyshev_consensus(topology.static_matrix()?, &next_u, depth, &mut counter)?
            } else {
                let mut state = next_u;
                for _ in 0..depth {
                    let w = topology.matrix(counter.rounds);
                    state = gossip_round(w, &state, &mut counter)?;
                }
                state
            };
            rec.communicate(counter.rounds - before, (counter.rounds - before) * m as u64 * n as u64);
        }
        x = (&next_u * alpha + &x * a) / next_a;
        u = next_u;
        a = next_a;
        let mean = column_means(&x);
        stop = rec.observe(round, oracle.ledger(), problem.suboptimality(&mean), consensus_error(&x))?;
    }
    Ok(rec.finish(oracle.ledger(), stop.expect("loop exits on a stop reason")))
}
