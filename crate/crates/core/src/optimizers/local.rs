use serde::{Deserialize, Serialize};

use crate::consensus::column_means;
use crate::error::{check_dim, config, Result};
use crate::objectives::{Matrix, Oracle, Problem, Vector};
use crate::optimizers::local_gradient;
use crate::rng::{stream, Purpose};
use crate::trace::{Recorder, RunBudget, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSgdOptions {
    /// Communication rounds `K`.
    pub rounds: u64,
    /// Local steps `T` between averagings.
    pub local_steps: u64,
    /// Defaults to `min{1/(2L), R√m/(σ√(KT))}`.
    #[serde(default)]
    pub step: Option<f64>,
}

/// Local SGD on identical node objectives: `T` local steps from the shared
/// model, then exact averaging. The output is the averaged model after the
/// last round.
pub fn local_sgd(
    problem: &Problem,
    x0: &Vector,
    options: LocalSgdOptions,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    check_dim(n, x0.len())?;
    if options.rounds == 0 || options.local_steps == 0 {
        return config("local SGD needs at least one round and one local step");
    }
    let r_comp = problem.components_per_node();
    for k in 1..m {
        for j in 0..r_comp {
            if problem.component(k, j) != problem.component(0, j) {
                return config("local SGD requires every node to hold the same objective");
            }
        }
    }
    let profile = problem.profile();
    let r = (x0 - &problem.optimum().x_star).norm().max(1e-12);
    let h = match options.step {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(_) => return config("local SGD step must be positive"),
        None => {
            let smooth = 1.0 / (2.0 * profile.l);
            if profile.sigma2 > 0.0 {
                let kt = (options.rounds * options.local_steps) as f64;
                smooth.min(r * (m as f64).sqrt() / (profile.sigma2.sqrt() * kt.sqrt()))
            } else {
                smooth
            }
        }
    };

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new("local_sgd", seed, m, budget)?;
    rec.meta("step", h);
    rec.meta("local_steps", options.local_steps as f64);
    let mut x = x0.clone();
    let mut locals = Matrix::zeros(m, n);

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(&x), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() && round < options.rounds {
        round += 1;
        for k in 0..m {
            let mut rng = stream(seed, k, round, Purpose::Gradient);
            let mut xk = x.clone();
            for _ in 0..options.local_steps {
                let g = local_gradient(&mut oracle, k, &xk, &mut rng)?;
                xk.axpy(-h, &g, 1.0);
            }
            locals.set_row(k, &xk.transpose());
        }
        x = column_means(&locals);
        if m > 1 {
            rec.communicate(1, m as u64 * n as u64);
        }
        stop = rec.observe(round, oracle.ledger(), problem.suboptimality(&x), 0.0)?;
    }
    let stop = stop.unwrap_or(crate::trace::StopReason::Completed);
    Ok(rec.finish(oracle.ledger(), stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Component, NoiseModel, QuadraticComponent};

    fn replicated(m: usize, sigma2: f64) -> Problem {
        let a = Matrix::from_diagonal(&Vector::from_row_slice(&[1.0, 0.5, 0.25]));
        let q = QuadraticComponent::new(a, Vector::from_row_slice(&[0.3, -0.2, 0.1])).unwrap();
        Problem::from_components(vec![vec![Component::Quadratic(q)]; m])
            .unwrap()
            .with_noise(NoiseModel::Gaussian { sigma2 })
            .unwrap()
    }

    #[test]
    fn rejects_heterogeneous_nodes() {
        let a = QuadraticComponent::new(Matrix::identity(1, 1), Vector::zeros(1)).unwrap();
        let b = QuadraticComponent::new(Matrix::identity(1, 1), Vector::from_element(1, 1.0)).unwrap();
        let p = Problem::from_components(vec![vec![Component::Quadratic(a)], vec![Component::Quadratic(b)]]).unwrap();
        let opts = LocalSgdOptions { rounds: 3, local_steps: 2, step: None };
        assert!(local_sgd(&p, &Vector::zeros(1), opts, &RunBudget::rounds(3), 0).is_err());
    }

    #[test]
    fn noiseless_rounds_equal_plain_gradient_steps() {
        let p = replicated(4, 0.0);
        let opts = LocalSgdOptions { rounds: 5, local_steps: 3, step: Some(0.5) };
        let x0 = Vector::from_element(3, 1.0);
        let trace = local_sgd(&p, &x0, opts, &RunBudget::rounds(5), 0).unwrap();
        let mut oracle = Oracle::new(&p);
        let mut x = x0;
        for _ in 0..15 {
            let g = oracle.full_gradient(crate::objectives::Scope::Node(0), &x).unwrap();
            x.axpy(-0.5, &g, 1.0);
        }
        assert!((trace.final_subopt() - p.suboptimality(&x)).abs() < 1e-14);
        assert_eq!(trace.last().unwrap().comm_rounds, 5);
    }
}
