use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, Result};
use crate::objectives::{Oracle, Problem, Scope, Vector};
use crate::optimizers::{accelerated_gradient, mean_of, AcceleratedOptions};
use crate::rng::{stream, Purpose};
use crate::trace::{Recorder, RunBudget, RunTrace};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrOptions {
    /// Component smoothness; defaults to the largest component constant.
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Anchor refresh probability; defaults to `1/n` for `n` components in total.
    #[serde(default)]
    pub refresh_probability: Option<f64>,
}

/// Loopless accelerated variance reduction over all `m·r` components.
///
/// The estimator is `∇f(w) + ∇f_i(x) − ∇f_i(w)` with a uniformly drawn
/// component `i` and an anchor `w` replaced by the current output point with
/// probability `p`. A single component reduces the method to the accelerated
/// gradient method. Requires `μ > 0`; regularize convex problems first.
pub fn variance_reduced(
    problem: &Problem,
    x0: &Vector,
    options: VrOptions,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    let r = problem.components_per_node();
    let total = problem.total_components();
    check_dim(n, x0.len())?;
    let profile = problem.profile();
    let l = options.l.unwrap_or(profile.l_component_max);
    let mu = options.mu.unwrap_or(profile.mu);
    if !(mu > 0.0) {
        return config("variance reduction needs mu > 0; regularize the problem first");
    }
    if !(l >= mu && l.is_finite()) {
        return config(format!("component smoothness {l} must be at least mu = {mu}"));
    }

    if total == 1 {
        let mut trace = accelerated_gradient(
            problem,
            x0,
            AcceleratedOptions { l: Some(l), mu: Some(mu), batch: None },
            budget,
            seed,
        )?;
        trace.algorithm = "variance_reduced".into();
        return Ok(trace);
    }

    let p = options.refresh_probability.unwrap_or(1.0 / total as f64);
    if !(p > 0.0 && p <= 1.0) {
        return config("refresh probability must lie in (0, 1]");
    }
    let theta2 = 0.5;
    let theta1 = (2.0 * mu / (3.0 * l * p)).sqrt().min(0.5);
    let step = 1.0 / (3.0 * theta1 * l);

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new("variance_reduced", seed, m, budget)?;
    rec.meta("theta1", theta1);
    rec.meta("p", p);

    let anchor_gradient = |oracle: &mut Oracle<'_>, w: &Vector| -> Result<Vector> {
        mean_of((0..m).map(|k| oracle.full_gradient(Scope::Node(k), w)))
    };

    let mut y = x0.clone();
    let mut z = x0.clone();
    let mut w = x0.clone();
    let mut gw = anchor_gradient(&mut oracle, &w)?;

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(&y), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() {
        round += 1;
        let mut rng = stream(seed, 0, round, Purpose::Sampling);
        let x = &z * theta1 + &w * theta2 + &y * (1.0 - theta1 - theta2);
        let i = rng.random_range(0..total);
        let (k, j) = (i / r, i % r);
        let mut g = gw.clone();
        g += oracle.component_gradient(k, j, &x)?;
        g -= oracle.component_gradient(k, j, &w)?;

        let mut z_next = &z / step;
        z_next.axpy(mu, &x, 1.0);
        z_next -= &g;
        z_next /= 1.0 / step + mu;
        let y_next = &x + (&z_next - &z) * theta1;
        let refresh = rng.random::<f64>() < p;
        if refresh {
            w = y.clone();
            gw = anchor_gradient(&mut oracle, &w)?;
        }
        z = z_next;
        y = y_next;
        stop = rec.observe(round, oracle.ledger(), problem.suboptimality(&y), 0.0)?;
    }
    Ok(rec.finish(oracle.ledger(), stop.expect("loop exits on a stop reason")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Component, Matrix, QuadraticComponent, QuadraticSpec, Spectrum};

    fn finite_sum(components: usize, seed: u64) -> Problem {
        let spec = QuadraticSpec {
            nodes: 1,
            components_per_node: components,
            dim: 10,
            mu: 0.05,
            l: 1.0,
            heterogeneity: 1.0,
            component_spread: 0.5,
            spectrum: Spectrum::Linear,
            start_distance: 1.0,
        };
        Problem::random_quadratic(&spec, seed).unwrap()
    }

    #[test]
    fn converges_linearly_on_finite_sum() {
        let p = finite_sum(50, 3);
        let trace = variance_reduced(&p, p.initial_point(), VrOptions::default(), &RunBudget::target(1e-8, 200_000), 9)
            .unwrap();
        assert!(trace.reached_target(), "final {}", trace.final_subopt());
    }

    #[test]
    fn identical_components_give_exact_gradients() {
        let q = QuadraticComponent::new(Matrix::from_diagonal(&Vector::from_row_slice(&[1.0, 0.5])), Vector::from_row_slice(&[1.0, -1.0]))
            .unwrap();
        let comps = vec![Component::Quadratic(q); 1000];
        let p = Problem::from_components(vec![comps]).unwrap();
        let trace =
            variance_reduced(&p, &Vector::zeros(2), VrOptions::default(), &RunBudget::target(1e-12, 200_000), 1).unwrap();
        assert!(trace.reached_target());
    }

    #[test]
    fn zero_strong_convexity_is_rejected() {
        let q = QuadraticComponent::new(Matrix::zeros(2, 2), Vector::zeros(2)).unwrap();
        let p = Problem::from_components(vec![vec![Component::Quadratic(q.clone()), Component::Quadratic(q)]]).unwrap();
        assert!(variance_reduced(&p, &Vector::zeros(2), VrOptions::default(), &RunBudget::rounds(3), 0).is_err());
    }
}
