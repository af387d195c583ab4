use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, Result};
use crate::objectives::{Oracle, Problem, Scope, Vector};
use crate::optimizers::mean_of;
use crate::rng::{stream, Purpose};
use crate::trace::{Recorder, RunBudget, RunTrace};

/// Next coefficient of the similar-triangles method: the positive root of
/// `L α² = (A + α)(1 + μA)`.
pub fn stm_alpha(l: f64, mu: f64, a: f64) -> f64 {
    let s = 1.0 + mu * a;
    (s + (s * s + 4.0 * l * a * s).sqrt()) / (2.0 * l)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratedOptions {
    /// Smoothness used for the steps; defaults to the profile's `L`.
    #[serde(default)]
    pub l: Option<f64>,
    /// Strong convexity used for the steps; defaults to the profile's `μ`.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Per-node minibatch size; `None` uses exact gradients.
    #[serde(default)]
    pub batch: Option<usize>,
}

/// State of the similar-triangles method.
pub(crate) struct SimilarTriangles {
    pub l: f64,
    pub mu: f64,
    pub a: f64,
    pub x: Vector,
    pub u: Vector,
}

impl SimilarTriangles {
    pub fn new(x0: &Vector, l: f64, mu: f64) -> Self {
        Self { l, mu, a: 0.0, x: x0.clone(), u: x0.clone() }
    }

    /// Coefficient and query point of the next step.
    pub fn query(&self) -> (f64, Vector) {
        let alpha = stm_alpha(self.l, self.mu, self.a);
        let y = (&self.u * alpha + &self.x * self.a) / (self.a + alpha);
        (alpha, y)
    }

    pub fn update(&mut self, alpha: f64, y: &Vector, g: &Vector) {
        let next_a = self.a + alpha;
        let mut u = &self.u * (1.0 + self.mu * self.a);
        u.axpy(alpha * self.mu, y, 1.0);
        u.axpy(-alpha, g, 1.0);
        u /= 1.0 + self.mu * next_a;
        self.x = (&u * alpha + &self.x * self.a) / next_a;
        self.u = u;
        self.a = next_a;
    }
}

/// Accelerated gradient method in similar-triangles form.
///
/// With exact gradients `f(x_N) − f* ≤ ‖x_0 − x*‖²/(2A_N)`, and `A_N ≥ (N+1)²/(4L)`.
/// Each iteration is one round of all-to-server communication when `m > 1`.
pub fn accelerated_gradient(
    problem: &Problem,
    x0: &Vector,
    options: AcceleratedOptions,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    check_dim(n, x0.len())?;
    let profile = problem.profile();
    let l = options.l.unwrap_or(profile.l);
    let mu = options.mu.unwrap_or(profile.mu);
    if !(l > 0.0 && l.is_finite()) || !(mu >= 0.0) || mu > l {
        return config(format!("accelerated gradient needs 0 <= mu <= L, got mu = {mu}, L = {l}"));
    }
    if options.batch == Some(0) {
        return config("batch size must be at least 1");
    }

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new("accelerated_gradient", seed, m, budget)?;
    rec.meta("L", l);
    rec.meta("mu", mu);
    let mut state = SimilarTriangles::new(x0, l, mu);

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(x0), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() {
        round += 1;
        let (alpha, y) = state.query();
        let g = match options.batch {
            None => oracle.full_gradient(Scope::Global, &y)?,
            Some(b) => mean_of((0..m).map(|k| {
                oracle.batch_gradient(k, &y, b, &mut stream(seed, k, round, Purpose::Gradient))
            }))?,
        };
        state.update(alpha, &y, &g);
        if m > 1 {
            rec.communicate(1, m as u64 * n as u64);
        }
        stop = rec.observe(round, oracle.ledger(), problem.suboptimality(&state.x), 0.0)?;
    }
    rec.meta("A", state.a);
    Ok(rec.finish(oracle.ledger(), stop.expect("loop exits on a stop reason")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Component, Matrix, QuadraticComponent, QuadraticSpec, Spectrum};

    fn spec(mu: f64, l: f64, dim: usize) -> QuadraticSpec {
        QuadraticSpec {
            nodes: 1,
            components_per_node: 1,
            dim,
            mu,
            l,
            heterogeneity: 0.0,
            component_spread: 0.0,
            spectrum: Spectrum::Linear,
            start_distance: 1.0,
        }
    }

    #[test]
    fn alpha_solves_defining_equation() {
        for &(l, mu, a) in &[(1.0, 0.0, 0.0), (4.0, 0.5, 3.0), (10.0, 1e-3, 1e4)] {
            let alpha = stm_alpha(l, mu, a);
            assert!(alpha > 0.0);
            let lhs = l * alpha * alpha;
            let rhs = (a + alpha) * (1.0 + mu * a);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }
    }

    #[test]
    fn scalar_quadratic_within_ten_iterations() {
        let q = QuadraticComponent::new(Matrix::from_element(1, 1, 1.0), Vector::zeros(1)).unwrap();
        let p = Problem::from_components(vec![vec![Component::Quadratic(q)]]).unwrap();
        let x0 = Vector::from_element(1, 1.0);
        let convex = AcceleratedOptions { mu: Some(0.0), ..Default::default() };
        let trace = accelerated_gradient(&p, &x0, convex, &RunBudget::rounds(10), 0).unwrap();
        assert_eq!(trace.records[1].subopt, 0.0);
        // f = x²/2, so |x| < 1e-9 is f < 5e-19.
        assert!(trace.final_subopt() < 5e-19);
        // The μ-coupled recursion keeps weight on x0 and needs a few more steps.
        let trace = accelerated_gradient(&p, &x0, AcceleratedOptions::default(), &RunBudget::target(5e-19, 30), 0).unwrap();
        assert!(trace.reached_target(), "{}", trace.final_subopt());
    }

    #[test]
    fn convex_certificate_holds() {
        let p = Problem::random_quadratic(&spec(0.0, 5.0, 30), 11).unwrap();
        let n_iter = 200u64;
        let trace =
            accelerated_gradient(&p, p.initial_point(), AcceleratedOptions::default(), &RunBudget::rounds(n_iter), 0)
                .unwrap();
        let r = p.profile().r;
        for rec in &trace.records[1..] {
            let k = rec.round as f64;
            assert!(rec.subopt <= 4.0 * 5.0 * r * r / ((k + 1.0) * (k + 1.0)) * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn strongly_convex_rate() {
        let p = Problem::random_quadratic(&spec(0.01, 1.0, 20), 5).unwrap();
        let trace =
            accelerated_gradient(&p, p.initial_point(), AcceleratedOptions::default(), &RunBudget::target(1e-10, 5000), 0)
                .unwrap();
        assert!(trace.reached_target());
        // About √κ·ln(ΔR²/ε) iterations.
        let rounds = trace.last().unwrap().round as f64;
        assert!(rounds < 10.0 * 10.0 * (1e10f64).ln(), "{rounds}");
        assert!(trace.meta["A"] > 0.0);
    }
}
