use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, Error, Result};
use crate::objectives::{Optimum, Oracle, Problem, Scope, Vector};
use crate::rng::{gaussian, stream, Purpose};
use crate::trace::{Recorder, RunBudget, RunTrace, StopReason};

/// Nonsmooth convex term `g` of a composite objective `f + g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonsmooth {
    Zero,
    /// `weight·‖x‖₁`.
    L1 { weight: f64 },
}

impl Nonsmooth {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonsmooth::L1 { weight } if !(weight >= 0.0 && weight.is_finite()) => {
                config("l1 weight must be non-negative")
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match *self {
            Nonsmooth::Zero => 0.0,
            Nonsmooth::L1 { weight } => weight * x.lp_norm(1),
        }
    }

    /// `g(x + t·e)` without allocating.
    fn value_along(&self, x: &Vector, e: &Vector, t: f64) -> f64 {
        match *self {
            Nonsmooth::Zero => 0.0,
            Nonsmooth::L1 { weight } => weight * x.iter().zip(e.iter()).map(|(a, b)| (a + t * b).abs()).sum::<f64>(),
        }
    }

    /// A subgradient, taking `0` from `∂|·|(0)`.
    pub fn subgradient_into(&self, x: &Vector, out: &mut Vector) {
        match *self {
            Nonsmooth::Zero => out.fill(0.0),
            Nonsmooth::L1 { weight } => {
                for (o, v) in out.iter_mut().zip(x.iter()) {
                    *o = if *v > 0.0 {
                        weight
                    } else if *v < 0.0 {
                        -weight
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    /// Lipschitz constant in the Euclidean norm.
    pub fn lipschitz(&self, n: usize) -> f64 {
        match *self {
            Nonsmooth::Zero => 0.0,
            Nonsmooth::L1 { weight } => weight * (n as f64).sqrt(),
        }
    }

    /// `argmin_u g(u) + ‖u − x‖²/(2t)`.
    pub fn prox(&self, x: &Vector, t: f64) -> Vector {
        match *self {
            Nonsmooth::Zero => x.clone(),
            Nonsmooth::L1 { weight } => x.map(|v| v.signum() * (v.abs() - t * weight).max(0.0)),
        }
    }
}

/// `f + g` with a smooth problem `f` and a nonsmooth term `g`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    smooth: Problem,
    nonsmooth: Nonsmooth,
    optimum: Optimum,
}

impl CompositeProblem {
    /// The reference optimum is computed by restarted accelerated proximal gradient.
    pub fn new(smooth: Problem, nonsmooth: Nonsmooth) -> Result<Self> {
        nonsmooth.validate()?;
        let optimum = proximal_reference(&smooth, nonsmooth)?;
        Ok(Self { smooth, nonsmooth, optimum })
    }

    pub fn smooth(&self) -> &Problem {
        &self.smooth
    }

    pub fn nonsmooth(&self) -> Nonsmooth {
        self.nonsmooth
    }

    pub fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        self.smooth.objective(x) + self.nonsmooth.value(x)
    }

    pub fn suboptimality(&self, x: &Vector) -> f64 {
        (self.objective(x) - self.optimum.f_star).max(0.0)
    }
}

fn proximal_reference(smooth: &Problem, g: Nonsmooth) -> Result<Optimum> {
    if matches!(g, Nonsmooth::Zero) {
        return Ok(smooth.optimum().clone());
    }
    let l = smooth.profile().l;
    let mut oracle = Oracle::new(smooth);
    let mut x = smooth.optimum().x_star.clone();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut prev_value = f64::INFINITY;
    for _ in 0..1_000_000 {
        let grad = oracle.full_gradient(Scope::Global, &y)?;
        let next = g.prox(&(&y - grad / l), 1.0 / l);
        let value = smooth.objective(&next) + g.value(&next);
        let moved = (&next - &x).norm();
        if value > prev_value {
            // Adaptive restart.
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        prev_value = value;
        if moved <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    let f_star = smooth.objective(&x) + g.value(&x);
    Ok(Optimum { x_star: x, f_star, closed_form: false })
}

/// How the inner loop accesses the nonsmooth term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerOracle {
    Subgradient,
    /// Two-point finite differences of `g` along uniform unit directions.
    TwoPoint { tau: f64 },
}

/// Outer iteration count and inner-step schedule of gradient sliding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlidingPlan {
    pub outer: u64,
    pub l: f64,
    /// Bound on the second moment of the inner oracle, as a norm.
    pub m_bound: f64,
    pub d_tilde: f64,
}

impl SlidingPlan {
    /// `T_k = ⌈M² N k² / (D̃ L²)⌉`, at least one.
    pub fn inner_steps(&self, k: u64) -> u64 {
        let v = self.m_bound * self.m_bound * self.outer as f64 * (k * k) as f64 / (self.d_tilde * self.l * self.l);
        (v.ceil() as u64).max(1)
    }

    pub fn total_inner(&self) -> u64 {
        (1..=self.outer).map(|k| self.inner_steps(k)).sum()
    }
}

/// Plan reaching accuracy `eps` from distance `r`: `N = ⌈√(4.5·L·R²/ε)⌉`, `D̃ = 3R²/2`.
pub fn sliding_plan(l: f64, m_bound: f64, r: f64, eps: f64) -> Result<SlidingPlan> {
    if !(l > 0.0 && m_bound >= 0.0 && r > 0.0 && eps > 0.0) {
        return config("sliding plan needs L > 0, M >= 0, R > 0 and eps > 0");
    }
    let outer = ((4.5 * l * r * r / eps).sqrt().ceil() as u64).max(1);
    Ok(SlidingPlan { outer, l, m_bound, d_tilde: 1.5 * r * r })
}

/// Gradient sliding: `O(√(L/ε))` gradients of `f` and `O(M²R²/ε²)` inner steps on `g`.
///
/// `radius` bounds `‖x_0 − x*‖`; it defaults to the true distance. The plan
/// runs to completion unless the budget's target is met first; any other
/// budget stop returns [`Error::BudgetExhausted`] with the partial trace.
pub fn gradient_sliding(
    problem: &CompositeProblem,
    x0: &Vector,
    eps: f64,
    radius: Option<f64>,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m_bound = problem.nonsmooth.lipschitz(n);
    run_sliding("gradient_sliding", problem, x0, eps, radius, InnerOracle::Subgradient, m_bound, budget, seed)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_sliding(
    name: &str,
    problem: &CompositeProblem,
    x0: &Vector,
    eps: f64,
    radius: Option<f64>,
    inner: InnerOracle,
    m_bound: f64,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    check_dim(n, x0.len())?;
    let smooth = &problem.smooth;
    let g_term = problem.nonsmooth;
    let r = radius.unwrap_or_else(|| (x0 - &problem.optimum.x_star).norm()).max(1e-12);
    let l = smooth.profile().l;
    let plan = sliding_plan(l, m_bound, r, eps)?;
    if let InnerOracle::TwoPoint { tau } = inner {
        if !(tau > 0.0) {
            return config("smoothing parameter must be positive");
        }
    }

    let mut oracle = Oracle::new(smooth);
    let mut rec = Recorder::new(name, seed, smooth.nodes(), budget)?;
    rec.meta("outer", plan.outer as f64);
    rec.meta("inner_total", plan.total_inner() as f64);
    rec.meta("R", r);

    let mut x = x0.clone();
    let mut x_bar = x0.clone();
    let mut u = Vector::zeros(n);
    let mut u_tilde = Vector::zeros(n);
    let mut h = Vector::zeros(n);
    let mut e = Vector::zeros(n);

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(&x_bar), 0.0)?;
    let mut k = 0u64;
    while stop.is_none() && k < plan.outer {
        k += 1;
        let gamma = 2.0 / (k as f64 + 1.0);
        let beta = 2.0 * l / k as f64;
        let x_under = &x_bar * (1.0 - gamma) + &x * gamma;
        let grad = oracle.full_gradient(Scope::Global, &x_under)?;

        let steps = plan.inner_steps(k);
        let mut rng = stream(seed, 0, k, Purpose::Direction);
        u.copy_from(&x);
        u_tilde.copy_from(&x);
        for t in 1..=steps {
            let t = t as f64;
            match inner {
                InnerOracle::Subgradient => {
                    g_term.subgradient_into(&u, &mut h);
                    oracle.ledger_mut().node_mut(0).stochastic += 1;
                }
                InnerOracle::TwoPoint { tau } => {
                    for v in e.iter_mut() {
                        *v = gaussian(&mut rng);
                    }
                    let norm = e.norm();
                    e /= norm;
                    let diff = g_term.value_along(&u, &e, tau) - g_term.value_along(&u, &e, -tau);
                    h.copy_from(&e);
                    h *= n as f64 * diff / (2.0 * tau);
                    oracle.ledger_mut().node_mut(0).value += 2;
                }
            }
            let p = t / 2.0;
            let theta = 2.0 * (t + 1.0) / (t * (t + 3.0));
            let denom = beta * (1.0 + p);
            for i in 0..n {
                u[i] = (beta * x[i] + beta * p * u[i] - grad[i] - h[i]) / denom;
                u_tilde[i] = (1.0 - theta) * u_tilde[i] + theta * u[i];
            }
        }
        x.copy_from(&u);
        x_bar = &x_bar * (1.0 - gamma) + &u_tilde * gamma;
        stop = rec.observe(k, oracle.ledger(), problem.suboptimality(&x_bar), 0.0)?;
    }
    match stop {
        None => Ok(rec.finish(oracle.ledger(), StopReason::Completed)),
        Some(StopReason::TargetReached) => Ok(rec.finish(oracle.ledger(), StopReason::TargetReached)),
        Some(StopReason::RoundLimit) if k == plan.outer => Ok(rec.finish(oracle.ledger(), StopReason::Completed)),
        Some(reason) => Err(Error::BudgetExhausted(Box::new(rec.finish(oracle.ledger(), reason)))),
    }
}
