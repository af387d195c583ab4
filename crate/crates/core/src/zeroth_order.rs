//! Gradient-free oracles: two-point estimates and gradient-free sliding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, Result};
use crate::objectives::{Oracle, Problem, Scope, Vector};
use crate::optimizers::sgd::SuffixAverage;
use crate::optimizers::sliding::run_sliding;
use crate::optimizers::{mean_of, CompositeProblem, InnerOracle, StepSchedule};
use crate::rng::{gaussian, stream, unit_sphere, Purpose};
use crate::trace::{Recorder, RunBudget, RunTrace};

/// Smoothing radius; directions are uniform on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub tau: f64,
}

impl SmoothingConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let c = Self { tau };
        c.validate()?;
        Ok(c)
    }

    /// `τ = 1e-4·R`.
    pub fn for_radius(r: f64) -> Result<Self> {
        Self::new(1e-4 * r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            config(format!("smoothing radius must be positive, got {}", self.tau))
        }
    }
}

/// `g = (n/(2τ))·(f(x+τe, ξ) − f(x−τe, ξ))·e` with `e` uniform on the sphere and
/// one noise realization `ξ` shared by both evaluations.
///
/// `value(point, ξ)` is called exactly twice. `E g` is the gradient of the
/// spherical smoothing of `f`.
pub fn two_point_estimate<F, R>(mut value: F, x: &Vector, config: SmoothingConfig, rng: &mut R) -> Result<Vector>
where
    F: FnMut(&Vector, Option<f64>) -> Result<f64>,
    R: Rng + ?Sized,
{
    config.validate()?;
    let n = x.len();
    let e = unit_sphere(rng, n);
    let xi = gaussian(rng);
    let plus = value(&(x + &e * config.tau), Some(xi))?;
    let minus = value(&(x - &e * config.tau), Some(xi))?;
    Ok(e * (n as f64 * (plus - minus) / (2.0 * config.tau)))
}

/// Two-point estimate of `f_k` (or `f`) through the counted value oracle.
pub fn oracle_two_point<R: Rng + ?Sized>(
    oracle: &mut Oracle<'_>,
    scope: Scope,
    x: &Vector,
    config: SmoothingConfig,
    rng: &mut R,
) -> Result<Vector> {
    two_point_estimate(|p, xi| oracle.function_value(scope, p, xi), x, config, rng)
}

/// SGD driven by two-point estimates of every node's objective.
///
/// Reporting follows [`sgd`](crate::optimizers::sgd): last iterate for the
/// strongly convex schedule, suffix average otherwise.
pub fn zo_sgd(
    problem: &Problem,
    x0: &Vector,
    smoothing: SmoothingConfig,
    schedule: StepSchedule,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    let m = problem.nodes();
    check_dim(n, x0.len())?;
    smoothing.validate()?;
    let profile = *problem.profile();
    schedule.validate(&profile)?;
    let r = (x0 - &problem.optimum().x_star).norm().max(1e-12);

    let mut oracle = Oracle::new(problem);
    let mut rec = Recorder::new("zo_sgd", seed, m, budget)?;
    rec.meta("tau", smoothing.tau);
    let mut x = x0.clone();
    let mut average = SuffixAverage::new(n);
    let report_last = schedule.reports_last_iterate();

    let mut stop = rec.observe(0, oracle.ledger(), problem.suboptimality(&x), 0.0)?;
    let mut round = 0u64;
    while stop.is_none() {
        let h = schedule.step(round, &profile, r);
        round += 1;
        let g = mean_of((0..m).map(|k| {
            let mut rng = stream(seed, k, round, Purpose::Direction);
            oracle_two_point(&mut oracle, Scope::Node(k), &x, smoothing, &mut rng)
        }))?;
        x.axpy(-h, &g, 1.0);
        if m > 1 {
            rec.communicate(1, m as u64 * n as u64);
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

/// Gradient sliding whose inner loop sees the nonsmooth term only through
/// two-point value differences.
///
/// The inner schedule uses the estimator's second-moment bound
/// `M_eff² = (n+1)·M²`. The default smoothing radius is
/// `min(1e-4·R, ε/(4M))`, which keeps the smoothing bias below `ε/4`.
pub fn gradient_free_sliding(
    problem: &CompositeProblem,
    x0: &Vector,
    eps: f64,
    smoothing: Option<SmoothingConfig>,
    budget: &RunBudget,
    seed: u64,
) -> Result<RunTrace> {
    let n = problem.dim();
    check_dim(n, x0.len())?;
    let m_bound = problem.nonsmooth().lipschitz(n);
    let r = (x0 - &problem.optimum().x_star).norm().max(1e-12);
    let tau = match smoothing {
        Some(c) => {
            c.validate()?;
            c.tau
        }
        None if m_bound > 0.0 => (1e-4 * r).min(eps / (4.0 * m_bound)),
        None => 1e-4 * r,
    };
    let m_eff = ((n + 1) as f64).sqrt() * m_bound;
    run_sliding(
        "gradient_free_sliding",
        problem,
        x0,
        eps,
        None,
        InnerOracle::TwoPoint { tau },
        m_eff,
        budget,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{fixture_rng, Component, Matrix, QuadraticComponent};
    use crate::optimizers::Nonsmooth;
    use crate::trace::StopReason;

    #[test]
    fn constant_function_gives_zero() {
        let mut rng = fixture_rng(1);
        let x = Vector::from_row_slice(&[0.3, -1.0, 2.0]);
        for _ in 0..100 {
            let g = two_point_estimate(|_, _| Ok(4.2), &x, SmoothingConfig::new(0.1).unwrap(), &mut rng).unwrap();
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn one_dimension_is_central_difference() {
        let f = |x: &Vector| x[0].powi(3) + 2.0 * x[0];
        let x = Vector::from_element(1, 0.7);
        let tau = 1e-3;
        let expected = (f(&Vector::from_element(1, 0.7 + tau)) - f(&Vector::from_element(1, 0.7 - tau))) / (2.0 * tau);
        let mut rng = fixture_rng(2);
        for _ in 0..20 {
            let g = two_point_estimate(|p, _| Ok(f(p)), &x, SmoothingConfig::new(tau).unwrap(), &mut rng).unwrap();
            assert!((g[0] - expected).abs() < 1e-9 * expected.abs());
        }
    }

    #[test]
    fn estimator_is_even_in_direction() {
        let f = |x: &Vector| x.iter().map(|v| v.abs().powf(1.5)).sum::<f64>();
        let x = Vector::from_row_slice(&[0.5, -0.2, 1.0, 0.0]);
        let tau = 0.05;
        let e = Vector::from_row_slice(&[0.5, 0.5, -0.5, 0.5]);
        let est = |d: &Vector| d * (4.0 * (f(&(&x + d * tau)) - f(&(&x - d * tau))) / (2.0 * tau));
        assert_eq!(est(&e), est(&-&e));
    }

    #[test]
    fn noise_realization_is_shared() {
        let q = QuadraticComponent::new(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let p = Problem::from_components(vec![vec![Component::Quadratic(q)]]).unwrap().with_value_noise(5.0).unwrap();
        let mut oracle = Oracle::new(&p);
        let x = Vector::from_row_slice(&[1.0, 0.0]);
        let mut rng = fixture_rng(3);
        let g = oracle_two_point(&mut oracle, Scope::Global, &x, SmoothingConfig::new(1e-3).unwrap(), &mut rng).unwrap();
        // Additive noise cancels, leaving n·⟨x, e⟩·e up to rounding.
        let e = &g / g.norm();
        let exact = &e * (2.0 * x.dot(&e));
        assert!((g - exact).norm() < 1e-8);
        assert_eq!(oracle.ledger().node(0).value, 2);
    }

    #[test]
    fn zo_sgd_converges_on_scalar_quadratic() {
        let q = QuadraticComponent::new(Matrix::identity(1, 1), Vector::zeros(1)).unwrap();
        let p = Problem::from_components(vec![vec![Component::Quadratic(q)]]).unwrap();
        let trace = zo_sgd(
            &p,
            &Vector::from_element(1, 1.0),
            SmoothingConfig::new(1e-6).unwrap(),
            StepSchedule::Constant { h: 0.5 },
            &RunBudget::rounds(60),
            0,
        )
        .unwrap();
        // |x| < 1e-3 means f < 5e-7 for x²/2; suffix averaging keeps the last half.
        assert!(trace.final_subopt() < 5e-7, "{}", trace.final_subopt());
        assert_eq!(trace.last().unwrap().calls_value, 120);
    }

    #[test]
    fn gradient_free_sliding_with_vacuous_term_matches_plain_sliding() {
        let q = QuadraticComponent::new(Matrix::identity(3, 3), Vector::from_row_slice(&[1.0, 0.0, -1.0])).unwrap();
        let p = Problem::from_components(vec![vec![Component::Quadratic(q)]]).unwrap();
        let c = CompositeProblem::new(p, Nonsmooth::Zero).unwrap();
        let x0 = Vector::zeros(3);
        let free = gradient_free_sliding(&c, &x0, 1e-4, None, &RunBudget::rounds(u64::MAX), 0).unwrap();
        let plain = crate::optimizers::gradient_sliding(&c, &x0, 1e-4, None, &RunBudget::rounds(u64::MAX), 0).unwrap();
        assert_eq!(free.stop, Some(StopReason::Completed));
        let (a, b) = (free.last().unwrap(), plain.last().unwrap());
        assert_eq!(a.calls_full, b.calls_full);
        assert_eq!(a.calls_value, 2 * a.round);
        assert_eq!(b.calls_stoch, b.round);
        assert!(free.final_subopt() <= 1e-4);
    }
}
