//! Built-in scaling-law and contract checks.
//!
//! Each criterion runs small experiments, fits log-log slopes where a rate is
//! claimed and returns a pass/fail verdict with the measured numbers.

use serde_json::json;

use crate::compressors::{rand_k, top_k, Compressor};
use crate::consensus::{column_means, consensus_error, gossip_round, ChebyshevIter, CommCounter};
use crate::error::{Error, Result};
use crate::harness::{fit_loglog, run_experiment, write_csv, ExperimentConfig, SlopeFit};
use crate::objectives::{
    inner_accuracy, regularize, required_sample_size, Component, LogisticSpec, Matrix, NoiseModel, Oracle,
    Problem, QuadraticComponent, QuadraticSpec, Scope, SmoothnessProfile, Spectrum, Vector,
};
use crate::optimizers::{
    accelerated_gradient, compressed_distributed_sgd, decentralized_accelerated, gradient_sliding, local_sgd,
    variance_reduced, AcceleratedOptions, CompositeProblem, DecentralizedAcceleratedOptions, LocalSgdOptions,
    Nonsmooth, StepSchedule, VrOptions,
};
use crate::rng::{gaussian, stream, Purpose};
use crate::topology::{gossip_matrix, make_graph, Generator, GraphKind, TopologySchedule};
use crate::trace::{RunBudget, RunTrace};
use crate::zeroth_order::{two_point_estimate, SmoothingConfig};

const SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "consensus rates"),
    (2, "sgd rate"),
    (3, "accelerated rates"),
    (4, "variance reduction advantage"),
    (5, "gradient sliding complexity"),
    (6, "decentralized accelerated rates"),
    (7, "local sgd variance reduction"),
    (8, "compression contracts"),
    (9, "regularization reduction"),
    (10, "oracle hygiene"),
];

/// Runs one criterion; unknown ids and internal errors count as failures.
pub fn run_criterion(id: u8) -> CriterionOutcome {
    let name = CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown", |(_, n)| *n);
    let result = match id {
        1 => consensus_rates(),
        2 => sgd_rate(),
        3 => accelerated_rates(),
        4 => variance_reduction_advantage(),
        5 => sliding_complexity(),
        6 => decentralized_rates(),
        7 => local_sgd_variance(),
        8 => compression_contracts(),
        9 => regularization_reduction(),
        10 => oracle_hygiene(),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    };
    match result {
        Ok((passed, detail)) => CriterionOutcome { id, name, passed, detail },
        Err(e) => CriterionOutcome { id, name, passed: false, detail: format!("error: {e}") },
    }
}

/// Runs every criterion, concurrently, in id order.
pub fn run_all() -> Vec<CriterionOutcome> {
    use rayon::prelude::*;
    CRITERIA.par_iter().map(|(id, _)| run_criterion(*id)).collect()
}

type Check = Result<(bool, String)>;

fn slope(x_name: &str, y_name: &str, xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    fit_loglog(x_name, y_name, xs, ys)
}

fn fmt_slope(label: &str, fit: &SlopeFit, expected: f64, tol: f64) -> String {
    format!("{label} slope {:.3} (want {expected}±{tol})", fit.slope)
}

fn experiment(value: serde_json::Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

fn rounds_to(trace: &RunTrace, eps: f64) -> Result<u64> {
    trace
        .first_below(eps)
        .map(|r| r.round)
        .ok_or_else(|| Error::Config(format!("{} did not reach {eps:e}", trace.algorithm)))
}

fn consensus_rates() -> Check {
    let sizes = [16usize, 32, 64, 128];
    let mut chis = Vec::new();
    let mut plain = Vec::new();
    let mut fast = Vec::new();
    let mut drift = 0.0f64;
    for &m in &sizes {
        let w = gossip_matrix(&make_graph(GraphKind::Ring, m)?)?;
        let mut rng = stream(SEED, 0, m as u64, Purpose::Init);
        let x0 = Matrix::from_fn(m, 3, |_, _| gaussian(&mut rng));
        let means = column_means(&x0);
        let goal = 1e-6 * consensus_error(&x0);
        let cap = 100 * m * m;

        let mut x = x0.clone();
        let mut counter = CommCounter::default();
        while consensus_error(&x) > goal {
            if counter.rounds as usize > cap {
                return Err(Error::Config(format!("plain gossip on ring {m} exceeded {cap} rounds")));
            }
            x = gossip_round(&w, &x, &mut counter)?;
            drift = drift.max((column_means(&x) - &means).amax());
        }
        let mut it = ChebyshevIter::new(&w, &x0)?;
        while consensus_error(it.state()) > goal {
            if it.steps() > cap {
                return Err(Error::Config(format!("Chebyshev on ring {m} exceeded {cap} rounds")));
            }
            it.step();
            drift = drift.max((column_means(it.state()) - &means).amax());
        }
        chis.push(w.chi());
        plain.push(counter.rounds as f64);
        fast.push(it.steps() as f64);
    }
    let p = slope("chi", "plain rounds", &chis, &plain)?;
    let c = slope("chi", "chebyshev rounds", &chis, &fast)?;
    let passed = p.within(1.0, 0.15) && c.within(0.5, 0.15) && drift <= 1e-10;
    Ok((
        passed,
        format!(
            "{}, {}, max mean drift {drift:.1e} (want <= 1e-10)",
            fmt_slope("plain", &p, 1.0, 0.15),
            fmt_slope("chebyshev", &c, 0.5, 0.15)
        ),
    ))
}

fn sgd_rate() -> Check {
    let cfg = experiment(json!({
        "version": 1,
        "seed": SEED,
        "repeats": 20,
        "problem": {
            "generator": {"family": "quadratic", "nodes": 1, "dim": 10, "mu": 1.0, "l": 4.0},
            "noise": {"model": "gaussian", "sigma2": 1.0}
        },
        "algorithm": {"name": "sgd", "schedule": {"kind": "inverse_mu"}},
        "budget": {"max_rounds": 100_000, "record_every": 1000}
    }))?;
    let out = run_experiment(&cfg)?;
    let grid = [1_000u64, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000];
    let mut ks = Vec::new();
    let mut errs = Vec::new();
    for (k, e) in out.aggregate.rounds.iter().zip(&out.aggregate.mean_subopt) {
        if grid.contains(k) {
            ks.push(*k as f64);
            errs.push(*e);
        }
    }
    let fit = slope("k", "mean subopt", &ks, &errs)?;
    Ok((fit.within(-1.0, 0.2), format!("{} over k in [1e3, 1e5], 20 seeds", fmt_slope("subopt", &fit, -1.0, 0.2))))
}

fn quadratic(nodes: usize, per_node: usize, dim: usize, mu: f64, l: f64, heterogeneity: f64, seed: u64) -> Result<Problem> {
    spread_quadratic(nodes, per_node, dim, mu, l, heterogeneity, 1.0, seed)
}

/// Random quadratic whose start point lies `distance` away from the optimum.
#[allow(clippy::too_many_arguments)]
fn spread_quadratic(
    nodes: usize,
    per_node: usize,
    dim: usize,
    mu: f64,
    l: f64,
    heterogeneity: f64,
    distance: f64,
    seed: u64,
) -> Result<Problem> {
    Problem::random_quadratic(
        &QuadraticSpec {
            nodes,
            components_per_node: per_node,
            dim,
            mu,
            l,
            heterogeneity,
            component_spread: 0.0,
            spectrum: Spectrum::Linear,
            start_distance: distance,
        },
        seed,
    )
}

fn accelerated_rates() -> Check {
    let mut problems = Vec::new();
    for s in 0..4 {
        problems.push((quadratic(1, 1, 20, 0.0, 1.0, 0.0, SEED + s)?, 2000u64));
    }
    let logistic = Problem::logistic(
        &LogisticSpec { nodes: 2, components_per_node: 2, dim: 5, samples_per_component: 20, signal: 1.0 },
        SEED,
    )?;
    problems.push((logistic, 500));

    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (p, n_iter) in &problems {
        let x0 = p.initial_point();
        let l = p.profile().l;
        let r2 = (x0 - &p.optimum().x_star).norm_squared();
        let opts = AcceleratedOptions { mu: Some(0.0), ..Default::default() };
        let trace = accelerated_gradient(p, x0, opts, &RunBudget::rounds(*n_iter), SEED)?;
        for rec in trace.records.iter().filter(|r| r.round > 0) {
            let bound = 4.0 * l * r2 / ((rec.round + 1) as f64).powi(2);
            checked += 1;
            worst = worst.max(rec.subopt / bound);
            if rec.subopt > bound {
                violations += 1;
            }
        }
    }

    let kappas = [1e2, 1e3, 1e4];
    let mut iters = Vec::new();
    for &kappa in &kappas {
        // R = √κ keeps μR² fixed, so only the condition number changes.
        let p = spread_quadratic(1, 1, 20, 1.0 / kappa, 1.0, 0.0, kappa.sqrt(), SEED)?;
        let budget = RunBudget::target(1e-9, 1_000_000);
        let trace = accelerated_gradient(&p, p.initial_point(), AcceleratedOptions::default(), &budget, SEED)?;
        iters.push(rounds_to(&trace, 1e-9)? as f64);
    }
    let fit = slope("L/mu", "iterations", &kappas, &iters)?;
    let passed = violations == 0 && fit.within(0.5, 0.15);
    Ok((
        passed,
        format!(
            "certificate held at {}/{checked} iterates (max ratio {worst:.3}), {}",
            checked - violations,
            fmt_slope("iterations-to-1e-9", &fit, 0.5, 0.15)
        ),
    ))
}

fn variance_reduction_advantage() -> Check {
    let components = 1000;
    let p = quadratic(1, components, 10, 1e-4, 1.0, 1.0, SEED)?;
    let x0 = p.initial_point();
    let eps = 1e-6;
    let agd = accelerated_gradient(&p, x0, AcceleratedOptions::default(), &RunBudget::target(eps, 1_000_000), SEED)?;
    let vr = variance_reduced(&p, x0, VrOptions::default(), &RunBudget::target(eps, 100_000_000), SEED)?;
    rounds_to(&agd, eps)?;
    rounds_to(&vr, eps)?;
    let agd_cost = agd.component_equivalents(components) as f64;
    let vr_cost = vr.component_equivalents(components) as f64;
    let ratio = vr_cost / agd_cost;
    Ok((
        ratio <= 0.2,
        format!("component gradients to {eps:e}: variance reduced {vr_cost}, accelerated {agd_cost}, ratio {ratio:.3} (want <= 0.2)"),
    ))
}

fn sliding_complexity() -> Check {
    let center = Vector::from_row_slice(&[1.0, -0.5]);
    let smooth = QuadraticComponent::new(Matrix::identity(2, 2), center)?;
    let smooth = Problem::from_components(vec![vec![Component::Quadratic(smooth)]])?;
    let problem = CompositeProblem::new(smooth, Nonsmooth::L1 { weight: 0.03 })?;
    let x0 = Vector::zeros(2);
    let targets = [1e-2, 1e-3, 1e-4, 1e-5];
    let mut inv = Vec::new();
    let mut full = Vec::new();
    let mut sub = Vec::new();
    let mut missed = Vec::new();
    for &eps in &targets {
        let trace = gradient_sliding(&problem, &x0, eps, None, &RunBudget::rounds(u64::MAX), SEED)?;
        let last = trace.last().ok_or_else(|| Error::Config("empty sliding trace".into()))?;
        if last.subopt > eps {
            missed.push(format!("{eps:e}: gap {:.2e}", last.subopt));
        }
        inv.push(1.0 / eps);
        full.push(last.calls_full as f64);
        sub.push(last.calls_stoch as f64);
    }
    let f = slope("1/eps", "gradient calls", &inv, &full)?;
    let g = slope("1/eps", "subgradient calls", &inv, &sub)?;
    let passed = f.within(0.5, 0.15) && g.within(2.0, 0.3) && missed.is_empty();
    let accuracy = if missed.is_empty() { "all targets met".to_string() } else { format!("missed {}", missed.join(", ")) };
    Ok((
        passed,
        format!("{}, {}, {accuracy}", fmt_slope("gradient", &f, 0.5, 0.15), fmt_slope("subgradient", &g, 2.0, 0.3)),
    ))
}

fn decentralized_rates() -> Check {
    let eps = 1e-6;
    let budget = RunBudget::target(eps, 1_000_000);
    let ring = |m: usize| TopologySchedule::new(Generator::Static { graph: GraphKind::Ring, m });

    let mut chis = Vec::new();
    let mut comm = Vec::new();
    for m in [8usize, 16, 32, 64] {
        let p = quadratic(m, 1, 5, 0.1, 1.0, 1.0, SEED)?;
        let topo = ring(m)?;
        let trace = decentralized_accelerated(&p, p.initial_point(), &topo, Default::default(), &budget, SEED)?;
        rounds_to(&trace, eps)?;
        chis.push(topo.chi());
        comm.push(trace.first_below(eps).map_or(0, |r| r.comm_rounds) as f64);
    }
    let by_chi = slope("chi", "communication rounds", &chis, &comm)?;

    let topo = ring(8)?;
    let kappas = [1e2, 1e3, 1e4];
    let mut comm = Vec::new();
    let mut worst_ratio = 0.0f64;
    for &kappa in &kappas {
        let p = spread_quadratic(8, 1, 5, 1.0 / kappa, 1.0, 1.0, kappa.sqrt(), SEED)?;
        let opts = DecentralizedAcceleratedOptions::default();
        let trace = decentralized_accelerated(&p, p.initial_point(), &topo, opts, &budget, SEED)?;
        let hit = trace.first_below(eps).ok_or_else(|| Error::Config("decentralized run missed the target".into()))?;
        comm.push(hit.comm_rounds as f64);
        let central_opts = AcceleratedOptions { l: Some(p.profile().l_node_max), ..Default::default() };
        let central = accelerated_gradient(&p, p.initial_point(), central_opts, &budget, SEED)?;
        let central_hit = central.first_below(eps).ok_or_else(|| Error::Config("centralized run missed the target".into()))?;
        let ratio = hit.calls_full as f64 / central_hit.calls_full as f64;
        worst_ratio = worst_ratio.max(ratio.max(1.0 / ratio));
    }
    let by_kappa = slope("L/mu", "communication rounds", &kappas, &comm)?;
    let passed = by_chi.within(0.5, 0.15) && by_kappa.within(0.5, 0.15) && worst_ratio <= 3.0;
    Ok((
        passed,
        format!(
            "{}, {}, gradient calls within {worst_ratio:.2}x of centralized (want <= 3)",
            fmt_slope("vs chi", &by_chi, 0.5, 0.15),
            fmt_slope("vs L/mu", &by_kappa, 0.5, 0.15)
        ),
    ))
}

fn identical_nodes(m: usize, sigma2: f64) -> Result<Problem> {
    let a = Matrix::from_diagonal(&Vector::from_row_slice(&[1.0, 0.5, 0.25]));
    let q = QuadraticComponent::new(a, Vector::zeros(3))?;
    let p = Problem::from_components(vec![vec![Component::Quadratic(q)]; m])?
        .with_initial_point(Vector::from_element(3, 1.0 / 3f64.sqrt()))?;
    if sigma2 > 0.0 {
        p.with_noise(NoiseModel::Gaussian { sigma2 })
    } else {
        Ok(p)
    }
}

fn local_sgd_variance() -> Check {
    let (rounds, local_steps, seeds) = (100u64, 100u64, 20u64);
    let opts = LocalSgdOptions { rounds, local_steps, step: None };
    let budget = RunBudget::rounds(rounds).every(rounds);
    let nodes = [1usize, 4, 16, 64];
    let mut errors = Vec::new();
    for &m in &nodes {
        let noisy = identical_nodes(m, 1.0)?;
        let x0 = noisy.initial_point().clone();
        let mut total = 0.0;
        let mut step = 0.0;
        for s in 0..seeds {
            let trace = local_sgd(&noisy, &x0, opts, &budget, SEED + s)?;
            step = trace.meta["step"];
            total += trace.final_subopt();
        }
        let exact = identical_nodes(m, 0.0)?;
        let deterministic = local_sgd(&exact, &x0, LocalSgdOptions { step: Some(step), ..opts }, &budget, SEED)?;
        errors.push(total / seeds as f64 - deterministic.final_subopt());
    }
    let ms: Vec<f64> = nodes.iter().map(|&m| m as f64).collect();
    let fit = slope("m", "statistical error", &ms, &errors)?;
    let optimization = optimization_exponent()?;
    Ok((
        fit.within(-0.5, 0.15),
        format!(
            "{} at KT = {}, {seeds} seeds; noiseless error vs KT slope {:.3} (reported only)",
            fmt_slope("error vs m", &fit, -0.5, 0.15),
            rounds * local_steps,
            optimization.slope
        ),
    ))
}

/// Log-log slope of the noiseless local SGD error in `KT` on a nearly flat spectrum.
fn optimization_exponent() -> Result<SlopeFit> {
    let n = 20;
    let a = Matrix::from_diagonal(&Vector::from_fn(n, |i, _| 0.5f64.powi(i as i32)));
    let q = QuadraticComponent::new(a, Vector::zeros(n))?;
    let p = Problem::from_components(vec![vec![Component::Quadratic(q)]; 4])?
        .with_initial_point(Vector::from_element(n, 1.0 / (n as f64).sqrt()))?;
    let mut kts = Vec::new();
    let mut errs = Vec::new();
    for rounds in [10u64, 20, 40, 80] {
        let opts = LocalSgdOptions { rounds, local_steps: 10, step: Some(0.5) };
        let trace = local_sgd(&p, p.initial_point(), opts, &RunBudget::rounds(rounds).every(rounds), SEED)?;
        kts.push((rounds * 10) as f64);
        errs.push(trace.final_subopt());
    }
    slope("KT", "noiseless error", &kts, &errs)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut with_last = subsets(n - 1, k - 1);
    with_last.iter_mut().for_each(|s| s.push(n - 1));
    let mut out = subsets(n - 1, k);
    out.extend(with_last);
    out
}

fn compression_contracts() -> Check {
    let mut notes = Vec::new();
    let mut passed = true;

    let mut rng = stream(SEED, 0, 0, Purpose::Compression);
    let mut topk_violations = 0;
    for t in 0..10_000u64 {
        let n = 1 + (t % 50) as usize;
        let k = 1 + (t / 50) as usize % n;
        let z = Vector::from_fn(n, |_, _| gaussian(&mut rng));
        let err = (top_k(&z, k)? - &z).norm_squared();
        if err > (1.0 - k as f64 / n as f64) * z.norm_squared() * (1.0 + 1e-12) {
            topk_violations += 1;
        }
    }
    passed &= topk_violations == 0;
    notes.push(format!("topk contraction violated {topk_violations}/10000"));

    let mut worst_identity = 0.0f64;
    let mut stray_samples = 0;
    for n in 1..=6usize {
        for k in 1..=n {
            let z = Vector::from_fn(n, |_, _| gaussian(&mut rng));
            let scale = n as f64 / k as f64;
            let outcomes: Vec<Vector> = subsets(n, k)
                .iter()
                .map(|s| Vector::from_fn(n, |i, _| if s.contains(&i) { scale * z[i] } else { 0.0 }))
                .collect();
            let count = outcomes.len() as f64;
            let mean = outcomes.iter().fold(Vector::zeros(n), |acc, q| acc + q) / count;
            let variance = outcomes.iter().map(|q| (q - &z).norm_squared()).sum::<f64>() / count;
            let omega = Compressor::RandKScaled { k }.variance_factor(n).unwrap_or(f64::NAN);
            let norm2 = z.norm_squared();
            worst_identity = worst_identity
                .max((mean - &z).amax() / z.amax())
                .max((variance - omega * norm2).abs() / norm2);
            for _ in 0..50 {
                let q = rand_k(&z, k, &mut rng, true)?;
                if !outcomes.iter().any(|o| (o - &q).amax() <= 1e-15 * z.amax()) {
                    stray_samples += 1;
                }
            }
        }
    }
    passed &= worst_identity <= 1e-12 && stray_samples == 0;
    notes.push(format!("randk enumeration error {worst_identity:.1e}, {stray_samples} samples off support"));

    let n = 64;
    let z = Vector::from_fn(n, |_, _| gaussian(&mut rng));
    let mut worst_mc = 0.0f64;
    for k in [1usize, 8, 32] {
        let draws = 100_000;
        let sum: f64 = (0..draws).map(|_| rand_k(&z, k, &mut rng, true).map(|q| (q - &z).norm_squared())).sum::<Result<f64>>()?;
        let predicted = (n as f64 / k as f64 - 1.0) * z.norm_squared();
        worst_mc = worst_mc.max((sum / draws as f64 - predicted).abs() / predicted);
    }
    passed &= worst_mc <= 0.02;
    notes.push(format!("n=64 Monte Carlo variance off by {:.2}%", 100.0 * worst_mc));

    let (inflation, sent_ok) = compressed_inflation()?;
    let q = 0.5;
    let relative = inflation * q;
    passed &= (1.0..=4.0).contains(&relative) && sent_ok;
    notes.push(format!(
        "randk(n/2) needs {inflation:.2}x the rounds of identity = {relative:.2} x 1/q (want 1..4), message sizes {}",
        if sent_ok { "match" } else { "mismatch" }
    ));
    Ok((passed, notes.join("; ")))
}

/// Mean rounds to `1e-3` with scaled RandK(n/2) over rounds without compression,
/// and whether the transmitted counts equal `rounds·m·2k` and `rounds·m·n`.
fn compressed_inflation() -> Result<(f64, bool)> {
    let (m, n, eps) = (4usize, 20usize, 1e-3);
    let p = quadratic(m, 1, n, 0.1, 1.0, 0.0, SEED)?;
    let x0 = p.initial_point();
    let schedule = StepSchedule::Constant { h: 1.0 };
    let budget = RunBudget::target(eps, 100_000);
    let identity = compressed_distributed_sgd(&p, x0, Compressor::Identity, schedule, &budget, SEED)?;
    let base = rounds_to(&identity, eps)? as f64;
    let mut sent_ok = identity.last().is_some_and(|r| r.sent_numbers == r.round * (m * n) as u64);
    let k = n / 2;
    let seeds = 10;
    let mut total = 0.0;
    for s in 0..seeds {
        let trace = compressed_distributed_sgd(&p, x0, Compressor::RandKScaled { k }, schedule, &budget, SEED + s)?;
        total += rounds_to(&trace, eps)? as f64;
        sent_ok &= trace.last().is_some_and(|r| r.sent_numbers == r.round * (m * 2 * k) as u64);
    }
    Ok((total / seeds as f64 / base, sent_ok))
}

fn regularization_reduction() -> Check {
    let p = quadratic(1, 1, 10, 0.0, 1.0, 0.0, SEED)?;
    let x0 = p.initial_point().clone();
    let r = (&x0 - &p.optimum().x_star).norm();
    let mut rng = stream(SEED, 0, 9, Purpose::Init);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for eps in [1e-1, 1e-2, 1e-3] {
        let reg = regularize(&p, &x0, eps, r)?;
        let center = reg.optimum().x_star.clone();
        let mut candidates = vec![center.clone()];
        for _ in 0..20 {
            let d = Vector::from_fn(10, |_, _| gaussian(&mut rng));
            let curvature = 2.0 * reg.suboptimality(&(&center + &d));
            candidates.push(&center + d * (eps / curvature).sqrt());
        }
        for x in &candidates {
            let inner = reg.suboptimality(x);
            let outer = p.suboptimality(x);
            worst = worst.max(outer / eps);
            if inner > 0.5 * eps * (1.0 + 1e-9) || outer > eps {
                failures += 1;
            }
        }
    }

    let sc = SmoothnessProfile::new(1.0, 0.5, 2.0, 0.0, 4.0, 1.0)?;
    let convex = SmoothnessProfile::new(1.0, 0.0, 2.0, 0.0, 4.0, 1.0)?;
    let formulas_match = required_sample_size(&sc, 0.25)? == 32
        && required_sample_size(&convex, 0.25)? == 1024
        && inner_accuracy(&sc, 0.25)? == 0.0078125
        && inner_accuracy(&convex, 0.25)? == 0.000244140625;
    Ok((
        failures == 0 && formulas_match,
        format!(
            "{failures} eps/2-minimizers failed, worst original gap {worst:.3} eps (want <= 1); sample size and inner accuracy {}",
            if formulas_match { "match" } else { "differ" }
        ),
    ))
}

fn relative_fd_error(value: impl Fn(&Vector) -> f64, gradient: &Vector, x: &Vector) -> f64 {
    let h = 1e-5;
    let n = x.len();
    let mut fd = Vector::zeros(n);
    for i in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        fd[i] = (value(&plus) - value(&minus)) / (2.0 * h);
    }
    (fd - gradient).norm() / gradient.norm().max(1e-8)
}

fn oracle_hygiene() -> Check {
    let mut notes = Vec::new();
    let mut passed = true;

    let quad = Problem::random_quadratic(
        &QuadraticSpec {
            nodes: 2,
            components_per_node: 3,
            dim: 6,
            mu: 0.1,
            l: 2.0,
            heterogeneity: 1.0,
            component_spread: 0.5,
            spectrum: Spectrum::Geometric,
            start_distance: 1.0,
        },
        SEED,
    )?;
    let logistic = Problem::logistic(
        &LogisticSpec { nodes: 2, components_per_node: 3, dim: 6, samples_per_component: 10, signal: 2.0 },
        SEED,
    )?;
    let reg = regularize(&logistic, &Vector::from_element(6, 0.3), 0.1, 2.0)?;
    let mut rng = stream(SEED, 0, 0, Purpose::Init);
    let mut worst_fd = 0.0f64;
    for p in [&quad, &logistic, &reg] {
        let mut oracle = Oracle::new(p);
        for _ in 0..5 {
            let x = Vector::from_fn(6, |_, _| gaussian(&mut rng));
            for scope in [Scope::Global, Scope::Node(0), Scope::Node(1)] {
                let g = oracle.full_gradient(scope, &x)?;
                let probe = Oracle::new(p);
                let value = |y: &Vector| probe.clone().function_value(scope, y, None).unwrap_or(f64::NAN);
                worst_fd = worst_fd.max(relative_fd_error(value, &g, &x));
            }
            for j in 0..3 {
                let c = p.component(1, j);
                worst_fd = worst_fd.max(relative_fd_error(|y| c.value(y), &c.gradient(&x), &x));
            }
        }
    }
    passed &= worst_fd <= 1e-6;
    notes.push(format!("finite differences rel err {worst_fd:.1e}"));

    let a = Vector::from_row_slice(&[1.0, -2.0, 0.5, 3.0, 0.0]);
    let x = Vector::from_row_slice(&[0.2, 0.1, -0.4, 1.0, 2.0]);
    let draws = 100_000;
    let smoothing = SmoothingConfig::new(0.01)?;
    let mut sum = Vector::zeros(5);
    let mut sum_sq = Vector::zeros(5);
    for _ in 0..draws {
        let g = two_point_estimate(|y, _| Ok(a.dot(y) + 1.5), &x, smoothing, &mut rng)?;
        sum_sq += g.component_mul(&g);
        sum += g;
    }
    let d = draws as f64;
    let mean = &sum / d;
    let mut worst_z = 0.0f64;
    for i in 0..5 {
        let var = (sum_sq[i] / d - mean[i] * mean[i]).max(0.0);
        let se = (var / d).sqrt().max(1e-15);
        worst_z = worst_z.max((mean[i] - a[i]).abs() / se);
    }
    passed &= worst_z <= 4.0;
    notes.push(format!("two-point bias on a linear objective {worst_z:.2} SE"));

    let (mismatched, runs, nondeterministic) = reconcile_counters()?;
    passed &= mismatched == 0 && nondeterministic == 0;
    notes.push(format!("{mismatched}/{runs} traces disagree with their ledgers, {nondeterministic} CSVs differ on rerun"));
    Ok((passed, notes.join("; ")))
}

fn hygiene_configs() -> Vec<serde_json::Value> {
    let quad = json!({"family": "quadratic", "nodes": 4, "components_per_node": 3, "dim": 5, "mu": 0.2, "l": 1.0, "heterogeneity": 1.0, "component_spread": 0.3});
    let noisy = json!({"generator": quad, "noise": {"model": "gaussian", "sigma2": 0.5}});
    let ring = json!({"schedule": "static", "graph": {"kind": "ring"}, "m": 4});
    let budget = json!({"max_rounds": 60});
    let step = json!({"kind": "constant", "h": 0.2});
    let algorithms = [
        (json!({"name": "sgd", "schedule": {"kind": "inverse_mu"}}), None, noisy.clone()),
        (json!({"name": "accelerated_gradient", "batch": 4}), None, noisy.clone()),
        (json!({"name": "variance_reduced"}), None, json!({"generator": quad})),
        (json!({"name": "gradient_sliding", "eps": 0.05}), None, json!({"generator": quad, "nonsmooth": {"kind": "l1", "weight": 0.1}})),
        (json!({"name": "decentralized_sgd", "local_steps": 2, "step": step}), Some(json!({"kind": "randk_scaled", "k": 2})), noisy.clone()),
        (json!({"name": "decentralized_accelerated"}), None, json!({"generator": quad})),
        (json!({"name": "compressed_sgd", "schedule": step}), Some(json!({"kind": "randk_scaled", "k": 2})), noisy.clone()),
        (json!({"name": "zo_sgd", "schedule": step}), None, json!({"generator": quad, "value_noise": 0.1})),
    ];
    algorithms
        .into_iter()
        .map(|(algorithm, compressor, problem)| {
            let mut cfg = json!({
                "version": 1,
                "seed": SEED,
                "problem": problem,
                "topology": ring,
                "algorithm": algorithm,
                "budget": budget,
            });
            if let Some(c) = compressor {
                cfg["compressor"] = c;
            }
            cfg
        })
        .collect()
}

/// Runs every hygiene config twice; returns (ledger mismatches, runs, differing CSVs).
fn reconcile_counters() -> Result<(usize, usize, usize)> {
    let mut mismatched = 0;
    let mut nondeterministic = 0;
    let configs = hygiene_configs();
    for value in &configs {
        let cfg = experiment(value.clone())?;
        let csv = |trace: &RunTrace| -> Result<Vec<u8>> {
            let mut buf = Vec::new();
            write_csv(trace, &mut buf)?;
            Ok(buf)
        };
        let first = run_experiment(&cfg)?.traces.remove(0);
        let second = run_experiment(&cfg)?.traces.remove(0);
        if csv(&first)? != csv(&second)? {
            nondeterministic += 1;
        }
        let totals = first.ledger.max();
        let monotone = first.records.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            a.round < b.round
                && a.comm_rounds <= b.comm_rounds
                && a.sent_numbers <= b.sent_numbers
                && a.calls_full <= b.calls_full
                && a.calls_stoch <= b.calls_stoch
                && a.calls_comp <= b.calls_comp
                && a.calls_value <= b.calls_value
        });
        let matches = first.last().is_some_and(|r| {
            r.calls_full == totals.full
                && r.calls_stoch == totals.stochastic
                && r.calls_comp == totals.component
                && r.calls_value == totals.value
        });
        if !(monotone && matches) {
            mismatched += 1;
        }
    }
    Ok((mismatched, configs.len(), nondeterministic))
}
