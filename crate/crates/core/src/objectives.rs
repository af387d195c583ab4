//! Objectives, their smoothness constants, and the audited oracles.
//!
//! A [`Problem`] is the finite sum `f(x) = (1/m) Σ_k f_k(x)` with
//! `f_k(x) = (1/r) Σ_j f_k^j(x)`. Its components are immutable after
//! construction. All gradient and value access goes through an [`Oracle`],
//! which owns the per-node call [`Ledger`] of a single run.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, Error, Result};
use crate::rng::{self, gaussian};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Constants that parameterize every complexity formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    /// Gradient Lipschitz constant of the global objective.
    pub l: f64,
    pub mu: f64,
    /// Uniform bound `M` on the root second moment of stochastic gradients.
    pub m_bound: f64,
    pub sigma2: f64,
    pub r: f64,
    pub delta_f: f64,
    /// Largest component smoothness `max_{k,j} L(f_k^j)`.
    pub l_component_max: f64,
    pub l_component_mean: f64,
    /// Largest node smoothness `max_k L(f_k)`.
    pub l_node_max: f64,
    pub l_node_mean: f64,
}

impl SmoothnessProfile {
    /// Profile with all smoothness variants equal to `l`.
    pub fn new(l: f64, mu: f64, m_bound: f64, sigma2: f64, r: f64, delta_f: f64) -> Result<Self> {
        let p = Self {
            l,
            mu,
            m_bound,
            sigma2,
            r,
            delta_f,
            l_component_max: l,
            l_component_mean: l,
            l_node_max: l,
            l_node_mean: l,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.l, self.mu, self.m_bound, self.sigma2, self.r, self.delta_f]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return config("smoothness profile has non-finite entries");
        }
        if self.mu < 0.0 || self.l < self.mu * (1.0 - 1e-12) {
            return config(format!("need L >= mu >= 0, got L={} mu={}", self.l, self.mu));
        }
        if self.sigma2 < 0.0 || self.m_bound < 0.0 || self.delta_f < 0.0 {
            return config("sigma2, M and delta_f must be non-negative");
        }
        if self.r <= 0.0 {
            return config("R must be positive");
        }
        Ok(())
    }

    pub fn condition_number(&self) -> f64 {
        if self.mu > 0.0 {
            self.l / self.mu
        } else {
            f64::INFINITY
        }
    }

    fn shifted(mut self, w: f64) -> Self {
        self.l += w;
        self.mu += w;
        self.l_component_max += w;
        self.l_component_mean += w;
        self.l_node_max += w;
        self.l_node_mean += w;
        self
    }
}

/// `f(x) = ½ xᵀA x − bᵀx + c` with symmetric positive-semidefinite `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticComponent {
    pub a: Matrix,
    pub b: Vector,
    pub c: f64,
}

impl QuadraticComponent {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        Self::with_offset(a, b, 0.0)
    }

    pub fn with_offset(a: Matrix, b: Vector, c: f64) -> Result<Self> {
        let n = b.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension { expected: n, got: a.nrows() });
        }
        let scale = a.amax().max(f64::MIN_POSITIVE);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return config("quadratic matrix is not symmetric");
        }
        let (lo, hi) = extreme_eigenvalues(&a);
        if lo < -1e-12 * hi.abs().max(f64::MIN_POSITIVE) {
            return config(format!("quadratic matrix is not PSD (min eigenvalue {lo})"));
        }
        Ok(Self { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x) + self.c
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }
}

/// Average logistic loss `(1/s) Σ_i ln(1 + exp(−y_i a_iᵀx))` on fixed data.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticComponent {
    /// One sample per row.
    pub features: Matrix,
    /// Labels in {−1, +1}.
    pub labels: Vector,
}

impl LogisticComponent {
    pub fn new(features: Matrix, labels: Vector) -> Result<Self> {
        if features.nrows() == 0 {
            return config("logistic component needs at least one sample");
        }
        check_dim(features.nrows(), labels.len())?;
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return config("logistic labels must be ±1");
        }
        Ok(Self { features, labels })
    }

    fn margins(&self, x: &Vector) -> Vector {
        (&self.features * x).component_mul(&self.labels)
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let s = self.features.nrows() as f64;
        self.margins(x).iter().map(|&t| softplus(-t)).sum::<f64>() / s
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let s = self.features.nrows() as f64;
        let weights = self
            .margins(x)
            .zip_map(&self.labels, |t, y| -y * sigmoid(-t) / s);
        self.features.tr_mul(&weights)
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let s = self.features.nrows() as f64;
        let d = self.margins(x).map(|t| {
            let p = sigmoid(t);
            p * (1.0 - p) / s
        });
        let scaled = DMatrix::from_fn(self.features.nrows(), self.features.ncols(), |i, j| {
            self.features[(i, j)] * d[i]
        });
        self.features.tr_mul(&scaled)
    }

    /// `¼ XᵀX / s`, an upper bound on the Hessian everywhere.
    fn curvature_bound(&self) -> Matrix {
        self.features.tr_mul(&self.features) * (0.25 / self.features.nrows() as f64)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Quadratic(QuadraticComponent),
    Logistic(LogisticComponent),
}

impl Component {
    pub fn dim(&self) -> usize {
        match self {
            Component::Quadratic(q) => q.dim(),
            Component::Logistic(l) => l.features.ncols(),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Component::Quadratic(q) => q.value(x),
            Component::Logistic(l) => l.value(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match self {
            Component::Quadratic(q) => q.gradient(x),
            Component::Logistic(l) => l.gradient(x),
        }
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        match self {
            Component::Quadratic(q) => q.a.clone(),
            Component::Logistic(l) => l.hessian(x),
        }
    }

    fn curvature_bound(&self) -> Matrix {
        match self {
            Component::Quadratic(q) => q.a.clone(),
            Component::Logistic(l) => l.curvature_bound(),
        }
    }
}

impl From<QuadraticComponent> for Component {
    fn from(q: QuadraticComponent) -> Self {
        Component::Quadratic(q)
    }
}

impl From<LogisticComponent> for Component {
    fn from(l: LogisticComponent) -> Self {
        Component::Logistic(l)
    }
}

/// How stochastic gradients are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// Exact node gradient plus `N(0, σ²/n)` noise per coordinate.
    Gaussian { sigma2: f64 },
    /// Gradient of one uniformly drawn component of the node.
    Subsample,
}

/// `(w/2)‖x − center‖² + offset`, added to every component.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub weight: f64,
    pub center: Vector,
    pub offset: f64,
}

impl Regularizer {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.weight * (x - &self.center).norm_squared() + self.offset
    }

    fn add_gradient(&self, x: &Vector, g: &mut Vector) {
        g.axpy(self.weight, x, 1.0);
        g.axpy(-self.weight, &self.center, 1.0);
    }

    fn merge(&self, weight: f64, center: &Vector) -> Self {
        let w = self.weight + weight;
        let merged = (&self.center * self.weight + center * weight) / w;
        let offset = self.offset
            + 0.5
                * (self.weight * self.center.norm_squared() + weight * center.norm_squared()
                    - w * merged.norm_squared());
        Self { weight: w, center: merged, offset }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x_star: Vector,
    pub f_star: f64,
    /// True when obtained from the normal equations rather than an iterative solve.
    pub closed_form: bool,
}

/// Per-node oracle call counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounts {
    pub full: u64,
    pub stochastic: u64,
    pub component: u64,
    pub value: u64,
}

impl OracleCounts {
    pub fn total(&self) -> u64 {
        self.full + self.stochastic + self.component + self.value
    }

    fn max(self, o: Self) -> Self {
        Self {
            full: self.full.max(o.full),
            stochastic: self.stochastic.max(o.stochastic),
            component: self.component.max(o.component),
            value: self.value.max(o.value),
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            full: self.full + o.full,
            stochastic: self.stochastic + o.stochastic,
            component: self.component + o.component,
            value: self.value + o.value,
        }
    }
}

/// Oracle calls of one run, per node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    nodes: Vec<OracleCounts>,
}

impl Ledger {
    pub fn new(nodes: usize) -> Self {
        Self { nodes: vec![OracleCounts::default(); nodes] }
    }

    pub fn node(&self, k: usize) -> OracleCounts {
        self.nodes[k]
    }

    pub fn per_node(&self) -> &[OracleCounts] {
        &self.nodes
    }

    /// Elementwise maximum over nodes: the per-node cost axis.
    pub fn max(&self) -> OracleCounts {
        self.nodes.iter().fold(OracleCounts::default(), |a, &b| a.max(b))
    }

    pub fn total(&self) -> OracleCounts {
        self.nodes.iter().fold(OracleCounts::default(), |a, &b| a.add(b))
    }

    pub(crate) fn node_mut(&mut self, k: usize) -> &mut OracleCounts {
        &mut self.nodes[k]
    }

    fn each_mut(&mut self) -> impl Iterator<Item = &mut OracleCounts> {
        self.nodes.iter_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Node(usize),
    Global,
}

/// Parameters of the seeded random quadratic family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub nodes: usize,
    #[serde(default = "one")]
    pub components_per_node: usize,
    pub dim: usize,
    pub mu: f64,
    pub l: f64,
    /// Scale of the per-component linear terms around the planted optimum.
    #[serde(default)]
    pub heterogeneity: f64,
    /// Per-component Hessian scale factors are drawn from `[1 − s, 1 + s]`.
    #[serde(default)]
    pub component_spread: f64,
    #[serde(default)]
    pub spectrum: Spectrum,
    /// Distance of the default starting point from the optimum.
    #[serde(default = "unit")]
    pub start_distance: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectrum {
    #[default]
    Linear,
    Geometric,
}

/// Parameters of the seeded logistic-regression family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub nodes: usize,
    #[serde(default = "one")]
    pub components_per_node: usize,
    pub dim: usize,
    pub samples_per_component: usize,
    /// Norm of the planted separating direction.
    #[serde(default = "unit")]
    pub signal: f64,
}

/// Finite-sum objective distributed over `m` nodes with `r` components each.
#[derive(Debug, Clone)]
pub struct Problem {
    dim: usize,
    nodes: usize,
    per_node: usize,
    components: Vec<Component>,
    node_quadratic: Option<Vec<QuadraticComponent>>,
    global_quadratic: Option<QuadraticComponent>,
    component_lmax: Vec<f64>,
    node_lmax: Vec<f64>,
    global_lmax: f64,
    global_mu: f64,
    noise: Option<NoiseModel>,
    value_noise_std: f64,
    reg: Option<Regularizer>,
    x0: Vector,
    optimum: Optimum,
    profile: SmoothnessProfile,
}

impl Problem {
    /// Builds a problem from `nodes[k][j] = f_k^j`; every node needs the same count.
    pub fn from_components(nodes: Vec<Vec<Component>>) -> Result<Self> {
        let m = nodes.len();
        if m == 0 {
            return config("problem needs at least one node");
        }
        let r = nodes[0].len();
        if r == 0 {
            return config("each node needs at least one component");
        }
        if nodes.iter().any(|c| c.len() != r) {
            return config("all nodes must hold the same number of components");
        }
        let dim = nodes[0][0].dim();
        let components: Vec<Component> = nodes.into_iter().flatten().collect();
        for c in &components {
            check_dim(dim, c.dim())?;
        }

        let component_lmax: Vec<f64> =
            components.iter().map(|c| extreme_eigenvalues(&c.curvature_bound()).1).collect();

        let mut node_lmax = Vec::with_capacity(m);
        let mut global_bound = Matrix::zeros(dim, dim);
        for k in 0..m {
            let mut bound = Matrix::zeros(dim, dim);
            for c in &components[k * r..(k + 1) * r] {
                bound += c.curvature_bound();
            }
            bound /= r as f64;
            node_lmax.push(extreme_eigenvalues(&bound).1);
            global_bound += &bound;
        }
        global_bound /= m as f64;
        let (global_lo, global_lmax) = extreme_eigenvalues(&global_bound);

        let all_quadratic = components.iter().all(|c| matches!(c, Component::Quadratic(_)));
        let (node_quadratic, global_quadratic) = if all_quadratic {
            let nodes_q: Vec<QuadraticComponent> =
                (0..m).map(|k| average_quadratics(&components[k * r..(k + 1) * r])).collect();
            let global = average_quadratic_refs(nodes_q.iter(), dim);
            (Some(nodes_q), Some(global))
        } else {
            (None, None)
        };
        let global_mu = if all_quadratic { global_lo.max(0.0) } else { 0.0 };

        let mut p = Self {
            dim,
            nodes: m,
            per_node: r,
            components,
            node_quadratic,
            global_quadratic,
            component_lmax,
            node_lmax,
            global_lmax,
            global_mu,
            noise: None,
            value_noise_std: 0.0,
            reg: None,
            x0: Vector::zeros(dim),
            optimum: Optimum { x_star: Vector::zeros(dim), f_star: 0.0, closed_form: false },
            profile: SmoothnessProfile::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)?,
        };
        p.optimum = p.solve_optimum()?;
        p.profile = p.compute_profile();
        Ok(p)
    }

    /// Seeded random quadratic sum with global spectrum exactly `[mu, l]`.
    ///
    /// All components share a random eigenbasis `U`; component `(k, j)` has
    /// Hessian `U diag(λ ⊙ w_kj) Uᵀ` where the weights average to one over all
    /// components, so the global Hessian is `U diag(λ) Uᵀ`.
    pub fn random_quadratic(spec: &QuadraticSpec, seed: u64) -> Result<Self> {
        let QuadraticSpec { nodes, components_per_node: r, dim: n, mu, l, .. } = *spec;
        if nodes == 0 || r == 0 || n == 0 {
            return config("quadratic family needs nodes, components and dim >= 1");
        }
        if !(mu >= 0.0 && l >= mu && l > 0.0) {
            return config(format!("quadratic family needs l >= mu >= 0, l > 0 (got l={l}, mu={mu})"));
        }
        if !(0.0..1.0).contains(&spec.component_spread) {
            return config("component_spread must lie in [0, 1)");
        }
        let mut rng = rng::stream(seed, 0, 0, rng::Purpose::Data);
        let basis = random_orthogonal(n, &mut rng);
        let spectrum: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    return l;
                }
                let t = i as f64 / (n - 1) as f64;
                match spec.spectrum {
                    Spectrum::Linear => mu + (l - mu) * t,
                    Spectrum::Geometric if mu > 0.0 => mu * (l / mu).powf(t),
                    Spectrum::Geometric => l * t * t,
                }
            })
            .collect();

        let total = nodes * r;
        let s = spec.component_spread;
        let mut weights: Vec<Vec<f64>> = (0..total)
            .map(|_| (0..n).map(|_| if s > 0.0 { rng.random_range(1.0 - s..=1.0 + s) } else { 1.0 }).collect())
            .collect();
        for i in 0..n {
            let mean = weights.iter().map(|w| w[i]).sum::<f64>() / total as f64;
            for w in &mut weights {
                w[i] /= mean;
            }
        }

        let planted = Vector::from_fn(n, |_, _| gaussian(&mut rng));
        let mut offsets: Vec<Vector> =
            (0..total).map(|_| Vector::from_fn(n, |_, _| gaussian(&mut rng) * spec.heterogeneity)).collect();
        let mean_offset = offsets.iter().fold(Vector::zeros(n), |acc, o| acc + o) / total as f64;
        for o in &mut offsets {
            *o -= &mean_offset;
        }

        let mut grid = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let mut row = Vec::with_capacity(r);
            for j in 0..r {
                let idx = k * r + j;
                let diag = Vector::from_iterator(n, spectrum.iter().zip(&weights[idx]).map(|(a, b)| a * b));
                let mut a = &basis * Matrix::from_diagonal(&diag) * basis.transpose();
                a = (&a + a.transpose()) * 0.5;
                let b = &a * &planted + &offsets[idx];
                row.push(Component::Quadratic(QuadraticComponent { a, b, c: 0.0 }));
            }
            grid.push(row);
        }
        let mut p = Self::from_components(grid)?;
        // Spectrum endpoints are known exactly by construction.
        p.global_lmax = l;
        p.global_mu = mu;
        let dir = unit_direction(&mut rng, n);
        let x0 = &p.optimum.x_star + dir * spec.start_distance;
        p.with_initial_point(x0)
    }

    /// Seeded logistic regression with Gaussian features and labels from a planted model.
    pub fn logistic(spec: &LogisticSpec, seed: u64) -> Result<Self> {
        if spec.nodes == 0 || spec.components_per_node == 0 || spec.dim == 0 || spec.samples_per_component == 0 {
            return config("logistic family needs nodes, components, dim and samples >= 1");
        }
        let mut rng = rng::stream(seed, 0, 0, rng::Purpose::Data);
        let n = spec.dim;
        let planted = unit_direction(&mut rng, n) * spec.signal;
        let mut grid = Vec::with_capacity(spec.nodes);
        for _ in 0..spec.nodes {
            let mut row = Vec::with_capacity(spec.components_per_node);
            for _ in 0..spec.components_per_node {
                let s = spec.samples_per_component;
                let features = Matrix::from_fn(s, n, |_, _| gaussian(&mut rng));
                let labels = Vector::from_fn(s, |i, _| {
                    let p = sigmoid(features.row(i).transpose().dot(&planted));
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        -1.0
                    }
                });
                row.push(Component::Logistic(LogisticComponent::new(features, labels)?));
            }
            grid.push(row);
        }
        Self::from_components(grid)
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        if let NoiseModel::Gaussian { sigma2 } = noise {
            if !(sigma2 >= 0.0 && sigma2.is_finite()) {
                return config("gaussian noise needs a finite sigma2 >= 0");
            }
        }
        self.noise = Some(noise);
        self.profile = self.compute_profile();
        Ok(self)
    }

    pub fn with_value_noise(mut self, std: f64) -> Result<Self> {
        if !(std >= 0.0 && std.is_finite()) {
            return config("value noise std must be finite and >= 0");
        }
        self.value_noise_std = std;
        Ok(self)
    }

    pub fn with_initial_point(mut self, x0: Vector) -> Result<Self> {
        check_dim(self.dim, x0.len())?;
        self.x0 = x0;
        self.profile = self.compute_profile();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn components_per_node(&self) -> usize {
        self.per_node
    }

    pub fn total_components(&self) -> usize {
        self.nodes * self.per_node
    }

    pub fn component(&self, k: usize, j: usize) -> &Component {
        &self.components[k * self.per_node + j]
    }

    pub fn noise(&self) -> Option<NoiseModel> {
        self.noise
    }

    pub fn regularizer(&self) -> Option<&Regularizer> {
        self.reg.as_ref()
    }

    pub fn initial_point(&self) -> &Vector {
        &self.x0
    }

    pub fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    pub fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }

    pub fn is_quadratic(&self) -> bool {
        self.global_quadratic.is_some()
    }

    /// Exact global value, outside any oracle ledger (for monitoring only).
    pub fn objective(&self, x: &Vector) -> f64 {
        let base = match &self.global_quadratic {
            Some(q) => q.value(x),
            None => self.components.iter().map(|c| c.value(x)).sum::<f64>() / self.components.len() as f64,
        };
        base + self.reg.as_ref().map_or(0.0, |r| r.value(x))
    }

    pub fn suboptimality(&self, x: &Vector) -> f64 {
        self.objective(x) - self.optimum.f_star
    }

    fn node_value(&self, k: usize, x: &Vector) -> f64 {
        let base = match &self.node_quadratic {
            Some(q) => q[k].value(x),
            None => {
                self.components[k * self.per_node..(k + 1) * self.per_node]
                    .iter()
                    .map(|c| c.value(x))
                    .sum::<f64>()
                    / self.per_node as f64
            }
        };
        base + self.reg.as_ref().map_or(0.0, |r| r.value(x))
    }

    fn node_gradient(&self, k: usize, x: &Vector) -> Vector {
        let mut g = match &self.node_quadratic {
            Some(q) => q[k].gradient(x),
            None => {
                let mut acc = Vector::zeros(self.dim);
                for c in &self.components[k * self.per_node..(k + 1) * self.per_node] {
                    acc += c.gradient(x);
                }
                acc / self.per_node as f64
            }
        };
        if let Some(r) = &self.reg {
            r.add_gradient(x, &mut g);
        }
        g
    }

    fn global_gradient(&self, x: &Vector) -> Vector {
        let mut g = match &self.global_quadratic {
            Some(q) => q.gradient(x),
            None => {
                let mut acc = Vector::zeros(self.dim);
                for c in &self.components {
                    acc += c.gradient(x);
                }
                acc / self.components.len() as f64
            }
        };
        if let Some(r) = &self.reg {
            r.add_gradient(x, &mut g);
        }
        g
    }

    fn component_gradient_raw(&self, k: usize, j: usize, x: &Vector) -> Vector {
        let mut g = self.components[k * self.per_node + j].gradient(x);
        if let Some(r) = &self.reg {
            r.add_gradient(x, &mut g);
        }
        g
    }

    fn reg_weight(&self) -> f64 {
        self.reg.as_ref().map_or(0.0, |r| r.weight)
    }

    fn solve_optimum(&self) -> Result<Optimum> {
        let w = self.reg_weight();
        if let Some(q) = &self.global_quadratic {
            let mut h = q.a.clone();
            let mut rhs = q.b.clone();
            if let Some(r) = &self.reg {
                for i in 0..self.dim {
                    h[(i, i)] += w;
                }
                rhs.axpy(w, &r.center, 1.0);
            }
            let x_star = pseudo_solve(&h, &rhs);
            let residual = (&h * &x_star - &rhs).norm();
            if residual > 1e-8 * (1.0 + rhs.norm()) {
                return config("quadratic objective is unbounded below");
            }
            let f_star = self.objective(&x_star);
            return Ok(Optimum { x_star, f_star, closed_form: true });
        }
        let x_star = self.newton_solve()?;
        let f_star = self.objective(&x_star);
        Ok(Optimum { x_star, f_star, closed_form: false })
    }

    fn newton_solve(&self) -> Result<Vector> {
        let n = self.dim;
        let mut x = self.reg.as_ref().map_or_else(|| Vector::zeros(n), |r| r.center.clone());
        for _ in 0..200 {
            let g = self.global_gradient(&x);
            if g.norm() <= 1e-13 * (1.0 + self.objective(&x).abs()) {
                return Ok(x);
            }
            let mut h = Matrix::zeros(n, n);
            for c in &self.components {
                h += c.hessian(&x);
            }
            h /= self.components.len() as f64;
            let ridge = self.reg_weight().max(1e-12 * h.amax().max(1e-12));
            for i in 0..n {
                h[(i, i)] += ridge;
            }
            let step = pseudo_solve(&h, &g);
            let f0 = self.objective(&x);
            let slope = g.dot(&step);
            let mut t = 1.0;
            loop {
                let trial = &x - &step * t;
                if self.objective(&trial) <= f0 - 0.25 * t * slope || t < 1e-12 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        if self.global_gradient(&x).norm() < 1e-8 {
            Ok(x)
        } else {
            config("objective has no attainable minimizer (Newton solve did not converge)")
        }
    }

    fn compute_profile(&self) -> SmoothnessProfile {
        let x_star = &self.optimum.x_star;
        let r = (&self.x0 - x_star).norm().max(1e-12);
        let delta_f = self.suboptimality(&self.x0).max(0.0);
        let w = self.reg_weight();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let l_component_max = self.component_lmax.iter().cloned().fold(0.0, f64::max);

        let grad_at_opt = (0..self.nodes)
            .flat_map(|k| (0..self.per_node).map(move |j| (k, j)))
            .map(|(k, j)| self.component_gradient_raw(k, j, x_star).norm())
            .fold(0.0, f64::max);
        let sigma2 = match self.noise {
            Some(NoiseModel::Gaussian { sigma2 }) => sigma2,
            Some(NoiseModel::Subsample) => (0..self.nodes)
                .map(|k| {
                    let g = self.node_gradient(k, x_star);
                    (0..self.per_node)
                        .map(|j| (self.component_gradient_raw(k, j, x_star) - &g).norm_squared())
                        .sum::<f64>()
                        / self.per_node as f64
                })
                .fold(0.0, f64::max),
            None => 0.0,
        };
        let gaussian_part = match self.noise {
            Some(NoiseModel::Gaussian { sigma2 }) => sigma2,
            _ => 0.0,
        };
        let lip = l_component_max + w;
        let m_bound = ((lip * r + grad_at_opt).powi(2) + gaussian_part).sqrt();

        SmoothnessProfile {
            l: self.global_lmax,
            mu: self.global_mu,
            m_bound,
            sigma2,
            r,
            delta_f,
            l_component_max,
            l_component_mean: mean(&self.component_lmax),
            l_node_max: self.node_lmax.iter().cloned().fold(0.0, f64::max),
            l_node_mean: mean(&self.node_lmax),
        }
        .shifted(w)
    }
}

/// Adds `(ε/(2R²))‖x − x0‖²` to every component.
pub fn regularize(problem: &Problem, x0: &Vector, eps: f64, r: f64) -> Result<Problem> {
    if !(eps > 0.0 && eps.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return config("regularization needs eps > 0 and R > 0");
    }
    check_dim(problem.dim, x0.len())?;
    let weight = eps / (r * r);
    let mut p = problem.clone();
    p.reg = Some(match &problem.reg {
        Some(existing) => existing.merge(weight, x0),
        None => Regularizer { weight, center: x0.clone(), offset: 0.0 },
    });
    p.optimum = p.solve_optimum()?;
    p.profile = p.compute_profile();
    Ok(p)
}

/// Number of samples for the offline (empirical-risk) approach:
/// `min{⌈M²R²/ε²⌉, ⌈M²/(με)⌉}`, the second term only when `μ > 0`.
pub fn required_sample_size(profile: &SmoothnessProfile, eps: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return config("eps must be positive");
    }
    let m2 = profile.m_bound * profile.m_bound;
    let mut count = ceil_count(m2 * profile.r * profile.r / (eps * eps));
    if profile.mu > 0.0 {
        count = count.min(ceil_count(m2 / (profile.mu * eps)));
    }
    Ok(count.max(1))
}

/// Accuracy to which the regularized empirical problem must be solved:
/// `max{μ, ε/R²}·ε²/M²`.
pub fn inner_accuracy(profile: &SmoothnessProfile, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return config("eps must be positive");
    }
    if !(profile.m_bound > 0.0) {
        return config("inner accuracy needs M > 0");
    }
    let curvature = profile.mu.max(eps / (profile.r * profile.r));
    Ok(curvature * eps * eps / (profile.m_bound * profile.m_bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Convex,
    StronglyConvex,
}

/// Batch size up to which minibatching parallelizes an accelerated method
/// without slowing its oracle complexity.
pub fn batch_parallel_width(profile: &SmoothnessProfile, eps: f64, regime: Regime) -> Result<u64> {
    if !(eps > 0.0) {
        return config("eps must be positive");
    }
    let SmoothnessProfile { l, mu, sigma2, r, .. } = *profile;
    let width = match regime {
        Regime::Convex => (sigma2 * r * r / (eps * eps)) / (l * r * r / eps).sqrt(),
        Regime::StronglyConvex => {
            if !(mu > 0.0) {
                return config("strongly convex regime needs mu > 0");
            }
            (sigma2 / (mu * eps)) / ((l / mu).sqrt() * log_factor(mu * r * r / eps))
        }
    };
    Ok(ceil_count(width).max(1))
}

/// `ln(t)` floored at one, so logarithmic factors never shrink a bound.
pub fn log_factor(t: f64) -> f64 {
    if t > 0.0 {
        t.ln().max(1.0)
    } else {
        1.0
    }
}

/// Ceiling that ignores floating noise a few ulps above an integer.
pub(crate) fn ceil_count(v: f64) -> u64 {
    if !v.is_finite() {
        return u64::MAX;
    }
    if v <= 0.0 {
        return 0;
    }
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        v.ceil() as u64
    }
}

/// Audited access to a problem's oracles for a single run.
#[derive(Debug, Clone)]
pub struct Oracle<'p> {
    problem: &'p Problem,
    ledger: Ledger,
}

impl<'p> Oracle<'p> {
    pub fn new(problem: &'p Problem) -> Self {
        Self { problem, ledger: Ledger::new(problem.nodes) }
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub(crate) fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    fn check_x(&self, x: &Vector) -> Result<()> {
        check_dim(self.problem.dim, x.len())
    }

    fn check_node(&self, k: usize) -> Result<()> {
        if k < self.problem.nodes {
            Ok(())
        } else {
            Err(Error::Index { index: k, limit: self.problem.nodes })
        }
    }

    /// Exact gradient. A global call costs one full-gradient call on every node.
    pub fn full_gradient(&mut self, scope: Scope, x: &Vector) -> Result<Vector> {
        self.check_x(x)?;
        match scope {
            Scope::Node(k) => {
                self.check_node(k)?;
                self.ledger.node_mut(k).full += 1;
                Ok(self.problem.node_gradient(k, x))
            }
            Scope::Global => {
                self.ledger.each_mut().for_each(|c| c.full += 1);
                Ok(self.problem.global_gradient(x))
            }
        }
    }

    pub fn stochastic_gradient<R: Rng + ?Sized>(&mut self, k: usize, x: &Vector, rng: &mut R) -> Result<Vector> {
        self.check_x(x)?;
        self.check_node(k)?;
        let Some(noise) = self.problem.noise else {
            return config("stochastic gradient requested but no noise model is configured");
        };
        self.ledger.node_mut(k).stochastic += 1;
        Ok(match noise {
            NoiseModel::Gaussian { sigma2 } => {
                let mut g = self.problem.node_gradient(k, x);
                if sigma2 > 0.0 {
                    let scale = (sigma2 / self.problem.dim as f64).sqrt();
                    for v in g.iter_mut() {
                        *v += scale * gaussian(rng);
                    }
                }
                g
            }
            NoiseModel::Subsample => {
                let j = rng.random_range(0..self.problem.per_node);
                self.problem.component_gradient_raw(k, j, x)
            }
        })
    }

    /// Mean of `batch` independent stochastic gradients at `x`.
    pub fn batch_gradient<R: Rng + ?Sized>(
        &mut self,
        k: usize,
        x: &Vector,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vector> {
        if batch == 0 {
            return config("batch size must be at least 1");
        }
        let mut acc = self.stochastic_gradient(k, x, rng)?;
        for _ in 1..batch {
            acc += self.stochastic_gradient(k, x, rng)?;
        }
        if batch > 1 {
            acc /= batch as f64;
        }
        Ok(acc)
    }

    pub fn component_gradient(&mut self, k: usize, j: usize, x: &Vector) -> Result<Vector> {
        self.check_x(x)?;
        self.check_node(k)?;
        if j >= self.problem.per_node {
            return Err(Error::Index { index: j, limit: self.problem.per_node });
        }
        self.ledger.node_mut(k).component += 1;
        Ok(self.problem.component_gradient_raw(k, j, x))
    }

    /// Function value; `xi` is the standard-normal realization of the value noise, if any.
    pub fn function_value(&mut self, scope: Scope, x: &Vector, xi: Option<f64>) -> Result<f64> {
        self.check_x(x)?;
        let exact = match scope {
            Scope::Node(k) => {
                self.check_node(k)?;
                self.ledger.node_mut(k).value += 1;
                self.problem.node_value(k, x)
            }
            Scope::Global => {
                self.ledger.each_mut().for_each(|c| c.value += 1);
                self.problem.objective(x)
            }
        };
        Ok(exact + xi.map_or(0.0, |z| z * self.problem.value_noise_std))
    }
}

fn average_quadratics(components: &[Component]) -> QuadraticComponent {
    let qs = components.iter().map(|c| match c {
        Component::Quadratic(q) => q,
        Component::Logistic(_) => unreachable!("caller checked all components are quadratic"),
    });
    average_quadratic_refs(qs, components[0].dim())
}

fn average_quadratic_refs<'a>(qs: impl Iterator<Item = &'a QuadraticComponent>, n: usize) -> QuadraticComponent {
    let mut a = Matrix::zeros(n, n);
    let mut b = Vector::zeros(n);
    let mut c = 0.0;
    let mut count = 0usize;
    for q in qs {
        a += &q.a;
        b += &q.b;
        c += q.c;
        count += 1;
    }
    let s = count as f64;
    QuadraticComponent { a: a / s, b: b / s, c: c / s }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub(crate) fn extreme_eigenvalues(a: &Matrix) -> (f64, f64) {
    if a.nrows() == 1 {
        return (a[(0, 0)], a[(0, 0)]);
    }
    let eig = SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Minimum-norm solution of `h x = rhs` for symmetric PSD `h`.
fn pseudo_solve(h: &Matrix, rhs: &Vector) -> Vector {
    if let Some(chol) = h.clone().cholesky() {
        let x = chol.solve(rhs);
        if x.iter().all(|v| v.is_finite()) && (h * &x - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()) {
            return x;
        }
    }
    let eig = SymmetricEigen::new(h.clone());
    let top = eig.eigenvalues.amax();
    let coeffs = eig.eigenvectors.tr_mul(rhs);
    let scaled = Vector::from_fn(coeffs.len(), |i, _| {
        let lam = eig.eigenvalues[i];
        if lam.abs() > 1e-12 * top {
            coeffs[i] / lam
        } else {
            0.0
        }
    });
    &eig.eigenvectors * scaled
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Sign-fix so the distribution is Haar and the result is deterministic.
    let signs = Vector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    Matrix::from_fn(n, n, |i, j| q[(i, j)] * signs[j])
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    rng::unit_sphere(rng, n)
}

/// Test helper: deterministic generator for small ad-hoc fixtures.
#[doc(hidden)]
pub fn fixture_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;

    mod approx_eq {
        pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
        }
    }

    fn quad(a: &[f64], b: &[f64]) -> Component {
        let n = b.len();
        QuadraticComponent::new(Matrix::from_row_slice(n, n, a), Vector::from_row_slice(b))
            .unwrap()
            .into()
    }

    fn scalar_quad(a: f64) -> Component {
        quad(&[a], &[0.0])
    }

    #[test]
    fn identity_quadratic_gradient_is_x() {
        let p = Problem::from_components(vec![vec![quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0])]]).unwrap();
        let mut o = Oracle::new(&p);
        let g = o.full_gradient(Scope::Node(0), &Vector::from_row_slice(&[1.0, 2.0])).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 2.0]);
        assert_eq!(o.ledger().node(0).full, 1);
    }

    #[test]
    fn global_gradient_averages_nodes() {
        // f1 = ½x², f2 = x²
        let p = Problem::from_components(vec![vec![scalar_quad(1.0)], vec![scalar_quad(2.0)]]).unwrap();
        let mut o = Oracle::new(&p);
        let g = o.full_gradient(Scope::Global, &Vector::from_element(1, 1.0)).unwrap();
        assert_eq!(g[0], 1.5);
        assert_eq!(o.ledger().node(0).full, 1);
        assert_eq!(o.ledger().node(1).full, 1);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = Problem::from_components(vec![vec![scalar_quad(1.0)]]).unwrap();
        let mut o = Oracle::new(&p);
        assert!(matches!(
            o.full_gradient(Scope::Global, &Vector::zeros(2)),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
        assert!(matches!(o.full_gradient(Scope::Node(3), &Vector::zeros(1)), Err(Error::Index { .. })));
    }

    #[test]
    fn quadratic_value() {
        let p = Problem::from_components(vec![vec![quad(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0])]]).unwrap();
        let mut o = Oracle::new(&p);
        let v = o.function_value(Scope::Node(0), &Vector::from_row_slice(&[3.0, 4.0]), None).unwrap();
        assert_eq!(v, 12.5);
        assert_eq!(o.ledger().node(0).value, 1);
    }

    #[test]
    fn global_value_is_mean_of_node_values() {
        let spec = QuadraticSpec {
            nodes: 5,
            components_per_node: 3,
            dim: 4,
            mu: 0.5,
            l: 3.0,
            heterogeneity: 1.0,
            component_spread: 0.4,
            spectrum: Spectrum::Linear,
            start_distance: 1.0,
        };
        let p = Problem::random_quadratic(&spec, 3).unwrap();
        let mut o = Oracle::new(&p);
        let x = Vector::from_row_slice(&[0.3, -1.0, 2.0, 0.5]);
        let mean = (0..5).map(|k| o.function_value(Scope::Node(k), &x, None).unwrap()).sum::<f64>() / 5.0;
        let global = o.function_value(Scope::Global, &x, None).unwrap();
        assert!(rel_close(mean, global, 1e-12));
    }

    #[test]
    fn value_noise_is_deterministic_when_zero() {
        let p = Problem::from_components(vec![vec![scalar_quad(2.0)]]).unwrap();
        let mut o = Oracle::new(&p);
        let x = Vector::from_element(1, 1.5);
        let a = o.function_value(Scope::Global, &x, Some(0.7)).unwrap();
        let b = o.function_value(Scope::Global, &x, Some(-2.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn component_gradient_scaled_identity() {
        // f^j with A = j·I on two coordinates, x = (1, 0)
        let comps: Vec<Component> =
            (0..4).map(|j| quad(&[j as f64, 0.0, 0.0, j as f64], &[0.0, 0.0])).collect();
        let p = Problem::from_components(vec![comps]).unwrap();
        let mut o = Oracle::new(&p);
        let x = Vector::from_row_slice(&[1.0, 0.0]);
        for j in 0..4 {
            let g = o.component_gradient(0, j, &x).unwrap();
            assert_eq!(g.as_slice(), &[j as f64, 0.0]);
        }
        assert!(matches!(o.component_gradient(0, 4, &x), Err(Error::Index { index: 4, limit: 4 })));
        assert_eq!(o.ledger().node(0).component, 4);
    }

    #[test]
    fn component_average_matches_node_gradient() {
        let spec = QuadraticSpec {
            nodes: 2,
            components_per_node: 7,
            dim: 5,
            mu: 0.1,
            l: 10.0,
            heterogeneity: 2.0,
            component_spread: 0.5,
            spectrum: Spectrum::Geometric,
            start_distance: 1.0,
        };
        let p = Problem::random_quadratic(&spec, 11).unwrap();
        let mut o = Oracle::new(&p);
        let x = Vector::from_fn(5, |i, _| i as f64 - 2.0);
        for k in 0..2 {
            let full = o.full_gradient(Scope::Node(k), &x).unwrap();
            let mut avg = Vector::zeros(5);
            for j in 0..7 {
                avg += o.component_gradient(k, j, &x).unwrap();
            }
            avg /= 7.0;
            assert!((avg - full).amax() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn single_component_gradient_equals_node_gradient() {
        let p = Problem::from_components(vec![vec![quad(&[2.0, 1.0, 1.0, 3.0], &[1.0, -1.0])]]).unwrap();
        let mut o = Oracle::new(&p);
        let x = Vector::from_row_slice(&[0.5, 0.25]);
        assert_eq!(o.component_gradient(0, 0, &x).unwrap(), o.full_gradient(Scope::Node(0), &x).unwrap());
    }

    #[test]
    fn zero_noise_stochastic_gradient_is_exact() {
        let spec = QuadraticSpec {
            nodes: 1,
            components_per_node: 1,
            dim: 3,
            mu: 1.0,
            l: 2.0,
            heterogeneity: 0.0,
            component_spread: 0.0,
            spectrum: Spectrum::Linear,
            start_distance: 1.0,
        };
        let p = Problem::random_quadratic(&spec, 1).unwrap().with_noise(NoiseModel::Gaussian { sigma2: 0.0 }).unwrap();
        let mut o = Oracle::new(&p);
        let x = Vector::from_row_slice(&[1.0, 2.0, 3.0]);
        let mut rng = fixture_rng(0);
        let s = o.stochastic_gradient(0, &x, &mut rng).unwrap();
        let f = o.full_gradient(Scope::Node(0), &x).unwrap();
        assert_eq!(s, f);
        let b = o.batch_gradient(0, &x, 17, &mut rng).unwrap();
        assert!((b - &f).amax() <= 1e-15 * (1.0 + f.amax()));
        assert_eq!(o.ledger().node(0).stochastic, 18);
    }

    #[test]
    fn missing_noise_model_is_config_error() {
        let p = Problem::from_components(vec![vec![scalar_quad(1.0)]]).unwrap();
        let mut o = Oracle::new(&p);
        let mut rng = fixture_rng(0);
        assert!(matches!(o.stochastic_gradient(0, &Vector::zeros(1), &mut rng), Err(Error::Config(_))));
        assert!(matches!(o.batch_gradient(0, &Vector::zeros(1), 0, &mut rng), Err(Error::Config(_))));
        assert!(Problem::from_components(vec![vec![scalar_quad(1.0)]])
            .unwrap()
            .with_noise(NoiseModel::Gaussian { sigma2: -1.0 })
            .is_err());
    }

    #[test]
    fn non_psd_or_asymmetric_quadratic_rejected() {
        let asym = QuadraticComponent::new(Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), Vector::zeros(2));
        assert!(asym.is_err());
        let indefinite = QuadraticComponent::new(Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), Vector::zeros(2));
        assert!(indefinite.is_err());
    }

    #[test]
    fn random_quadratic_profile_matches_spec() {
        let spec = QuadraticSpec {
            nodes: 3,
            components_per_node: 4,
            dim: 6,
            mu: 0.5,
            l: 20.0,
            heterogeneity: 1.0,
            component_spread: 0.3,
            spectrum: Spectrum::Linear,
            start_distance: 2.0,
        };
        let p = Problem::random_quadratic(&spec, 5).unwrap();
        let prof = p.profile();
        assert_eq!(prof.l, 20.0);
        assert_eq!(prof.mu, 0.5);
        assert!(rel_close(prof.r, 2.0, 1e-10));
        assert!(prof.l_component_max >= prof.l);
        assert!(prof.delta_f <= prof.l * prof.r * prof.r / 2.0 + 1e-9);
        // The solved optimum is stationary and its value matches the normal equations.
        let mut o = Oracle::new(&p);
        let g = o.full_gradient(Scope::Global, &p.optimum().x_star).unwrap();
        assert!(g.norm() < 1e-9);
        assert!(rel_close(p.optimum().f_star, p.objective(&p.optimum().x_star), 1e-10));
    }

    #[test]
    fn random_quadratic_is_reproducible() {
        let spec = QuadraticSpec {
            nodes: 2,
            components_per_node: 2,
            dim: 3,
            mu: 1.0,
            l: 5.0,
            heterogeneity: 1.0,
            component_spread: 0.2,
            spectrum: Spectrum::Linear,
            start_distance: 1.0,
        };
        let a = Problem::random_quadratic(&spec, 9).unwrap();
        let b = Problem::random_quadratic(&spec, 9).unwrap();
        let c = Problem::random_quadratic(&spec, 10).unwrap();
        assert_eq!(a.component(1, 1), b.component(1, 1));
        assert_ne!(a.component(1, 1), c.component(1, 1));
    }

    #[test]
    fn logistic_problem_has_stationary_optimum() {
        let spec = LogisticSpec { nodes: 2, components_per_node: 2, dim: 3, samples_per_component: 40, signal: 1.0 };
        let p = Problem::logistic(&spec, 4).unwrap();
        assert!(!p.is_quadratic());
        let mut o = Oracle::new(&p);
        let g = o.full_gradient(Scope::Global, &p.optimum().x_star).unwrap();
        assert!(g.norm() < 1e-8);
        assert_eq!(p.profile().mu, 0.0);
        assert!(p.profile().l > 0.0);
    }

    #[test]
    fn regularize_zero_function() {
        let p = Problem::from_components(vec![vec![quad(&[0.0, 0.0, 0.0, 0.0], &[0.0, 0.0])]]).unwrap();
        let reg = regularize(&p, &Vector::zeros(2), 2.0, 1.0).unwrap();
        let x = Vector::from_row_slice(&[1.0, -3.0]);
        assert_eq!(reg.objective(&x), x.norm_squared());
        assert_eq!(reg.profile().mu, 2.0);
    }

    #[test]
    fn regularize_shifts_profile() {
        let p = Problem::from_components(vec![vec![quad(&[10.0, 0.0, 0.0, 0.0], &[0.0, 0.0])]]).unwrap();
        assert_eq!((p.profile().l, p.profile().mu), (10.0, 0.0));
        let reg = regularize(&p, &Vector::zeros(2), 1.0, 1.0).unwrap();
        assert_eq!((reg.profile().l, reg.profile().mu), (11.0, 1.0));
        assert!(regularize(&p, &Vector::zeros(2), 0.0, 1.0).is_err());
        assert!(regularize(&p, &Vector::zeros(2), 1.0, -1.0).is_err());
    }

    #[test]
    fn repeated_regularization_merges_terms() {
        let p = Problem::from_components(vec![vec![quad(&[1.0], &[0.0])]]).unwrap();
        let once = regularize(&p, &Vector::from_element(1, 1.0), 1.0, 1.0).unwrap();
        let twice = regularize(&once, &Vector::from_element(1, -2.0), 2.0, 1.0).unwrap();
        for x in [-1.5, 0.0, 0.7, 3.0] {
            let v = Vector::from_element(1, x);
            let direct = 0.5 * x * x + 0.5 * (x - 1.0).powi(2) + (x + 2.0).powi(2);
            assert!(rel_close(twice.objective(&v), direct, 1e-14));
        }
    }

    #[test]
    fn regularized_solution_is_solution_of_original() {
        // Convex quadratic with a flat direction: μ = 0.
        let a = [0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 2.0];
        let b = [0.0, 1.0, -1.0];
        let p = Problem::from_components(vec![vec![quad(&a, &b)]]).unwrap();
        assert_eq!(p.profile().mu, 0.0);
        let x0 = Vector::from_row_slice(&[0.5, 0.0, 0.0]);
        let r = (&x0 - &p.optimum().x_star).norm();
        for eps in [1e-1, 1e-2, 1e-3] {
            let reg = regularize(&p, &x0, eps, r).unwrap();
            let h_diag = [reg.profile().mu, 0.5 + eps / (r * r), 2.0 + eps / (r * r)];
            // Every point at regularized gap exactly ε/2 is an ε-solution of the original.
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut d = Vector::zeros(3);
                    d[axis] = sign * (eps / h_diag[axis]).sqrt();
                    let x = &reg.optimum().x_star + d;
                    assert!((reg.suboptimality(&x) - eps / 2.0).abs() < 1e-12);
                    assert!(p.suboptimality(&x) <= eps);
                }
            }
        }
    }

    #[test]
    fn sample_size_formula() {
        let prof = SmoothnessProfile::new(1.0, 0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(required_sample_size(&prof, 0.01).unwrap(), 10_000);
        assert_eq!(required_sample_size(&prof, 1.0).unwrap(), 1);
        assert_eq!(required_sample_size(&prof, 5.0).unwrap(), 1);
        let strong = SmoothnessProfile::new(1.0, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(required_sample_size(&strong, 0.01).unwrap(), 100);
        assert!(required_sample_size(&prof, 0.0).is_err());
    }

    #[test]
    fn inner_accuracy_formula() {
        let prof = SmoothnessProfile::new(1.0, 0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(rel_close(inner_accuracy(&prof, 0.1).unwrap(), 1e-3, 1e-15));
        let strong = SmoothnessProfile::new(1.0, 1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(rel_close(inner_accuracy(&strong, 0.1).unwrap(), 1e-2, 1e-15));
        let mut last = f64::INFINITY;
        for m in [1.0, 10.0, 100.0, 1e4, 1e8] {
            let p = SmoothnessProfile::new(1.0, 0.0, m, 0.0, 1.0, 0.0).unwrap();
            let v = inner_accuracy(&p, 0.1).unwrap();
            assert!(v > 0.0 && v < last);
            last = v;
        }
    }

    #[test]
    fn batch_width_formula() {
        let convex = SmoothnessProfile::new(1.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(batch_parallel_width(&convex, 0.01, Regime::Convex).unwrap(), 1000);
        let noiseless = SmoothnessProfile::new(1.0, 0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(batch_parallel_width(&noiseless, 0.01, Regime::Convex).unwrap(), 1);
        let strong = SmoothnessProfile::new(1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        // ln(μR²/ε) = 1 at ε = e⁻¹: width = e / 1 → 3.
        assert_eq!(batch_parallel_width(&strong, (-1.0f64).exp(), Regime::StronglyConvex).unwrap(), 3);
        // ln(μR²/ε) < 0 is clamped to 1: width = σ²/(με) = 0.5 → 1.
        assert_eq!(batch_parallel_width(&strong, 2.0, Regime::StronglyConvex).unwrap(), 1);
        assert!(batch_parallel_width(&convex, 0.1, Regime::StronglyConvex).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(SmoothnessProfile::new(1.0, 2.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(SmoothnessProfile::new(1.0, 0.0, 0.0, -1.0, 1.0, 0.0).is_err());
        assert!(SmoothnessProfile::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }
}
