//! Communication graphs, Laplacians, gossip matrices and schedules.
//!
//! All matrices are dense; the simulator targets graphs up to a few hundred
//! nodes. The condition number `χ = λmax(L) / λmin⁺(L)` of the Laplacian
//! governs every consensus and decentralized round count.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::objectives::Matrix;
use crate::rng::{self, Purpose};

/// Eigenvalues below this fraction of `λmax(L)` are treated as zero.
pub const ZERO_EIGENVALUE_RTOL: f64 = 1e-9;

const ER_RETRIES: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphKind {
    Path,
    Ring,
    Star,
    Complete,
    ErdosRenyi { p: f64, seed: u64 },
}

/// Connected undirected simple graph on `m` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Validates and normalizes an edge list (each edge stored once as `(lo, hi)`).
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m < 2 {
            return Err(Error::Topology(format!("graph needs at least 2 nodes, got {m}")));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::Topology(format!("edge ({a}, {b}) out of range for {m} nodes")));
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::Topology(format!("duplicate edge ({a}, {b})")));
            }
        }
        let g = Self { m, edges: set.into_iter().collect() };
        if !g.is_connected() {
            return Err(Error::Topology("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn nodes(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    fn bfs(&self, adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.m];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn is_connected(&self) -> bool {
        self.bfs(&self.neighbors(), 0).iter().all(Option::is_some)
    }

    pub fn diameter(&self) -> usize {
        let adj = self.neighbors();
        (0..self.m)
            .flat_map(|s| self.bfs(&adj, s))
            .map(|d| d.unwrap_or(usize::MAX))
            .max()
            .unwrap_or(0)
    }
}

pub fn make_graph(kind: GraphKind, m: usize) -> Result<Graph> {
    if m < 2 {
        return Err(Error::Topology(format!("graph needs at least 2 nodes, got {m}")));
    }
    match kind {
        GraphKind::Path => Graph::new(m, (1..m).map(|i| (i - 1, i))),
        GraphKind::Ring if m == 2 => Graph::new(2, [(0, 1)]),
        GraphKind::Ring => Graph::new(m, (0..m).map(|i| (i, (i + 1) % m))),
        GraphKind::Star => Graph::new(m, (1..m).map(|i| (0, i))),
        GraphKind::Complete => Graph::new(m, (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)))),
        GraphKind::ErdosRenyi { p, seed } => erdos_renyi(m, p, seed, 0),
    }
}

/// `G(m, p)` redrawn until connected; `round` selects an independent draw.
fn erdos_renyi(m: usize, p: f64, seed: u64, round: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return config(format!("edge probability must be in [0, 1], got {p}"));
    }
    for attempt in 0..ER_RETRIES {
        let mut rng = rng::stream(seed, attempt as usize, round, Purpose::Topology);
        let edges: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        if let Ok(g) = Graph::new(m, edges) {
            return Ok(g);
        }
    }
    Err(Error::Topology(format!(
        "no connected G({m}, {p}) found in {ER_RETRIES} draws"
    )))
}

/// `L = D − A`, built from integer degrees so that `L·1 = 0` exactly.
pub fn laplacian(graph: &Graph) -> Matrix {
    let mut l = Matrix::zeros(graph.m, graph.m);
    for &(a, b) in &graph.edges {
        l[(a, b)] = -1.0;
        l[(b, a)] = -1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
    }
    l
}

/// Ascending Laplacian eigenvalues.
pub fn laplacian_spectrum(graph: &Graph) -> Vec<f64> {
    let eig = SymmetricEigen::new(laplacian(graph));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// `(λmax, λmin⁺)` of the Laplacian; errors when the graph is numerically disconnected.
fn extreme_laplacian_eigenvalues(graph: &Graph) -> Result<(f64, f64)> {
    let spectrum = laplacian_spectrum(graph);
    let lambda_max = *spectrum.last().expect("graph has at least two nodes");
    let threshold = ZERO_EIGENVALUE_RTOL * lambda_max;
    let zeros = spectrum.iter().filter(|&&v| v < threshold).count();
    if zeros != 1 {
        return Err(Error::Topology(format!("Laplacian has {zeros} zero eigenvalues; graph is disconnected")));
    }
    Ok((lambda_max, spectrum[1]))
}

pub fn chi(graph: &Graph) -> Result<f64> {
    let (hi, lo) = extreme_laplacian_eigenvalues(graph)?;
    Ok(hi / lo)
}

/// `W = I − L / λmax(L)`: symmetric, doubly stochastic, spectral gap `1/χ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix {
    pub w: Matrix,
    pub lambda_max: f64,
    pub lambda_min_pos: f64,
}

impl GossipMatrix {
    pub fn nodes(&self) -> usize {
        self.w.nrows()
    }

    pub fn chi(&self) -> f64 {
        self.lambda_max / self.lambda_min_pos
    }

    /// Largest eigenvalue of `W` on the disagreement subspace.
    pub fn second_eigenvalue(&self) -> f64 {
        1.0 - self.lambda_min_pos / self.lambda_max
    }

    /// Smallest eigenvalue of `W` on the disagreement subspace.
    pub fn smallest_eigenvalue(&self) -> f64 {
        0.0
    }
}

pub fn gossip_matrix(graph: &Graph) -> Result<GossipMatrix> {
    let (lambda_max, lambda_min_pos) = extreme_laplacian_eigenvalues(graph)?;
    let l = laplacian(graph);
    let m = graph.m;
    let w = Matrix::from_fn(m, m, |i, j| {
        let scaled = l[(i, j)] / lambda_max;
        if i == j {
            1.0 - scaled
        } else {
            -scaled
        }
    });
    Ok(GossipMatrix { w, lambda_max, lambda_min_pos })
}

/// How the communication graph evolves with the round index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Static { graph: GraphKind, m: usize },
    /// Cycles through the listed graphs.
    Periodic { graphs: Vec<GraphKind>, m: usize },
    /// A cycle of `period` independent connected `G(m, p)` draws.
    RandomConnected { p: f64, m: usize, seed: u64, period: usize },
}

/// A (possibly time-varying) sequence of connected graphs with their gossip matrices.
#[derive(Debug, Clone)]
pub struct TopologySchedule {
    generator: Generator,
    graphs: Vec<Graph>,
    matrices: Vec<GossipMatrix>,
    chi: f64,
}

impl TopologySchedule {
    pub fn new(generator: Generator) -> Result<Self> {
        let graphs = match &generator {
            Generator::Static { graph, m } => vec![make_graph(*graph, *m)?],
            Generator::Periodic { graphs, m } => {
                if graphs.is_empty() {
                    return config("periodic schedule needs at least one graph");
                }
                graphs.iter().map(|&g| make_graph(g, *m)).collect::<Result<_>>()?
            }
            Generator::RandomConnected { p, m, seed, period } => {
                if *period == 0 {
                    return config("random schedule needs period >= 1");
                }
                (0..*period).map(|t| erdos_renyi(*m, *p, *seed, t as u64)).collect::<Result<_>>()?
            }
        };
        Self::from_graphs(generator, graphs)
    }

    pub fn fixed(graph: Graph) -> Result<Self> {
        let generator = Generator::Static { graph: GraphKind::Complete, m: graph.nodes() };
        Self::from_graphs(generator, vec![graph])
    }

    fn from_graphs(generator: Generator, graphs: Vec<Graph>) -> Result<Self> {
        let matrices: Vec<GossipMatrix> = graphs.iter().map(gossip_matrix).collect::<Result<_>>()?;
        let chi = matrices.iter().map(GossipMatrix::chi).fold(1.0, f64::max);
        Ok(Self { generator, graphs, matrices, chi })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn nodes(&self) -> usize {
        self.graphs[0].nodes()
    }

    /// Worst-case χ over the schedule.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn is_static(&self) -> bool {
        self.matrices.len() == 1
    }

    pub fn graph(&self, t: u64) -> &Graph {
        &self.graphs[(t % self.graphs.len() as u64) as usize]
    }

    pub fn matrix(&self, t: u64) -> &GossipMatrix {
        &self.matrices[(t % self.matrices.len() as u64) as usize]
    }

    /// The single matrix of a static schedule.
    pub fn static_matrix(&self) -> Result<&GossipMatrix> {
        if self.is_static() {
            Ok(&self.matrices[0])
        } else {
            Err(Error::Unsupported("operation needs a static topology".into()))
        }
    }
}

/// Gossip matrix emitted by `generator` at round `t`.
pub fn schedule(generator: &Generator, t: u64) -> Result<GossipMatrix> {
    Ok(TopologySchedule::new(generator.clone())?.matrix(t).clone())
}
