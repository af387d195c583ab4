//! Message compression operators.
//!
//! Two contracts appear in the literature and both are implemented:
//! contraction `E‖Q(z) − z‖² ≤ (1 − q)‖z‖²` (TopK, unscaled RandK) and
//! unbiasedness `E Q(z) = z` with `E‖Q(z) − z‖² ≤ ω‖z‖²` (scaled RandK,
//! simplex vertex). Scaled RandK with `k < n/2` does not satisfy the
//! contraction with `q = k/n`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::objectives::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Compressor {
    Identity,
    #[serde(rename = "topk")]
    TopK { k: usize },
    #[serde(rename = "randk_scaled")]
    RandKScaled { k: usize },
    #[serde(rename = "randk_plain")]
    RandKPlain { k: usize },
    SimplexVertex,
}

impl Compressor {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Compressor::TopK { k } | Compressor::RandKScaled { k } | Compressor::RandKPlain { k } => check_k(k, n),
            Compressor::Identity | Compressor::SimplexVertex => Ok(()),
        }
    }

    pub fn is_unbiased(&self) -> bool {
        matches!(self, Compressor::Identity | Compressor::RandKScaled { .. } | Compressor::SimplexVertex)
    }

    /// Declared contraction parameter `q` for contractive kinds.
    pub fn declared_q(&self, n: usize) -> Option<f64> {
        match *self {
            Compressor::Identity => Some(1.0),
            Compressor::TopK { k } | Compressor::RandKPlain { k } => Some(k as f64 / n as f64),
            Compressor::RandKScaled { .. } | Compressor::SimplexVertex => None,
        }
    }

    /// `ω` with `E‖Q(z) − z‖² ≤ ω‖z‖²` for the unbiased kinds.
    pub fn variance_factor(&self, n: usize) -> Option<f64> {
        match *self {
            Compressor::Identity => Some(0.0),
            Compressor::RandKScaled { k } => Some(n as f64 / k as f64 - 1.0),
            Compressor::SimplexVertex => Some(n as f64 - 1.0),
            Compressor::TopK { .. } | Compressor::RandKPlain { .. } => None,
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, z: &Vector, rng: &mut R) -> Result<Vector> {
        match *self {
            Compressor::Identity => Ok(z.clone()),
            Compressor::TopK { k } => top_k(z, k),
            Compressor::RandKScaled { k } => rand_k(z, k, rng, true),
            Compressor::RandKPlain { k } => rand_k(z, k, rng, false),
            Compressor::SimplexVertex => Ok(signed_vertex(z, rng)),
        }
    }

    /// Numbers transmitted for one compressed `n`-vector.
    pub fn message_cost(&self, n: usize) -> u64 {
        message_cost(self, n)
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return config(format!("compression needs 1 <= k <= n, got k={k}, n={n}"));
    }
    Ok(())
}

/// Keeps the `k` largest-magnitude coordinates; ties go to the lowest index.
pub fn top_k(z: &Vector, k: usize) -> Result<Vector> {
    check_k(k, z.len())?;
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    let mut out = Vector::zeros(z.len());
    for &i in &order[..k] {
        out[i] = z[i];
    }
    Ok(out)
}

/// Keeps a uniformly random `k`-subset; `scaled` multiplies the kept entries by `n/k`.
pub fn rand_k<R: Rng + ?Sized>(z: &Vector, k: usize, rng: &mut R, scaled: bool) -> Result<Vector> {
    let n = z.len();
    check_k(k, n)?;
    if k == n {
        return Ok(z.clone());
    }
    let factor = if scaled { n as f64 / k as f64 } else { 1.0 };
    let mut out = Vector::zeros(n);
    for i in index::sample(rng, n, k) {
        out[i] = z[i] * factor;
    }
    Ok(out)
}

/// Draws vertex `e_i` of the simplex with probability `p_i`.
pub fn simplex_vertex<R: Rng + ?Sized>(p: &Vector, rng: &mut R) -> Result<usize> {
    if p.is_empty() {
        return config("empty probability vector");
    }
    if let Some(v) = p.iter().find(|&&v| v < -1e-9 || !v.is_finite()) {
        return Err(Error::Config(format!("probability vector has invalid entry {v}")));
    }
    let total: f64 = p.iter().map(|v| v.max(0.0)).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("probabilities sum to {total}, not 1")));
    }
    Ok(sample_index(p.iter().map(|v| v.max(0.0) / total), rng, p.len()))
}

/// One-hot form of [`simplex_vertex`].
pub fn simplex_vertex_one_hot<R: Rng + ?Sized>(p: &Vector, rng: &mut R) -> Result<Vector> {
    let i = simplex_vertex(p, rng)?;
    let mut out = Vector::zeros(p.len());
    out[i] = 1.0;
    Ok(out)
}

/// Unbiased single-coordinate sketch of an arbitrary vector:
/// `sign(z_i)‖z‖₁ e_i` with probability `|z_i|/‖z‖₁`.
fn signed_vertex<R: Rng + ?Sized>(z: &Vector, rng: &mut R) -> Vector {
    let l1 = z.lp_norm(1);
    let mut out = Vector::zeros(z.len());
    if l1 == 0.0 {
        return out;
    }
    let i = sample_index(z.iter().map(|v| v.abs() / l1), rng, z.len());
    out[i] = z[i].signum() * l1;
    out
}

fn sample_index<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R, n: usize) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive.min(n - 1)
}

/// Identity sends `n` numbers, TopK/RandK send `2k` (values and indices), a simplex vertex sends one.
pub fn message_cost(compressor: &Compressor, n: usize) -> u64 {
    match *compressor {
        Compressor::Identity => n as u64,
        Compressor::TopK { k } | Compressor::RandKScaled { k } | Compressor::RandKPlain { k } => 2 * k as u64,
        Compressor::SimplexVertex => 1,
    }
}
