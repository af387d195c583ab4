//! Averaging protocols over a gossip matrix.
//!
//! Node states are rows of an `m × n` matrix. One multiplication by `W` is one
//! communication round. Plain gossip needs `O(χ ln(1/ε))` rounds; the
//! Chebyshev recurrence needs `O(√χ ln(1/ε))`.

use crate::error::{check_dim, Error, Result};
use crate::objectives::{Matrix, Vector};
use crate::topology::{GossipMatrix, TopologySchedule};

/// Communication rounds spent so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommCounter {
    pub rounds: u64,
}

/// Column means of a node matrix (the network average).
pub fn column_means(x: &Matrix) -> Vector {
    let m = x.nrows() as f64;
    Vector::from_fn(x.ncols(), |j, _| x.column(j).sum() / m)
}

/// `max_k ‖x_k − x̄‖₂`.
pub fn consensus_error(x: &Matrix) -> f64 {
    let mean = column_means(x);
    x.row_iter()
        .map(|row| {
            row.iter()
                .zip(mean.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

pub fn gossip_round(w: &GossipMatrix, x: &Matrix, counter: &mut CommCounter) -> Result<Matrix> {
    check_dim(w.nodes(), x.nrows())?;
    counter.rounds += 1;
    Ok(&w.w * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub state: Matrix,
    pub rounds: usize,
}

/// Repeats gossip rounds until the consensus error falls to `tol` times its initial value.
pub fn plain_consensus(
    schedule: &TopologySchedule,
    x: &Matrix,
    tol: f64,
    max_rounds: usize,
) -> Result<ConsensusOutcome> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("consensus tolerance must be in (0, 1), got {tol}")));
    }
    check_dim(schedule.nodes(), x.nrows())?;
    let initial = consensus_error(x);
    let goal = tol * initial;
    let mut state = x.clone();
    let mut counter = CommCounter::default();
    let mut err = initial;
    while err > goal {
        if counter.rounds as usize >= max_rounds {
            return Err(Error::ConsensusBudget {
                rounds: max_rounds,
                ratio: err / initial,
                state: Box::new(state),
            });
        }
        state = gossip_round(schedule.matrix(counter.rounds), &state, &mut counter)?;
        err = consensus_error(&state);
    }
    Ok(ConsensusOutcome { state, rounds: counter.rounds as usize })
}

/// Three-term Chebyshev iteration on `W`, normalized so that `p_k(1) = 1`.
///
/// The disagreement spectrum of `W` lies in `[a, b] = [0, 1 − 1/χ]`; the
/// affine map `M(w) = (2w − a − b)/(b − a)` sends it to `[−1, 1]` and sends the
/// consensus eigenvalue 1 to `ξ > 1`. `Y_k = T_k(M(W)) X / T_k(ξ)` is
/// advanced with the ratios `r_k = T_{k−1}(ξ)/T_k(ξ)` so nothing overflows.
pub struct ChebyshevIter<'w> {
    w: &'w GossipMatrix,
    lo: f64,
    hi: f64,
    xi: f64,
    ratio: f64,
    prev: Option<Matrix>,
    current: Matrix,
    steps: usize,
}

impl<'w> ChebyshevIter<'w> {
    pub fn new(w: &'w GossipMatrix, x: &Matrix) -> Result<Self> {
        check_dim(w.nodes(), x.nrows())?;
        let lo = w.smallest_eigenvalue();
        let hi = w.second_eigenvalue();
        let xi = if hi - lo > 1e-12 { (2.0 - lo - hi) / (hi - lo) } else { f64::INFINITY };
        Ok(Self { w, lo, hi, xi, ratio: 0.0, prev: None, current: x.clone(), steps: 0 })
    }

    pub fn state(&self) -> &Matrix {
        &self.current
    }

    pub fn into_state(self) -> Matrix {
        self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn mapped(&self, y: &Matrix) -> Matrix {
        let wy = &self.w.w * y;
        (wy * 2.0 - y * (self.lo + self.hi)) / (self.hi - self.lo)
    }

    /// One more degree (one communication round).
    pub fn step(&mut self) {
        self.steps += 1;
        if !self.xi.is_finite() {
            // Disagreement spectrum is {0}: W is the averaging projection.
            self.current = &self.w.w * &self.current;
            return;
        }
        let next = match self.prev.take() {
            None => {
                self.ratio = 1.0 / self.xi;
                self.mapped(&self.current) / self.xi
            }
            Some(prev) => {
                let r_next = 1.0 / (2.0 * self.xi - self.ratio);
                let out = self.mapped(&self.current) * (2.0 * r_next) - prev * (self.ratio * r_next);
                self.ratio = r_next;
                out
            }
        };
        self.prev = Some(std::mem::replace(&mut self.current, next));
    }
}

/// Applies the degree-`rounds` Chebyshev consensus filter; counts `rounds` communications.
pub fn chebyshev_consensus(
    w: &GossipMatrix,
    x: &Matrix,
    rounds: usize,
    counter: &mut CommCounter,
) -> Result<Matrix> {
    let mut it = ChebyshevIter::new(w, x)?;
    for _ in 0..rounds {
        it.step();
    }
    counter.rounds += rounds as u64;
    Ok(it.into_state())
}

/// Chebyshev consensus on a schedule; only static schedules are supported.
pub fn chebyshev_on_schedule(
    schedule: &TopologySchedule,
    x: &Matrix,
    rounds: usize,
    counter: &mut CommCounter,
) -> Result<Matrix> {
    if !schedule.is_static() {
        return Err(Error::Unsupported(
            "Chebyshev consensus needs a static topology; use plain gossip for time-varying graphs".into(),
        ));
    }
    chebyshev_consensus(schedule.static_matrix()?, x, rounds, counter)
}

/// Runs the Chebyshev recurrence until the error reaches `tol` times its initial value.
pub fn chebyshev_until(w: &GossipMatrix, x: &Matrix, tol: f64, max_rounds: usize) -> Result<ConsensusOutcome> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("consensus tolerance must be in (0, 1), got {tol}")));
    }
    let goal = tol * consensus_error(x);
    let mut it = ChebyshevIter::new(w, x)?;
    while consensus_error(it.state()) > goal {
        if it.steps() >= max_rounds {
            let ratio = consensus_error(it.state()) / (goal / tol);
            return Err(Error::ConsensusBudget { rounds: max_rounds, ratio, state: Box::new(it.into_state()) });
        }
        it.step();
    }
    let rounds = it.steps();
    Ok(ConsensusOutcome { state: it.into_state(), rounds })
}

/// Consensus rounds per optimizer iteration: `⌈√χ·ln(max(χ,10)/δ)⌉` with
/// Chebyshev acceleration, `⌈χ·ln(max(χ,10)/δ)⌉` with plain gossip.
pub fn consensus_depth(chi: f64, delta: f64, accelerated: bool) -> usize {
    let factor = if accelerated { chi.sqrt() } else { chi };
    let depth = (factor * (chi.max(10.0) / delta).ln()).ceil();
    depth.max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{gossip_matrix, make_graph, Generator, GraphKind};

    fn w_of(kind: GraphKind, m: usize) -> GossipMatrix {
        gossip_matrix(&make_graph(kind, m).unwrap()).unwrap()
    }

    fn static_schedule(kind: GraphKind, m: usize) -> TopologySchedule {
        TopologySchedule::new(Generator::Static { graph: kind, m }).unwrap()
    }

    fn column(values: &[f64]) -> Matrix {
        Matrix::from_column_slice(values.len(), 1, values)
    }

    #[test]
    fn error_metric() {
        assert_eq!(consensus_error(&Matrix::from_element(4, 3, 2.5)), 0.0);
        assert_eq!(consensus_error(&column(&[0.0, 2.0])), 1.0);
        let x = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.37);
        let shifted = Matrix::from_fn(5, 3, |i, j| x[(i, j)] + [1.0, -4.0, 9.0][j]);
        assert!((consensus_error(&x) - consensus_error(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn one_round_examples() {
        let mut c = CommCounter::default();
        let constant = Matrix::from_element(6, 2, 3.0);
        let out = gossip_round(&w_of(GraphKind::Ring, 6), &constant, &mut c).unwrap();
        assert!((out - constant).amax() < 1e-15);
        let out = gossip_round(&w_of(GraphKind::Complete, 3), &column(&[1.0, 2.0, 3.0]), &mut c).unwrap();
        assert!(out.iter().all(|&v| (v - 2.0).abs() < 1e-15));
        let out = gossip_round(&w_of(GraphKind::Path, 2), &column(&[0.0, 2.0]), &mut c).unwrap();
        assert!(out.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(c.rounds, 3);
        assert!(gossip_round(&w_of(GraphKind::Path, 2), &column(&[1.0, 2.0, 3.0]), &mut c).is_err());
    }

    #[test]
    fn plain_consensus_examples() {
        let ring = static_schedule(GraphKind::Ring, 8);
        let out = plain_consensus(&ring, &Matrix::from_element(8, 2, 1.0), 1e-6, 10).unwrap();
        assert_eq!(out.rounds, 0);
        let complete = static_schedule(GraphKind::Complete, 7);
        let x = Matrix::from_fn(7, 3, |i, j| ((i * 7 + j * 3) % 5) as f64);
        assert_eq!(plain_consensus(&complete, &x, 1e-6, 10).unwrap().rounds, 1);
        assert!(plain_consensus(&ring, &x.rows(0, 7).into_owned(), 0.0, 10).is_err());
    }

    #[test]
    fn plain_consensus_budget_error_carries_state() {
        let ring = static_schedule(GraphKind::Ring, 16);
        let x = Matrix::from_fn(16, 1, |i, _| i as f64);
        match plain_consensus(&ring, &x, 1e-6, 3) {
            Err(Error::ConsensusBudget { rounds: 3, state, ratio }) => {
                assert_eq!(state.nrows(), 16);
                assert!(ratio < 1.0);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn plain_rounds_follow_spectral_gap() {
        let ring = static_schedule(GraphKind::Ring, 32);
        let x = Matrix::from_fn(32, 1, |i, _| ((i * 13) % 7) as f64 - 3.0);
        let tol = 1e-6;
        let rounds = plain_consensus(&ring, &x, tol, 100_000).unwrap().rounds as f64;
        let bound = ring.chi() * (1.0 / tol).ln();
        assert!(rounds >= bound / 4.0 && rounds <= 4.0 * bound, "rounds {rounds}, bound {bound}");
    }

    #[test]
    fn chebyshev_examples() {
        let ring = w_of(GraphKind::Ring, 10);
        let x = Matrix::from_fn(10, 2, |i, j| (i as f64).sin() + j as f64);
        let mut c = CommCounter::default();
        assert_eq!(chebyshev_consensus(&ring, &x, 0, &mut c).unwrap(), x);
        let complete = w_of(GraphKind::Complete, 5);
        let y = Matrix::from_fn(5, 2, |i, j| (i * i + j) as f64);
        let out = chebyshev_consensus(&complete, &y, 1, &mut c).unwrap();
        assert!(consensus_error(&out) < 1e-14 * (1.0 + y.amax()));
        assert_eq!(c.rounds, 1);
    }

    #[test]
    fn chebyshev_preserves_means_and_damps() {
        let w = w_of(GraphKind::Ring, 64);
        let x = Matrix::from_fn(64, 3, |i, j| ((i * 31 + j * 7) % 11) as f64);
        let means = column_means(&x);
        let e0 = consensus_error(&x);
        let mut it = ChebyshevIter::new(&w, &x).unwrap();
        for t in 1..=200 {
            it.step();
            assert!((column_means(it.state()) - &means).amax() < 1e-12 * (1.0 + means.amax()));
            // Damping bound 2·exp(−T·acosh ξ) on the disagreement part, with a √m slack for the max-row metric.
            let xi = (1.0 + 1.0 / w.chi()) / (1.0 - 1.0 / w.chi());
            let bound = 2.0 * (-(t as f64) * xi.acosh()).exp() * (64f64).sqrt();
            assert!(consensus_error(it.state()) <= bound * e0 + 1e-12);
        }
    }

    #[test]
    fn chebyshev_rejects_time_varying() {
        let s = TopologySchedule::new(Generator::Periodic { graphs: vec![GraphKind::Ring, GraphKind::Star], m: 6 }).unwrap();
        let mut c = CommCounter::default();
        assert!(matches!(
            chebyshev_on_schedule(&s, &Matrix::zeros(6, 1), 3, &mut c),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn chebyshev_beats_plain_on_ring() {
        let w = w_of(GraphKind::Ring, 64);
        let ring = static_schedule(GraphKind::Ring, 64);
        let x = Matrix::from_fn(64, 1, |i, _| i as f64);
        let plain = plain_consensus(&ring, &x, 1e-6, 1_000_000).unwrap().rounds as f64;
        let cheb = chebyshev_until(&w, &x, 1e-6, 1_000_000).unwrap().rounds as f64;
        let ratio = cheb / plain;
        let predicted = 1.0 / w.chi().sqrt();
        assert!(ratio < 4.0 * predicted && ratio > predicted / 4.0, "ratio {ratio}, 1/sqrt(chi) {predicted}");
    }

    #[test]
    fn depth_rule() {
        assert_eq!(consensus_depth(1.0, 1e-3, true), (10f64 / 1e-3).ln().ceil() as usize);
        assert_eq!(consensus_depth(100.0, 1e-2, true), (10.0 * (1e4f64).ln()).ceil() as usize);
        assert_eq!(consensus_depth(100.0, 1e-2, false), (100.0 * (1e4f64).ln()).ceil() as usize);
    }
}
