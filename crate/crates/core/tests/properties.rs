//! Randomized invariants of compressors, gossip and the two-point estimator.

use decopt::compressors::{rand_k, top_k};
use decopt::consensus::{column_means, consensus_error, gossip_round, ChebyshevIter, CommCounter};
use decopt::objectives::{Matrix, Vector};
use decopt::rng::{stream, Purpose};
use decopt::topology::{gossip_matrix, laplacian, make_graph, GraphKind};
use decopt::zeroth_order::{two_point_estimate, SmoothingConfig};
use proptest::prelude::*;

fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 1..=max_len)
}

fn graph_kind() -> impl Strategy<Value = GraphKind> {
    prop_oneof![
        Just(GraphKind::Path),
        Just(GraphKind::Ring),
        Just(GraphKind::Star),
        Just(GraphKind::Complete),
        (0.3f64..0.9, any::<u64>()).prop_map(|(p, seed)| GraphKind::ErdosRenyi { p, seed }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn topk_is_a_contraction(z in vector(40), k_frac in 0.0f64..1.0) {
        let z = Vector::from_vec(z);
        let n = z.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let q = top_k(&z, k).unwrap();
        let err = (&q - &z).norm_squared();
        prop_assert!(err <= (1.0 - k as f64 / n as f64) * z.norm_squared() * (1.0 + 1e-12));
        prop_assert_eq!(q.iter().filter(|v| **v != 0.0).count() <= k, true);
    }

    #[test]
    fn scaled_randk_enumeration_is_exact(z in vector(6), k_frac in 0.0f64..1.0) {
        let z = Vector::from_vec(z);
        let n = z.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        // Every k-subset as a bit mask, each equally likely.
        let masks: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() as usize == k).collect();
        let scale = n as f64 / k as f64;
        let outcome = |mask: u32| Vector::from_fn(n, |i, _| if mask >> i & 1 == 1 { scale * z[i] } else { 0.0 });
        let count = masks.len() as f64;
        let mean = masks.iter().fold(Vector::zeros(n), |acc, &m| acc + outcome(m)) / count;
        let second = masks.iter().map(|&m| (outcome(m) - &z).norm_squared()).sum::<f64>() / count;
        let norm2 = z.norm_squared();
        prop_assert!((mean - &z).amax() <= 1e-12 * (1.0 + z.amax()));
        prop_assert!((second - (scale - 1.0) * norm2).abs() <= 1e-12 * (1.0 + norm2));

        let mut rng = stream(7, 0, 0, Purpose::Compression);
        for _ in 0..20 {
            let q = rand_k(&z, k, &mut rng, true).unwrap();
            prop_assert!(masks.iter().any(|&m| outcome(m) == q));
        }
    }

    #[test]
    fn gossip_preserves_means_and_shrinks_disagreement(kind in graph_kind(), m in 2usize..12, seed in any::<u64>()) {
        let graph = make_graph(kind, m).unwrap();
        let w = gossip_matrix(&graph).unwrap();
        let l = laplacian(&graph);
        prop_assert!(l.row_iter().all(|r| r.sum().abs() <= 1e-12));
        for i in 0..m {
            prop_assert!((w.w.row(i).sum() - 1.0).abs() <= 1e-10);
            prop_assert!((w.w.column(i).sum() - 1.0).abs() <= 1e-10);
        }
        let mut rng = stream(seed, 0, 0, Purpose::Init);
        let x = Matrix::from_fn(m, 3, |_, _| decopt::rng::gaussian(&mut rng));
        let means = column_means(&x);
        let mut counter = CommCounter::default();
        let mut y = x.clone();
        let mut it = ChebyshevIter::new(&w, &x).unwrap();
        for _ in 0..5 {
            let next = gossip_round(&w, &y, &mut counter).unwrap();
            prop_assert!(consensus_error(&next) <= consensus_error(&y) * (1.0 + 1e-12) + 1e-14);
            y = next;
            it.step();
            prop_assert!((column_means(&y) - &means).amax() <= 1e-12);
            prop_assert!((column_means(it.state()) - &means).amax() <= 1e-12);
        }
        prop_assert_eq!(counter.rounds, 5);
    }

    #[test]
    fn two_point_estimate_is_exact_along_its_direction_for_quadratics(x in vector(8), seed in any::<u64>()) {
        let x = Vector::from_vec(x);
        let n = x.len() as f64;
        let mut rng = stream(seed, 0, 0, Purpose::Direction);
        let g = two_point_estimate(|p, _| Ok(0.5 * p.norm_squared()), &x, SmoothingConfig::new(0.1).unwrap(), &mut rng).unwrap();
        // For ½‖x‖² the estimate is n⟨x, e⟩e for the drawn unit direction e.
        if g.norm() > 0.0 {
            let e = &g / g.norm();
            let expected = &e * (n * x.dot(&e));
            prop_assert!((g - expected).norm() <= 1e-9 * (1.0 + x.norm()) * n);
        }
    }
}
