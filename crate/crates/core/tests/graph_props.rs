//! Randomized invariants of action graphs, registration and the composite.

mod common;

use actorgraph::temporal::{build_composite, register_frames};
use common::checks::*;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_matches_oracle(seed in any::<u64>()) {
        prop_assert_eq!(adjacency_violations(&mut rng(seed)), 0);
    }

    #[test]
    fn smoothing_is_permutation_equivariant(seed in any::<u64>()) {
        prop_assert!(!equivariance_violated(&mut rng(seed)));
    }

    #[test]
    fn actor_block_is_translation_invariant(seed in any::<u64>()) {
        prop_assert!(!translation_violated(&mut rng(seed)));
    }

    #[test]
    fn registration_is_optimal(seed in any::<u64>(), n in 1usize..=6) {
        let (found, best) = registration_vs_brute_force(&mut rng(seed), n);
        prop_assert!((found - best).abs() <= 1e-9 * best.abs().max(1.0), "{found} vs {best}");
    }

    #[test]
    fn registration_is_a_permutation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(0..6), r.gen_range(0..6));
        let a = random_graph(&mut r, n, 2, true);
        let b = random_graph(&mut r, m, 2, true);
        let p = register_frames(&a, &b, 1.0, 1.0).unwrap();
        let k = n.max(m);
        let matrix = p.matrix();
        for i in 0..k {
            let row: f32 = (0..k).map(|j| matrix.at(i, j)).sum();
            let col: f32 = (0..k).map(|j| matrix.at(j, i)).sum();
            prop_assert_eq!(row, 1.0);
            prop_assert_eq!(col, 1.0);
        }
        prop_assert_eq!(p.registered_pairs().len(), n.min(m));
    }

    #[test]
    fn composite_is_symmetric_off_the_blocks(seed in any::<u64>()) {
        let mut r = rng(seed);
        let frames = r.gen_range(1..5);
        let graphs: Vec<_> = (0..frames)
            .map(|_| {
                let n = r.gen_range(0..5);
                let connect = r.gen_bool(0.7);
                random_graph(&mut r, n, 2, connect)
            })
            .collect();
        let perms: Vec<_> = graphs.windows(2).map(|w| register_frames(&w[0], &w[1], 1.0, 0.5).unwrap()).collect();
        let c = build_composite(&graphs, &perms).unwrap();
        let a = c.adjacency();
        let stride = c.slots() + 1;
        for i in 0..c.len() {
            for j in 0..c.len() {
                if i / stride != j / stride {
                    prop_assert_eq!(a.at(i, j), a.at(j, i));
                    prop_assert!(a.at(i, j) == 0.0 || a.at(i, j) == 1.0);
                }
            }
        }
        let real_pairs: usize = perms.iter().map(|p| p.registered_pairs().len()).sum();
        let edges = c.temporal_edges().iter().filter(|e| !e.action).count();
        prop_assert_eq!(edges, real_pairs);
    }
}
