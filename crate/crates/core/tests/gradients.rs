//! Finite-difference agreement of every differentiable objective on random
//! small instances.

mod common;

use common::checks::*;
use proptest::prelude::*;

const TOLERANCE: f64 = 1e-4;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn global_loss_gradient(seed in any::<u64>()) {
        let err = grad_global_loss(seed);
        prop_assert!(err < TOLERANCE, "error {err}");
    }

    #[test]
    fn spatial_smoothing_gradient(seed in any::<u64>()) {
        let err = grad_spatial_smooth(seed);
        prop_assert!(err < TOLERANCE, "error {err}");
    }

    #[test]
    fn temporal_smoothing_gradient(seed in any::<u64>()) {
        let err = grad_temporal_smooth(seed);
        prop_assert!(err < TOLERANCE, "error {err}");
    }

    #[test]
    fn actor_loss_gradient(seed in any::<u64>()) {
        let err = grad_actor_loss(seed);
        prop_assert!(err < TOLERANCE, "error {err}");
    }

    #[test]
    fn total_loss_gradient(seed in any::<u64>()) {
        let err = grad_total_loss(seed);
        prop_assert!(err < TOLERANCE, "error {err}");
    }
}
