mod common;

use common::props::*;
use proptest::prelude::*;

fn labeled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 2.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

/// Node count, edges, flattened embedding, labeled mask, node to label.
type MaskCase = (usize, Vec<(usize, usize)>, Vec<f64>, Vec<bool>, usize);

fn small_graph() -> impl Strategy<Value = MaskCase> {
    (2usize..20).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..3 * n),
            prop::collection::vec(-3.0f64..3.0, n * 3),
            prop::collection::vec(any::<bool>(), n),
            0..n,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hybrid_is_affine_invariant(
        (e, p) in pair_strategy(2..60),
        a in (0.1f64..10.0, -50.0f64..50.0),
        b in (0.1f64..10.0, -50.0f64..50.0),
        phi in 0.1f64..5.0,
    ) {
        hybrid_affine_invariance(&e, &p, a, b, phi)?;
    }

    #[test]
    fn znorm_has_unit_moments(x in vec_strategy(1..80)) {
        znorm_moments(&x)?;
    }

    #[test]
    fn znorm_of_constant_is_zero(v in -5.0f64..5.0, n in 1usize..20) {
        znorm_moments(&vec![v; n])?;
    }

    #[test]
    fn entropy_stays_in_bounds(logits in prop::collection::vec(-30.0f64..30.0, 2..120), c in 2usize..8) {
        entropy_bounds(&logits, c)?;
    }

    #[test]
    fn info_interpolates((e, d) in pair_strategy(1..60), tau in 0.01f64..0.99, n_sel in 0usize..200) {
        let d: Vec<f64> = d.iter().map(|v| v * 4.0).collect();
        info_interpolation(&e, &d, tau, n_sel)?;
    }

    #[test]
    fn kmedoids_is_sound(
        points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50),
        m in 1usize..8,
        seed in any::<u64>(),
    ) {
        kmedoids_properties(&points, m.min(points.len()), seed)?;
    }

    #[test]
    fn kmedoids_single_medoid_is_optimal(
        points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50),
        seed in any::<u64>(),
    ) {
        kmedoids_properties(&points, 1, seed)?;
    }

    #[test]
    fn masking_is_monotone((n, edges, h, labeled, extra) in small_graph()) {
        masking_monotone(n, &edges, &h, &labeled, extra)?;
    }

    #[test]
    fn select_batch_dominates(
        info in prop::collection::vec((-5i32..5).prop_map(|v| v as f64), 1..40),
        mask_seed in prop::collection::vec(any::<bool>(), 40),
        b in 1usize..6,
    ) {
        select_batch_properties(&info, &mask_seed[..info.len()], b)?;
    }

    #[test]
    fn auc_is_rank_invariant((scores, labels) in labeled_scores()) {
        auc_invariances(&scores, &labels)?;
    }
}
