mod common;

use adac::neighbors::{MetricConfig, NeighborIndex, Norm};
use adac::theory::{canonical_shaping, covering_number, greedy_cover, k_window, sampling_error, value_gap};
use adac::PenaltyMode;
use common::arb_batch;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cover_is_a_valid_alpha_net(batch in arb_batch(), alpha in 0.0f64..1.2) {
        let index = NeighborIndex::build(&batch, MetricConfig::default());
        let d = index.diameter();
        let centers = greedy_cover(&batch, alpha, Norm::Euclidean, d);
        let tr = batch.transitions();
        // every pair is within alpha of a same-action center
        for t in tr {
            prop_assert!(centers.iter().any(|&c| tr[c].a == t.a
                && Norm::Euclidean.distance(t.s.coords(), tr[c].s.coords()) / d.value <= alpha));
        }
        // centers are pairwise farther than alpha apart
        for (i, &x) in centers.iter().enumerate() {
            for &y in &centers[i + 1..] {
                if tr[x].a == tr[y].a {
                    prop_assert!(Norm::Euclidean.distance(tr[x].s.coords(), tr[y].s.coords()) / d.value > alpha);
                }
            }
        }
    }

    #[test]
    fn cover_shrinks_as_alpha_grows(batch in arb_batch(), a in 0.0f64..1.0, da in 0.0f64..1.0) {
        let m = MetricConfig::default();
        prop_assert!(covering_number(&batch, a + da, m) <= covering_number(&batch, a, m));
        prop_assert!(covering_number(&batch, a, m) <= batch.len());
    }

    #[test]
    fn gap_is_monotone(eps in 0.0f64..10.0, d in 0.0f64..1.0, r in 0.0f64..10.0, g in 0.0f64..0.99, bump in 0.001f64..1.0) {
        let base = value_gap(eps, d, r, g);
        prop_assert!(base >= 0.0);
        prop_assert!(value_gap(eps + bump, d, r, g) >= base);
        prop_assert!(value_gap(eps, d + bump, r, g) >= base);
        prop_assert!(value_gap(eps, d, r + bump, g) >= base);
        prop_assert!(value_gap(eps, d, r, (g + bump * 0.009).min(0.999)) >= base);
    }

    #[test]
    fn sampling_error_falls_with_k(q in 0.1f64..100.0, k in 1usize..10_000, n in 1usize..1000, delta in 0.001f64..0.999) {
        prop_assert!(sampling_error(q, k + 1, n, delta) <= sampling_error(q, k, n, delta));
        prop_assert!(sampling_error(q, k, n + 1, delta) >= sampling_error(q, k, n, delta));
    }

    #[test]
    fn k_window_lower_edge_meets_the_target(q in 0.1f64..50.0, eps in 0.1f64..10.0, n in 1usize..1000, delta in 0.01f64..0.99) {
        let w = k_window(q, eps, n, delta);
        prop_assert!(sampling_error(q, w.k_min.max(1), n, delta) <= eps * (1.0 + 1e-12));
        prop_assert_eq!(w.empty, w.k_min > w.k_max);
    }

    #[test]
    fn adaptive_shaping_is_linear_in_the_outlier(k in 2usize..10, r in 1.0f64..10.0, dr in 0.0f64..5.0, near in 0.0f64..0.5, far in 0.0f64..1.0) {
        // d/dr of (k - 1 + r - r ((k - 1) near + far)) / k
        let slope = (1.0 - far - (k - 1) as f64 * near) / k as f64;
        let lo = canonical_shaping(k, r, near, far, PenaltyMode::Adaptive);
        let hi = canonical_shaping(k, r + dr, near, far, PenaltyMode::Adaptive);
        prop_assert!((hi - lo - slope * dr).abs() < 1e-9);
        let avg_lo = canonical_shaping(k, r, near, far, PenaltyMode::Averagers);
        let avg_hi = canonical_shaping(k, r + dr, near, far, PenaltyMode::Averagers);
        prop_assert!(avg_hi >= avg_lo);
    }
}
