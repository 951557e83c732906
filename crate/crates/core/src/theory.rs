//! Quantities entering the value-gap guarantee of the adaptive derivation:
//! covering number of the observed state-action pairs, the sampling error of
//! `k`-neighbor averages, the worst-case mean neighbor distance, and the
//! resulting suboptimality bound
//!
//! ```text
//! gap = (2 * eps_s + d_bar_max * R_max) / (1 - gamma)
//! ```
//!
//! valid with probability `1 - delta` when
//! `(Q_max / eps_s)^2 ln(2 N / delta) <= k <= 2 N / delta`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Batch;
use crate::derive::{shaped_reward, DerivedMdp, PenaltyMode};
use crate::neighbors::{Diameter, MetricConfig, Neighbor, NeighborIndex, NeighborSet, Norm};
use crate::planner::Solution;

/// Greedy `alpha`-net over the batch's `(s_i, a_i)` pairs in file order.
/// Returns the transition indices chosen as centers. Pairs with different
/// actions never cover each other.
pub fn greedy_cover(batch: &Batch, alpha: f64, norm: Norm, diameter: Diameter) -> Vec<usize> {
    let mut centers: Vec<Vec<usize>> = vec![Vec::new(); batch.action_count()];
    let tr = batch.transitions();
    for (i, t) in tr.iter().enumerate() {
        let covered = centers[t.a].iter().any(|&c| {
            norm.distance(t.s.coords(), tr[c].s.coords()) / diameter.value <= alpha
        });
        if !covered {
            centers[t.a].push(i);
        }
    }
    let mut all: Vec<usize> = centers.into_iter().flatten().collect();
    all.sort_unstable();
    all
}

/// Size of the greedy `alpha`-net, normalizing by the core-state diameter.
pub fn covering_number(batch: &Batch, alpha: f64, metric: MetricConfig) -> usize {
    let d = crate::neighbors::diameter(batch, metric.norm, metric.diameter_mode);
    greedy_cover(batch, alpha, metric.norm, d).len()
}

/// `q_max * sqrt(ln(2 n_cov / delta) / k)`.
pub fn sampling_error(q_max: f64, k: usize, n_cov: usize, delta: f64) -> f64 {
    q_max * ((2.0 * n_cov as f64 / delta).ln() / k as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct KWindow {
    pub k_min: usize,
    pub k_max: usize,
    pub empty: bool,
}

/// Admissible range of `k` for a target sampling error.
pub fn k_window(q_max: f64, epsilon_s: f64, n_cov: usize, delta: f64) -> KWindow {
    let ratio = 2.0 * n_cov as f64 / delta;
    let k_min = ((q_max / epsilon_s).powi(2) * ratio.ln()).ceil() as usize;
    let k_max = ratio.floor() as usize;
    KWindow {
        k_min,
        k_max,
        empty: k_min > k_max,
    }
}

/// Largest mean normalized neighbor distance over all non-empty
/// `(core state, action)` queries of the derivation.
pub fn d_bar_max(mdp: &DerivedMdp, index: &NeighborIndex) -> f64 {
    mdp.core
        .par_iter()
        .map(|s| {
            (0..mdp.action_count)
                .map(|a| index.query(s, a, mdp.k, mdp.alpha))
                .filter(|n| !n.is_empty())
                .map(|n| n.mean_normalized_distance())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

pub fn value_gap(epsilon_s: f64, d_bar_max: f64, r_max: f64, gamma: f64) -> f64 {
    (2.0 * epsilon_s + d_bar_max * r_max) / (1.0 - gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacReport {
    pub covering_number: usize,
    pub k: usize,
    pub epsilon_s: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub window_empty: bool,
    pub d_bar_max: f64,
    pub gap: f64,
    pub delta: f64,
    /// Largest solved Q value.
    pub q_max: f64,
    /// Analytic ceiling `R_max / (1 - gamma)`.
    pub q_max_ceiling: f64,
    pub r_max_bound: f64,
    pub gamma: f64,
}

/// Assembles the bound for a solved derivation. `alpha` is the covering radius
/// in normalized units.
pub fn pac_bound(
    batch: &Batch,
    mdp: &DerivedMdp,
    solution: &Solution,
    index: &NeighborIndex,
    delta: f64,
    alpha: f64,
) -> PacReport {
    let n_cov = greedy_cover(batch, alpha, index.norm(), index.diameter()).len();
    let q_max = solution.q_max();
    let epsilon_s = sampling_error(q_max, mdp.k, n_cov, delta);
    let window = k_window(q_max, epsilon_s, n_cov, delta);
    let d_bar = d_bar_max(mdp, index);
    let r_max = batch.reward_bound();
    PacReport {
        covering_number: n_cov,
        k: mdp.k,
        epsilon_s,
        k_min: window.k_min,
        k_max: window.k_max,
        window_empty: window.empty,
        d_bar_max: d_bar,
        gap: value_gap(epsilon_s, d_bar, r_max, mdp.gamma),
        delta,
        q_max,
        q_max_ceiling: r_max / (1.0 - mdp.gamma),
        r_max_bound: r_max,
        gamma: mdp.gamma,
    }
}

/// Shaped reward of a synthetic neighborhood: `k - 1` neighbors with reward 1
/// at normalized distance `d_near` and one with reward `r_max` at `d_far`.
pub fn canonical_shaping(k: usize, r_max: f64, d_near: f64, d_far: f64, mode: PenaltyMode) -> f64 {
    let entry = |index, d| Neighbor {
        index,
        distance: d,
        normalized: d,
    };
    let mut entries: Vec<Neighbor> = (0..k.saturating_sub(1)).map(|i| entry(i, d_near)).collect();
    entries.push(entry(k - 1, d_far));
    let mut rewards = vec![1.0; k - 1];
    rewards.push(r_max);
    shaped_reward(&NeighborSet { entries }, &rewards, mode)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapingRow {
    pub r_max: f64,
    pub mode: String,
    pub shaped_reward: f64,
}

/// Curve data for the canonical neighborhood: one row per `(r_max, mode)`.
pub fn shaping_sweep(
    k: usize,
    d_near: f64,
    d_far: f64,
    r_max_values: &[f64],
    modes: &[PenaltyMode],
) -> Vec<ShapingRow> {
    r_max_values
        .iter()
        .flat_map(|&r| {
            modes.iter().map(move |&m| ShapingRow {
                r_max: r,
                mode: m.to_string(),
                shaped_reward: canonical_shaping(k, r, d_near, d_far, m),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::table1_batch;
    use crate::derive::{build_mdp, DeriveParams};

    #[test]
    fn table1_cover() {
        let b = table1_batch();
        let m = MetricConfig::default();
        assert_eq!(covering_number(&b, 1.0, m), 2);
        assert_eq!(covering_number(&b, 1e-9, m), 6);
        assert_eq!(covering_number(&b, 0.2, m), 4);
    }

    #[test]
    fn sampling_error_values() {
        let e = sampling_error(10.0, 761, 100, 0.1);
        assert!((e - 0.9994).abs() < 1e-4 && e <= 1.0);
        let e2 = sampling_error(10.0, 2 * 761, 100, 0.1);
        assert!((e / e2 - 2f64.sqrt()).abs() < 1e-12);
        assert!(sampling_error(10.0, usize::MAX, 100, 0.1) < 1e-6);
    }

    #[test]
    fn k_window_values() {
        assert_eq!(
            k_window(10.0, 1.0, 100, 0.1),
            KWindow {
                k_min: 761,
                k_max: 2000,
                empty: false
            }
        );
        let w = k_window(3.0, 3.0, 1, 0.5);
        assert_eq!((w.k_min, w.k_max), (2, 4));
        // tiny error target: k_min explodes past k_max
        assert!(k_window(100.0, 0.01, 1, 0.5).empty);
    }

    #[test]
    fn d_bar_max_table1() {
        let p = DeriveParams {
            k: 3,
            alpha: f64::INFINITY,
            ..DeriveParams::default()
        };
        let b = table1_batch();
        let idx = NeighborIndex::build(&b, p.metric);
        let mdp = build_mdp(&b, &p).unwrap();
        let expected = (41f64.sqrt() + 20f64.sqrt() + 52f64.sqrt()) / (3.0 * 52f64.sqrt());
        assert!((d_bar_max(&mdp, &idx) - expected).abs() < 1e-12);
        assert!((expected - 0.836).abs() < 5e-4);
    }

    #[test]
    fn gap_formula() {
        assert!((value_gap(1.0, 0.1, 5.0, 0.9) - 25.0).abs() < 1e-12);
        assert_eq!(value_gap(0.0, 0.0, 5.0, 0.0), 0.0);
    }

    #[test]
    fn canonical_configs() {
        assert_eq!(canonical_shaping(5, 1.0, 0.3, 0.7, PenaltyMode::Averagers), 1.0);
        let d = 0.4;
        assert!((canonical_shaping(5, 1.0, d, d, PenaltyMode::Adaptive) - (1.0 - d)).abs() < 1e-12);
        let avg = canonical_shaping(5, 3.0, 0.2, 0.9, PenaltyMode::Averagers);
        let fixed = canonical_shaping(5, 3.0, 0.2, 0.9, PenaltyMode::Fixed { c: 1.5 });
        let mean_d = (4.0 * 0.2 + 0.9) / 5.0;
        assert!((fixed - (avg - 1.5 * mean_d)).abs() < 1e-12);
    }
}
