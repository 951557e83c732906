//! Derivation of the finite pessimistic MDP over core states.
//!
//! For every core state `s` and action `a` the `k` nearest same-action
//! transitions (within normalized distance `alpha`) are averaged: the reward
//! is the mean of the neighbors' rewards minus a distance penalty, and the
//! transition row is the empirical distribution of their next states. Pairs
//! with no admissible neighbor get reward 0 and an absorbing self-loop.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{core_states, Batch, StateKey, StateVector};
use crate::error::{Error, Result};
use crate::neighbors::{Diameter, MetricConfig, NeighborIndex, NeighborSet};

/// How shaped rewards discount distant neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PenaltyMode {
    /// Plain averaging, identical to `Fixed { c: 0.0 }`.
    Averagers,
    /// Penalty `c` per unit of normalized distance.
    Fixed { c: f64 },
    /// Penalty equal to the largest reward in the neighborhood.
    Adaptive,
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyMode::Averagers => write!(f, "none"),
            PenaltyMode::Fixed { c } => write!(f, "fixed:{c}"),
            PenaltyMode::Adaptive => write!(f, "adaptive"),
        }
    }
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "averagers" => Ok(PenaltyMode::Averagers),
            "adaptive" => Ok(PenaltyMode::Adaptive),
            _ => {
                let c = s
                    .strip_prefix("fixed:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "penalty `{s}` (expected none, fixed:C or adaptive)"
                        ))
                    })?;
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParameter(format!("penalty cost {c} must be >= 0")));
                }
                Ok(PenaltyMode::Fixed { c })
            }
        }
    }
}

/// Derivation hyperparameters. `alpha` is in normalized distance units and
/// may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeriveParams {
    pub k: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub mode: PenaltyMode,
    pub metric: MetricConfig,
}

impl Default for DeriveParams {
    fn default() -> Self {
        DeriveParams {
            k: 5,
            alpha: 0.8,
            gamma: 0.99,
            mode: PenaltyMode::Adaptive,
            metric: MetricConfig::default(),
        }
    }
}

impl DeriveParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha {} must be >= 0", self.alpha)));
        }
        if let PenaltyMode::Fixed { c } = self.mode {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("penalty cost {c} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Shaped reward of a neighborhood. `rewards[i]` belongs to
/// `neighbors.entries[i]`; the divisor is the realized neighbor count.
pub fn shaped_reward(neighbors: &NeighborSet, rewards: &[f64], mode: PenaltyMode) -> f64 {
    debug_assert_eq!(neighbors.len(), rewards.len());
    let n = neighbors.len() as f64;
    let cost = match mode {
        PenaltyMode::Averagers => 0.0,
        PenaltyMode::Fixed { c } => c,
        PenaltyMode::Adaptive => rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    neighbors
        .entries
        .iter()
        .zip(rewards)
        .map(|(e, r)| r - cost * e.normalized)
        .sum::<f64>()
        / n
}

/// Empirical next-state distribution. `next_core[i]` is the core index of the
/// next state of `neighbors.entries[i]`. The row is sorted by core index.
pub fn empirical_transition(neighbors: &NeighborSet, next_core: &[usize]) -> Vec<(usize, f64)> {
    debug_assert_eq!(neighbors.len(), next_core.len());
    let mut counts: Vec<(usize, usize)> = Vec::with_capacity(next_core.len());
    let mut sorted = next_core.to_vec();
    sorted.sort_unstable();
    for c in sorted {
        match counts.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => counts.push((c, 1)),
        }
    }
    let total = next_core.len() as f64;
    counts
        .into_iter()
        .map(|(c, n)| (c, n as f64 / total))
        .collect()
}

/// Finite MDP over the core states of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "MdpSnapshot", into = "MdpSnapshot")]
pub struct DerivedMdp {
    pub core: Vec<StateVector>,
    pub action_count: usize,
    /// Row-major `core.len() x action_count`.
    pub reward: Vec<f64>,
    /// Sparse rows indexed like `reward`; entries are `(core index, probability)`.
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub gamma: f64,
    pub mode: PenaltyMode,
    pub k: usize,
    pub alpha: f64,
    pub metric: MetricConfig,
    pub diameter: Diameter,
    pub empty_pairs: Vec<(usize, usize)>,
    lookup: HashMap<StateKey, usize>,
}

impl DerivedMdp {
    pub fn state_count(&self) -> usize {
        self.core.len()
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.action_count + a]
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.action_count + a]
    }

    /// Index of `s` among the core states under exact equality.
    pub fn core_index(&self, s: &StateVector) -> Option<usize> {
        self.lookup.get(&s.key()).copied()
    }

    pub fn params(&self) -> DeriveParams {
        DeriveParams {
            k: self.k,
            alpha: self.alpha,
            gamma: self.gamma,
            mode: self.mode,
            metric: self.metric,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Neighbor index over `batch` using this MDP's metric and normalizer.
    pub fn index_for(&self, batch: &Batch) -> NeighborIndex {
        NeighborIndex::with_diameter(batch, self.metric.norm, self.diameter)
    }

    /// Reward and transition row for an arbitrary state, computed the same way
    /// as for core states. `None` when no neighbor qualifies.
    pub fn one_step_model(
        &self,
        index: &NeighborIndex,
        s: &StateVector,
        a: usize,
    ) -> Option<(f64, Vec<(usize, f64)>)> {
        let neighbors = index.query(s, a, self.k, self.alpha);
        if neighbors.is_empty() {
            return None;
        }
        let rewards: Vec<f64> = neighbors.indices().map(|i| index.transition(i).r).collect();
        let next: Vec<usize> = neighbors
            .indices()
            .map(|i| {
                self.core_index(&index.transition(i).s_next)
                    .expect("every next state is a core state")
            })
            .collect();
        Some((
            shaped_reward(&neighbors, &rewards, self.mode),
            empirical_transition(&neighbors, &next),
        ))
    }
}

fn build_lookup(core: &[StateVector]) -> HashMap<StateKey, usize> {
    core.iter().enumerate().map(|(i, s)| (s.key(), i)).collect()
}

/// Builds the neighbor index for `params.metric` and derives the MDP.
pub fn build_mdp(batch: &Batch, params: &DeriveParams) -> Result<DerivedMdp> {
    params.validate()?;
    let index = NeighborIndex::build(batch, params.metric);
    build_mdp_with_index(&index, params)
}

/// Derives the MDP from a prebuilt index (whose batch and normalizer are used).
pub fn build_mdp_with_index(index: &NeighborIndex, params: &DeriveParams) -> Result<DerivedMdp> {
    params.validate()?;
    let batch = index.batch();
    let core = core_states(batch);
    let lookup = build_lookup(&core);
    let next_core: Vec<usize> = batch
        .transitions()
        .iter()
        .map(|t| {
            lookup.get(&t.s_next.key()).copied().ok_or_else(|| {
                Error::InvalidBatch("next state missing from core set".into())
            })
        })
        .collect::<Result<_>>()?;
    let actions = batch.action_count();

    let rows: Vec<(f64, Vec<(usize, f64)>, bool)> = core
        .par_iter()
        .enumerate()
        .flat_map_iter(|(si, s)| {
            let next_core = &next_core;
            (0..actions).map(move |a| {
                let neighbors = index.query(s, a, params.k, params.alpha);
                if neighbors.is_empty() {
                    return (0.0, vec![(si, 1.0)], true);
                }
                let rewards: Vec<f64> =
                    neighbors.indices().map(|i| batch.transitions()[i].r).collect();
                let next: Vec<usize> = neighbors.indices().map(|i| next_core[i]).collect();
                (
                    shaped_reward(&neighbors, &rewards, params.mode),
                    empirical_transition(&neighbors, &next),
                    false,
                )
            })
        })
        .collect();

    let mut reward = Vec::with_capacity(rows.len());
    let mut transitions = Vec::with_capacity(rows.len());
    let mut empty_pairs = Vec::new();
    for (i, (r, row, empty)) in rows.into_iter().enumerate() {
        if empty {
            empty_pairs.push((i / actions, i % actions));
        }
        reward.push(r);
        transitions.push(row);
    }

    Ok(DerivedMdp {
        core,
        action_count: actions,
        reward,
        transitions,
        gamma: params.gamma,
        mode: params.mode,
        k: params.k,
        alpha: params.alpha,
        metric: params.metric,
        diameter: index.diameter(),
        empty_pairs,
        lookup,
    })
}

/// Serialized form of [`DerivedMdp`]; an infinite `alpha` is written as `null`.
#[derive(Serialize, Deserialize)]
struct MdpSnapshot {
    core: Vec<StateVector>,
    action_count: usize,
    reward: Vec<f64>,
    transitions: Vec<Vec<(usize, f64)>>,
    gamma: f64,
    mode: PenaltyMode,
    k: usize,
    alpha: Option<f64>,
    metric: MetricConfig,
    diameter: Diameter,
    empty_pairs: Vec<(usize, usize)>,
}

impl From<MdpSnapshot> for DerivedMdp {
    fn from(s: MdpSnapshot) -> Self {
        let lookup = build_lookup(&s.core);
        DerivedMdp {
            core: s.core,
            action_count: s.action_count,
            reward: s.reward,
            transitions: s.transitions,
            gamma: s.gamma,
            mode: s.mode,
            k: s.k,
            alpha: s.alpha.unwrap_or(f64::INFINITY),
            metric: s.metric,
            diameter: s.diameter,
            empty_pairs: s.empty_pairs,
            lookup,
        }
    }
}

impl From<DerivedMdp> for MdpSnapshot {
    fn from(m: DerivedMdp) -> Self {
        MdpSnapshot {
            core: m.core,
            action_count: m.action_count,
            reward: m.reward,
            transitions: m.transitions,
            gamma: m.gamma,
            mode: m.mode,
            k: m.k,
            alpha: m.alpha.is_finite().then_some(m.alpha),
            metric: m.metric,
            diameter: m.diameter,
            empty_pairs: m.empty_pairs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{table1_batch, Transition};

    fn params(mode: PenaltyMode) -> DeriveParams {
        DeriveParams {
            k: 3,
            alpha: f64::INFINITY,
            gamma: 0.99,
            mode,
            metric: MetricConfig::default(),
        }
    }

    fn table1(mode: PenaltyMode) -> DerivedMdp {
        build_mdp(&table1_batch(), &params(mode)).unwrap()
    }

    fn core_of(mdp: &DerivedMdp, s: [f64; 2]) -> usize {
        mdp.core_index(&s.into()).unwrap()
    }

    #[test]
    fn table1_averagers_and_fixed_and_adaptive() {
        let avg = table1(PenaltyMode::Averagers);
        let s23 = core_of(&avg, [2.0, 3.0]);
        assert!((avg.reward(s23, 0) - 8.0 / 3.0).abs() < 1e-12);
        assert!((avg.reward(s23, 1) - 2.0).abs() < 1e-12);

        let c1 = table1(PenaltyMode::Fixed { c: 1.0 });
        let s61 = core_of(&c1, [6.0, 1.0]);
        assert!((c1.reward(s61, 0) - 2.29).abs() < 0.005);

        let ad = table1(PenaltyMode::Adaptive);
        assert!((ad.reward(s61, 0) - 1.17).abs() < 0.005);
        let expected = 8.0 / 3.0 - 4.0 * (1.0 + 20f64.sqrt()) / (3.0 * 52f64.sqrt());
        assert!((ad.reward(s23, 0) - expected).abs() < 1e-12);
        assert!((ad.reward(s23, 0) - 1.655).abs() < 0.001);
    }

    #[test]
    fn table1_transition_row() {
        let mdp = table1(PenaltyMode::Adaptive);
        let s23 = core_of(&mdp, [2.0, 3.0]);
        let mut expected = vec![
            (core_of(&mdp, [1.0, 5.0]), 1.0 / 3.0),
            (core_of(&mdp, [2.0, 3.0]), 1.0 / 3.0),
            (core_of(&mdp, [0.0, 5.0]), 1.0 / 3.0),
        ];
        expected.sort_by_key(|e| e.0);
        assert_eq!(mdp.row(s23, 0), expected.as_slice());
        assert_eq!(mdp.state_count(), 5);
        assert!(mdp.empty_pairs.is_empty());
    }

    #[test]
    fn single_neighbor_row_is_deterministic() {
        let set = NeighborSet {
            entries: vec![crate::neighbors::Neighbor {
                index: 0,
                distance: 0.0,
                normalized: 0.0,
            }],
        };
        assert_eq!(empirical_transition(&set, &[4]), vec![(4, 1.0)]);
    }

    #[test]
    fn duplicated_transition_counts_twice() {
        let e = |index| crate::neighbors::Neighbor {
            index,
            distance: 0.0,
            normalized: 0.0,
        };
        let set = NeighborSet {
            entries: vec![e(0), e(1), e(2)],
        };
        assert_eq!(empirical_transition(&set, &[2, 5, 2]), vec![(2, 2.0 / 3.0), (5, 1.0 / 3.0)]);
    }

    #[test]
    fn untaken_action_falls_back_to_self_loop() {
        let transitions: Vec<Transition> = table1_batch()
            .transitions()
            .iter()
            .filter(|t| t.a == 0)
            .cloned()
            .enumerate()
            .map(|(i, mut t)| {
                t.traj_id = i as i64;
                t
            })
            .collect();
        let batch = Batch::new(transitions, 2, 4.0).unwrap();
        let mdp = build_mdp(&batch, &params(PenaltyMode::Adaptive)).unwrap();
        assert_eq!(mdp.empty_pairs.len(), mdp.state_count());
        for s in 0..mdp.state_count() {
            assert!(mdp.empty_pairs.contains(&(s, 1)));
            assert_eq!(mdp.reward(s, 1), 0.0);
            assert_eq!(mdp.row(s, 1), &[(s, 1.0)]);
        }
    }

    #[test]
    fn equal_rewards_make_fixed_match_adaptive() {
        // every EW reward in the example is 2
        let ad = table1(PenaltyMode::Adaptive);
        let c2 = table1(PenaltyMode::Fixed { c: 2.0 });
        for s in 0..ad.state_count() {
            assert_eq!(ad.reward(s, 1), c2.reward(s, 1));
        }
    }

    #[test]
    fn penalty_parsing() {
        assert_eq!("none".parse::<PenaltyMode>().unwrap(), PenaltyMode::Averagers);
        assert_eq!("adaptive".parse::<PenaltyMode>().unwrap(), PenaltyMode::Adaptive);
        assert_eq!("fixed:2.5".parse::<PenaltyMode>().unwrap(), PenaltyMode::Fixed { c: 2.5 });
        assert!("fixed:-1".parse::<PenaltyMode>().is_err());
        assert!("fixed".parse::<PenaltyMode>().is_err());
    }

    #[test]
    fn invalid_params() {
        let b = table1_batch();
        let mut p = params(PenaltyMode::Adaptive);
        p.gamma = 1.0;
        assert!(build_mdp(&b, &p).is_err());
        p.gamma = 0.5;
        p.k = 0;
        assert!(build_mdp(&b, &p).is_err());
    }

    #[test]
    fn snapshot_roundtrip_keeps_infinite_alpha() {
        let mdp = table1(PenaltyMode::Adaptive);
        let json = mdp.to_json().unwrap();
        assert!(json.contains("\"alpha\":null"));
        let back: DerivedMdp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mdp);
        assert_eq!(back.core_index(&[0.0, 5.0].into()), Some(4));
    }
}
