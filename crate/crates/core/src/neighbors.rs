//! Per-action nearest-neighbor search over the source pairs `(s_i, a_i)` of a
//! batch.
//!
//! Pairs with different actions are infinitely far apart, so the index keeps
//! one point set per action. Distances are normalized by the diameter of the
//! core-state cloud; the distance threshold `alpha` is expressed in those
//! normalized units.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{core_states, Batch, StateVector, Transition};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Euclidean,
    Manhattan,
}

impl Norm {
    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Norm::Euclidean => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Norm::Manhattan => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiameterMode {
    #[default]
    Exact,
    /// Max distance from `probes` randomly chosen points to all points.
    Sampled { probes: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub norm: Norm,
    pub diameter_mode: DiameterMode,
}

/// Normalizer for raw distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diameter {
    pub value: f64,
    /// Set when the cloud has no two distinct points; `value` is then 1.
    pub degenerate: bool,
}

/// Diameter of the batch's core-state cloud.
pub fn diameter(batch: &Batch, norm: Norm, mode: DiameterMode) -> Diameter {
    cloud_diameter(&core_states(batch), norm, mode)
}

pub fn cloud_diameter(points: &[StateVector], norm: Norm, mode: DiameterMode) -> Diameter {
    let farthest_from = |i: usize| {
        let p = points[i].coords();
        points
            .iter()
            .map(|q| norm.distance(p, q.coords()))
            .fold(0.0, f64::max)
    };
    let value = match mode {
        DiameterMode::Exact => (0..points.len())
            .into_par_iter()
            .map(|i| {
                let p = points[i].coords();
                points[i + 1..]
                    .iter()
                    .map(|q| norm.distance(p, q.coords()))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max),
        DiameterMode::Sampled { probes, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = points.len();
            sample(&mut rng, n, probes.min(n))
                .into_iter()
                .map(farthest_from)
                .fold(0.0, f64::max)
        }
    };
    if value > 0.0 {
        Diameter {
            value,
            degenerate: false,
        }
    } else {
        Diameter {
            value: 1.0,
            degenerate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Position of the transition in the batch.
    pub index: usize,
    pub distance: f64,
    pub normalized: f64,
}

/// At most `k` same-action neighbors, ascending by distance then index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.index)
    }

    pub fn mean_normalized_distance(&self) -> f64 {
        self.entries.iter().map(|e| e.normalized).sum::<f64>() / self.entries.len() as f64
    }
}

#[derive(Clone, Debug)]
struct ActionPoints {
    indices: Vec<usize>,
    coords: Vec<f64>,
}

/// Exact brute-force index, one point set per action.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    batch: Batch,
    norm: Norm,
    diameter: Diameter,
    per_action: Vec<ActionPoints>,
}

impl NeighborIndex {
    pub fn build(batch: &Batch, metric: MetricConfig) -> Self {
        let d = diameter(batch, metric.norm, metric.diameter_mode);
        Self::with_diameter(batch, metric.norm, d)
    }

    /// Builds the index with a known normalizer, e.g. one restored from a
    /// serialized model.
    pub fn with_diameter(batch: &Batch, norm: Norm, diameter: Diameter) -> Self {
        let dim = batch.dim();
        let mut per_action: Vec<ActionPoints> = (0..batch.action_count())
            .map(|_| ActionPoints {
                indices: Vec::new(),
                coords: Vec::new(),
            })
            .collect();
        for (i, tr) in batch.transitions().iter().enumerate() {
            let slot = &mut per_action[tr.a];
            slot.indices.push(i);
            slot.coords.extend_from_slice(tr.s.coords());
        }
        debug_assert!(per_action.iter().all(|p| p.coords.len() == p.indices.len() * dim));
        NeighborIndex {
            batch: batch.clone(),
            norm,
            diameter,
            per_action,
        }
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn diameter(&self) -> Diameter {
        self.diameter
    }

    pub fn action_count(&self) -> usize {
        self.per_action.len()
    }

    /// Number of source points recorded for `action`.
    pub fn action_size(&self, action: usize) -> usize {
        self.per_action.get(action).map_or(0, |p| p.indices.len())
    }

    pub fn transition(&self, index: usize) -> &Transition {
        &self.batch.transitions()[index]
    }

    /// The `k` nearest same-action sources with normalized distance `<= alpha`.
    /// `alpha` may be `f64::INFINITY`.
    pub fn query(&self, s: &StateVector, action: usize, k: usize, alpha: f64) -> NeighborSet {
        let Some(points) = self.per_action.get(action) else {
            return NeighborSet::default();
        };
        if k == 0 || points.indices.is_empty() {
            return NeighborSet::default();
        }
        let dim = self.batch.dim();
        let q = s.coords();
        let mut hits: Vec<Neighbor> = points
            .indices
            .iter()
            .zip(points.coords.chunks_exact(dim))
            .filter_map(|(&index, p)| {
                let distance = self.norm.distance(q, p);
                let normalized = distance / self.diameter.value;
                (normalized <= alpha).then_some(Neighbor {
                    index,
                    distance,
                    normalized,
                })
            })
            .collect();
        let order = |a: &Neighbor, b: &Neighbor| -> Ordering {
            a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(order);
        NeighborSet { entries: hits }
    }
}
