//! Value iteration on a [`DerivedMdp`] and the one-step lookup used to act
//! from states outside the core set.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Batch, StateVector};
use crate::derive::DerivedMdp;
use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: Vec<f64>,
    /// Row-major `states x actions`.
    pub q: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// Max-norm change of the final sweep.
    pub residual: f64,
    pub tol: f64,
    /// Max-norm change of every sweep, in order.
    #[serde(default, skip_serializing)]
    pub deltas: Vec<f64>,
}

impl Solution {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        let actions = self.q.len() / self.values.len().max(1);
        self.q[s * actions + a]
    }

    pub fn q_max(&self) -> f64 {
        self.q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// One synchronous Bellman backup: returns `(q, max_a q)` computed from `values`.
pub fn bellman_sweep(mdp: &DerivedMdp, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let actions = mdp.action_count;
    let q: Vec<f64> = (0..mdp.state_count() * actions)
        .into_par_iter()
        .map(|i| {
            let future: f64 = mdp.transitions[i].iter().map(|&(c, p)| p * values[c]).sum();
            mdp.reward[i] + mdp.gamma * future
        })
        .collect();
    let v = q
        .chunks_exact(actions)
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    (q, v)
}

/// Synchronous value iteration from zero values.
///
/// Stops once a sweep changes the values by at most
/// `tol * min(1, (1 - gamma) / gamma)`, which bounds the distance to the fixed
/// point by `tol`.
pub fn value_iteration(mdp: &DerivedMdp, tol: f64, max_iters: usize) -> Result<Solution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol {tol} must be > 0")));
    }
    if !(0.0..1.0).contains(&mdp.gamma) {
        return Err(Error::InvalidParameter(format!("gamma {} outside [0, 1)", mdp.gamma)));
    }
    if mdp.action_count == 0 || mdp.state_count() == 0 {
        return Err(Error::InvalidParameter("MDP has no states or actions".into()));
    }
    let threshold = if mdp.gamma == 0.0 {
        tol
    } else {
        tol * ((1.0 - mdp.gamma) / mdp.gamma).min(1.0)
    };
    let mut values = vec![0.0; mdp.state_count()];
    let mut deltas = Vec::new();
    for it in 1..=max_iters {
        let (q, next) = bellman_sweep(mdp, &values);
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        deltas.push(delta);
        values = next;
        if delta <= threshold {
            let policy = q
                .chunks_exact(mdp.action_count)
                .map(|row| argmax(row.iter().copied()))
                .collect();
            return Ok(Solution {
                values,
                q,
                policy,
                iterations: it,
                residual: delta,
                tol,
                deltas,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual: deltas.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// `R(s,a) + gamma * sum_s' P(s,a,s') V(s')` from the neighbors of `(s, a)`;
/// 0 when no neighbor qualifies.
pub fn one_step_q(
    mdp: &DerivedMdp,
    solution: &Solution,
    index: &NeighborIndex,
    s: &StateVector,
    a: usize,
) -> f64 {
    match mdp.one_step_model(index, s, a) {
        Some((r, row)) => {
            r + mdp.gamma * row.iter().map(|&(c, p)| p * solution.values[c]).sum::<f64>()
        }
        None => 0.0,
    }
}

/// Q value of any state: the solved table for core states, the one-step
/// lookup otherwise.
pub fn lookup_q(
    mdp: &DerivedMdp,
    solution: &Solution,
    index: &NeighborIndex,
    s: &StateVector,
    a: usize,
) -> f64 {
    match mdp.core_index(s) {
        Some(c) => solution.q(c, a),
        None => one_step_q(mdp, solution, index, s, a),
    }
}

pub fn greedy_action(
    mdp: &DerivedMdp,
    solution: &Solution,
    index: &NeighborIndex,
    s: &StateVector,
) -> usize {
    argmax((0..mdp.action_count).map(|a| lookup_q(mdp, solution, index, s, a)))
}

/// A solved derived MDP bundled with the index needed to act anywhere.
#[derive(Clone, Debug)]
pub struct DerivedController {
    pub mdp: DerivedMdp,
    pub solution: Solution,
    pub index: NeighborIndex,
}

impl DerivedController {
    pub fn new(mdp: DerivedMdp, solution: Solution, batch: &Batch) -> Self {
        let index = mdp.index_for(batch);
        DerivedController {
            mdp,
            solution,
            index,
        }
    }

    /// Derives, solves and indexes `batch` in one go.
    pub fn train(
        batch: &Batch,
        params: &crate::derive::DeriveParams,
        tol: f64,
        max_iters: usize,
    ) -> Result<Self> {
        params.validate()?;
        let index = NeighborIndex::build(batch, params.metric);
        let mdp = crate::derive::build_mdp_with_index(&index, params)?;
        let solution = value_iteration(&mdp, tol, max_iters)?;
        Ok(DerivedController {
            mdp,
            solution,
            index,
        })
    }

    pub fn q(&self, s: &StateVector, a: usize) -> f64 {
        lookup_q(&self.mdp, &self.solution, &self.index, s, a)
    }

    pub fn act(&self, s: &StateVector) -> usize {
        greedy_action(&self.mdp, &self.solution, &self.index, s)
    }
}
