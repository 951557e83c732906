#![allow(dead_code)]

use adac::dataset::{Batch, Transition};
use adac::derive::DerivedMdp;
use adac::neighbors::{Diameter, MetricConfig};
use adac::StateVector;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// One transition per trajectory, states on a small integer grid so that
/// exact ties and repeated states are common.
pub fn batch_from_rows(rows: Vec<(Vec<u8>, usize, u8, Vec<u8>)>, actions: usize) -> Batch {
    let transitions = rows
        .into_iter()
        .enumerate()
        .map(|(i, (s, a, r, sp))| Transition {
            s: StateVector(s.into_iter().map(f64::from).collect()),
            a,
            r: f64::from(r),
            s_next: StateVector(sp.into_iter().map(f64::from).collect()),
            traj_id: i as i64,
            t: 0,
        })
        .collect();
    Batch::new(transitions, actions, 8.0).expect("generated batch is valid")
}

pub fn arb_batch() -> impl Strategy<Value = Batch> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(dim, actions)| {
        let coords = prop::collection::vec(0u8..6, dim);
        let row = (coords.clone(), 0..actions, 0u8..=8, coords);
        prop::collection::vec(row, 1..40).prop_map(move |rows| batch_from_rows(rows, actions))
    })
}

/// Uniform random batch with real-valued states in `[0, 10)^dim`.
pub fn random_batch(rng: &mut impl Rng, n: usize, dim: usize, actions: usize) -> Batch {
    let point = |rng: &mut dyn rand::RngCore| {
        StateVector((0..dim).map(|_| rng.random_range(0.0..10.0)).collect())
    };
    let transitions = (0..n)
        .map(|i| Transition {
            s: point(rng),
            a: rng.random_range(0..actions),
            r: rng.random_range(0.0..4.0),
            s_next: point(rng),
            traj_id: i as i64,
            t: 0,
        })
        .collect();
    Batch::new(transitions, actions, 4.0).expect("random batch is valid")
}

/// Arbitrary finite MDP with dense random transitions.
pub fn random_mdp(rng: &mut impl Rng, states: usize, actions: usize, gamma: f64) -> DerivedMdp {
    let reward: Vec<f64> = (0..states * actions).map(|_| rng.random_range(-1.0..1.0)).collect();
    let transitions: Vec<Vec<(usize, f64)>> = (0..states * actions)
        .map(|_| {
            let support: Vec<usize> = (0..states).filter(|_| rng.random_bool(0.6)).collect();
            let support = if support.is_empty() { vec![rng.random_range(0..states)] } else { support };
            let w: Vec<f64> = support.iter().map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            support.into_iter().zip(w).map(|(s, w)| (s, w / total)).collect()
        })
        .collect();
    mdp_from_parts(reward, transitions, actions, gamma)
}

pub fn mdp_from_parts(
    reward: Vec<f64>,
    transitions: Vec<Vec<(usize, f64)>>,
    actions: usize,
    gamma: f64,
) -> DerivedMdp {
    let states = reward.len() / actions;
    serde_json::from_value(serde_json::json!({
        "core": (0..states).map(|i| vec![i as f64]).collect::<Vec<_>>(),
        "action_count": actions,
        "reward": reward,
        "transitions": transitions,
        "gamma": gamma,
        "mode": {"kind": "averagers"},
        "k": 1,
        "alpha": null,
        "metric": MetricConfig::default(),
        "diameter": Diameter { value: 1.0, degenerate: false },
        "empty_pairs": [],
    }))
    .expect("valid snapshot")
}

/// Exact value of a deterministic stationary policy: solves
/// `(I - gamma P_pi) v = r_pi`.
pub fn policy_value(mdp: &DerivedMdp, policy: &[usize]) -> Vec<f64> {
    let n = mdp.state_count();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = policy[s];
        r[s] = mdp.reward(s, a);
        for &(c, p) in mdp.row(s, a) {
            m[(s, c)] -= mdp.gamma * p;
        }
    }
    let v = m.lu().solve(&r).expect("I - gamma P is nonsingular");
    v.iter().copied().collect()
}

/// Optimal values by enumerating every deterministic policy and taking the
/// state-wise maximum (attained by one policy).
pub fn enumerate_optimal(mdp: &DerivedMdp) -> Vec<f64> {
    let n = mdp.state_count();
    let a = mdp.action_count;
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut policy = vec![0usize; n];
    loop {
        let v = policy_value(mdp, &policy);
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
        let mut i = 0;
        while i < n {
            policy[i] += 1;
            if policy[i] < a {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
