//! Behavior and learned signal policies, and batch collection.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Batch, StateVector};
use crate::env::{rollout, Controller, EnvState, IntersectionEnvConfig};
use crate::error::{Error, Result};
use crate::planner::DerivedController;

#[derive(Clone, Debug)]
pub enum Policy {
    /// Round-robin over all actions, one step each, starting at `offset`.
    Cyclic { actions: usize, offset: usize },
    Random { actions: usize, rng: ChaCha8Rng },
    FixedCycle(Vec<usize>),
    /// One precomputed cycle of actions with rate-proportional green times.
    Proportional { cycle: Vec<usize> },
    Greedy(Arc<DerivedController>),
    EpsilonNoisy {
        base: Box<Policy>,
        epsilon: f64,
        actions: usize,
        rng: ChaCha8Rng,
    },
}

impl Policy {
    pub fn cyclic(actions: usize) -> Self {
        Policy::Cyclic { actions, offset: 0 }
    }

    pub fn random(actions: usize, seed: u64) -> Self {
        Policy::Random {
            actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Green times proportional to `rates` over a cycle of `cycle_len` steps,
    /// apportioned by largest remainder (ties to the lower action).
    pub fn proportional(rates: &[f64], cycle_len: usize) -> Result<Self> {
        let total: f64 = rates.iter().sum();
        if rates.is_empty() || !(total > 0.0) || rates.iter().any(|r| *r < 0.0) {
            return Err(Error::InvalidParameter("rates must be non-negative with a positive sum".into()));
        }
        if cycle_len == 0 {
            return Err(Error::InvalidParameter("cycle length must be positive".into()));
        }
        let quotas: Vec<f64> = rates.iter().map(|r| r * cycle_len as f64 / total).collect();
        let mut steps: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..rates.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let missing = cycle_len - steps.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            steps[i] += 1;
        }
        let cycle = steps
            .iter()
            .enumerate()
            .flat_map(|(a, &n)| std::iter::repeat_n(a, n))
            .collect();
        Ok(Policy::Proportional { cycle })
    }

    pub fn greedy(controller: Arc<DerivedController>) -> Self {
        Policy::Greedy(controller)
    }

    pub fn epsilon_noisy(base: Policy, epsilon: f64, actions: usize, seed: u64) -> Self {
        Policy::EpsilonNoisy {
            base: Box::new(base),
            epsilon,
            actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Policy::Cyclic { .. } => "cyclic".into(),
            Policy::Random { .. } => "random".into(),
            Policy::FixedCycle(seq) => format!("fixed-cycle{seq:?}"),
            Policy::Proportional { .. } => "proportional".into(),
            Policy::Greedy(c) => format!("greedy({})", c.mdp.mode),
            Policy::EpsilonNoisy { base, epsilon, .. } => format!("{}+eps{epsilon}", base.name()),
        }
    }

    pub fn act(&mut self, state: &StateVector, t: usize) -> usize {
        match self {
            Policy::Cyclic { actions, offset } => (t + *offset) % *actions,
            Policy::Random { actions, rng } => rng.random_range(0..*actions),
            Policy::FixedCycle(seq) => seq[t % seq.len()],
            Policy::Proportional { cycle } => cycle[t % cycle.len()],
            Policy::Greedy(c) => c.act(state),
            Policy::EpsilonNoisy {
                base,
                epsilon,
                actions,
                rng,
            } => {
                // the base policy advances every step so its own stream is
                // independent of the noise draws
                let chosen = base.act(state, t);
                if rng.random::<f64>() < *epsilon {
                    rng.random_range(0..*actions)
                } else {
                    chosen
                }
            }
        }
    }
}

impl Controller for Policy {
    fn act(&mut self, state: &StateVector, t: usize) -> usize {
        Policy::act(self, state, t)
    }
}

/// Runs `episodes` rollouts of `horizon` steps from `start` and concatenates
/// them into a batch. Episode `e` starts at absolute time
/// `start.t + e * horizon`, so scheduled rates advance across episodes.
pub fn collect(
    config: &IntersectionEnvConfig,
    policy: &mut Policy,
    episodes: usize,
    horizon: usize,
    start: &EnvState,
    rng: &mut impl Rng,
) -> Result<Batch> {
    config.validate()?;
    if episodes == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("episodes and horizon must be >= 1".into()));
    }
    if start.queues.len() != config.flow_count() {
        return Err(Error::InvalidParameter(format!(
            "start state has {} queues for {} flows",
            start.queues.len(),
            config.flow_count()
        )));
    }
    let mut transitions = Vec::with_capacity(episodes * horizon);
    for e in 0..episodes {
        let s0 = EnvState {
            queues: start.queues.clone(),
            t: start.t + (e * horizon) as u64,
        };
        let out = rollout(config, &s0, policy, horizon, 1.0, rng);
        transitions.extend(out.trajectory.into_iter().map(|mut tr| {
            tr.traj_id = e as i64;
            tr
        }));
    }
    Batch::new(transitions, config.action_count(), config.reward_bound())
}

/// Trajectory length of the two-flow demonstration batch.
pub const TWO_FLOW_DEMO_HORIZON: usize = 10;

/// Two cyclic trajectories on the two-flow intersection from queues (1, 3),
/// one starting with NS and one with EW.
pub fn two_flow_cyclic_batch(horizon: usize) -> Result<Batch> {
    let cfg = IntersectionEnvConfig::two_flow();
    let start = EnvState::new(vec![1, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ns_first = collect(&cfg, &mut Policy::cyclic(2), 1, horizon, &start, &mut rng)?;
    let mut ew = Policy::Cyclic {
        actions: 2,
        offset: 1,
    };
    let ew_first = collect(&cfg, &mut ew, 1, horizon, &start, &mut rng)?;
    ns_first.concat(&ew_first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_alternates() {
        let mut p = Policy::cyclic(2);
        let s = StateVector::from([0.0, 0.0]);
        let acts: Vec<usize> = (0..4).map(|t| p.act(&s, t)).collect();
        assert_eq!(acts, vec![0, 1, 0, 1]);
    }

    #[test]
    fn cyclic_histogram_is_uniform() {
        let mut p = Policy::cyclic(3);
        let s = StateVector::from([0.0]);
        let mut counts = [0usize; 3];
        for t in 0..100 {
            counts[p.act(&s, t)] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn zero_noise_matches_base() {
        let mut base = Policy::random(4, 9);
        let mut noisy = Policy::epsilon_noisy(Policy::random(4, 9), 0.0, 4, 1);
        let s = StateVector::from([1.0]);
        for t in 0..1000 {
            assert_eq!(base.act(&s, t), noisy.act(&s, t));
        }
    }

    #[test]
    fn full_noise_is_uniform_ish() {
        let mut noisy = Policy::epsilon_noisy(Policy::cyclic(2), 1.0, 2, 3);
        let s = StateVector::from([1.0]);
        let ones = (0..4000).filter(|&t| noisy.act(&s, t) == 1).count();
        assert!((1800..2200).contains(&ones));
    }

    #[test]
    fn proportional_largest_remainder() {
        let p = Policy::proportional(&[1.0, 3.0], 4).unwrap();
        match p {
            Policy::Proportional { cycle } => assert_eq!(cycle, vec![0, 1, 1, 1]),
            _ => unreachable!(),
        }
        // quotas 3.33, 3.33, 3.33 -> the leftover step goes to action 0
        match Policy::proportional(&[1.0, 1.0, 1.0], 10).unwrap() {
            Policy::Proportional { cycle } => assert_eq!(cycle, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]),
            _ => unreachable!(),
        }
        assert!(Policy::proportional(&[0.0, 0.0], 4).is_err());
    }

    #[test]
    fn reconstruction_batch_shape() {
        let b = two_flow_cyclic_batch(20).unwrap();
        assert_eq!(b.len(), 40);
        assert_eq!(b.action_count(), 2);
        assert_eq!(b.reward_bound(), 4.0);
        assert_eq!(b.transitions()[0].a, 0);
        assert_eq!(b.transitions()[20].a, 1);
        assert_eq!(b.transitions()[20].traj_id, 1);
    }

    #[test]
    fn single_step_collection() {
        let cfg = IntersectionEnvConfig::two_flow();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = collect(&cfg, &mut Policy::cyclic(2), 1, 1, &EnvState::new(vec![1, 3]), &mut rng).unwrap();
        assert_eq!(b.len(), 1);
    }
}
