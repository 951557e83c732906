//! Synthetic signalized intersections.
//!
//! Each step, every flow first receives its arrivals and then each flow in the
//! active phase discharges up to `capacity` vehicles. The reward is the number
//! of vehicles served and the observation is the vector of post-service
//! queues.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{StateVector, Transition};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub name: String,
    /// Mean arrivals per step.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrivals {
    Deterministic,
    Poisson { seed: u64 },
}

/// Rates in force for `duration` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub duration: u64,
    pub rates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEnvConfig {
    pub flows: Vec<Flow>,
    pub arrivals: Arrivals,
    /// Each phase (action) is the set of flows it serves.
    pub phases: Vec<Vec<usize>>,
    /// Vehicles served per step per active flow.
    pub capacity: u64,
    /// Optional piecewise-constant rate override, repeated cyclically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ScheduleSegment>>,
    pub horizon: usize,
}

impl IntersectionEnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let n = self.flows.len();
        if n == 0 {
            return bad("no flows".into());
        }
        if self.phases.is_empty() {
            return bad("no phases".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.is_empty() {
                return bad(format!("phase {i} is empty"));
            }
            if let Some(f) = p.iter().find(|&&f| f >= n) {
                return bad(format!("phase {i} references unknown flow {f}"));
            }
        }
        if self.capacity == 0 {
            return bad("capacity must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        let mut rate_sets = vec![self.flows.iter().map(|f| f.rate).collect::<Vec<_>>()];
        if let Some(schedule) = &self.schedule {
            if schedule.is_empty() || schedule.iter().all(|s| s.duration == 0) {
                return bad("schedule has no positive-duration segment".into());
            }
            for seg in schedule {
                if seg.rates.len() != n {
                    return bad(format!("schedule segment has {} rates for {n} flows", seg.rates.len()));
                }
                rate_sets.push(seg.rates.clone());
            }
        }
        for rates in &rate_sets {
            for &r in rates {
                if !(r >= 0.0 && r.is_finite()) {
                    return bad(format!("invalid arrival rate {r}"));
                }
                if self.arrivals == Arrivals::Deterministic && r.fract() != 0.0 {
                    return bad(format!("deterministic arrivals need integer rates, got {r}"));
                }
            }
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        self.phases.len()
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    /// Largest possible per-step reward.
    pub fn reward_bound(&self) -> f64 {
        let widest = self.phases.iter().map(Vec::len).max().unwrap_or(0);
        (self.capacity * widest as u64) as f64
    }

    pub fn is_deterministic(&self) -> bool {
        self.arrivals == Arrivals::Deterministic
    }

    /// Seed carried by a Poisson config; 0 for deterministic ones.
    pub fn seed(&self) -> u64 {
        match self.arrivals {
            Arrivals::Poisson { seed } => seed,
            Arrivals::Deterministic => 0,
        }
    }

    /// Arrival rates in force at absolute step `t`.
    pub fn rates_at(&self, t: u64) -> Vec<f64> {
        if let Some(schedule) = &self.schedule {
            let total: u64 = schedule.iter().map(|s| s.duration).sum();
            let mut t = t % total;
            for seg in schedule {
                if t < seg.duration {
                    return seg.rates.clone();
                }
                t -= seg.duration;
            }
        }
        self.flows.iter().map(|f| f.rate).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The two-flow intersection: NS at 1 vehicle/step, EW at 3, capacity 4.
    /// Action 0 serves NS, action 1 serves EW.
    pub fn two_flow() -> Self {
        IntersectionEnvConfig {
            flows: vec![
                Flow {
                    name: "NS".into(),
                    rate: 1.0,
                },
                Flow {
                    name: "EW".into(),
                    rate: 3.0,
                },
            ],
            arrivals: Arrivals::Deterministic,
            phases: vec![vec![0], vec![1]],
            capacity: 4,
            schedule: None,
            horizon: 100,
        }
    }

    /// Four approaches (N, E, S, W) under Poisson arrivals. Phases: N+S
    /// through, E+W through, N only, E only. Rates are the medium workload.
    pub fn multi_flow(seed: u64) -> Self {
        let names = ["N", "E", "S", "W"];
        IntersectionEnvConfig {
            flows: names
                .iter()
                .zip(Workload::Medium.rates())
                .map(|(n, r)| Flow {
                    name: (*n).into(),
                    rate: r,
                })
                .collect(),
            arrivals: Arrivals::Poisson { seed },
            phases: vec![vec![0, 2], vec![1, 3], vec![0], vec![1]],
            capacity: 2,
            schedule: None,
            horizon: 360,
        }
    }

    /// [`multi_flow`](Self::multi_flow) with the five-segment day schedule
    /// (light, light, medium, peak, peak), each segment `segment_steps` long.
    pub fn multi_flow_day(seed: u64, segment_steps: u64) -> Self {
        IntersectionEnvConfig {
            schedule: Some(
                Workload::DAY
                    .iter()
                    .map(|w| ScheduleSegment {
                        duration: segment_steps,
                        rates: w.rates().to_vec(),
                    })
                    .collect(),
            ),
            horizon: segment_steps as usize,
            ..Self::multi_flow(seed)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Workload {
    Light,
    Medium,
    Peak,
}

impl Workload {
    pub const DAY: [Workload; 5] = [
        Workload::Light,
        Workload::Light,
        Workload::Medium,
        Workload::Peak,
        Workload::Peak,
    ];

    /// Per-approach rates (N, E, S, W) for the multi-flow intersection.
    pub fn rates(self) -> [f64; 4] {
        match self {
            Workload::Light => [0.3, 0.4, 0.3, 0.4],
            Workload::Medium => [0.45, 0.6, 0.45, 0.6],
            Workload::Peak => [0.6, 0.9, 0.6, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub queues: Vec<u64>,
    /// Absolute step, used to look up scheduled rates.
    pub t: u64,
}

impl EnvState {
    pub fn new(queues: Vec<u64>) -> Self {
        EnvState { queues, t: 0 }
    }

    pub fn observe(&self) -> StateVector {
        StateVector(self.queues.iter().map(|&q| q as f64).collect())
    }
}

/// Advances one step under `action` and returns the next state and reward.
pub fn step(
    config: &IntersectionEnvConfig,
    state: &EnvState,
    action: usize,
    rng: &mut impl Rng,
) -> (EnvState, f64) {
    let rates = config.rates_at(state.t);
    let mut queues = state.queues.clone();
    for (q, &rate) in queues.iter_mut().zip(&rates) {
        *q += match config.arrivals {
            Arrivals::Deterministic => rate as u64,
            Arrivals::Poisson { .. } if rate > 0.0 => {
                Poisson::new(rate).expect("positive rate").sample(rng) as u64
            }
            Arrivals::Poisson { .. } => 0,
        };
    }
    let mut served = 0;
    for &f in &config.phases[action] {
        let out = queues[f].min(config.capacity);
        queues[f] -= out;
        served += out;
    }
    (
        EnvState {
            queues,
            t: state.t + 1,
        },
        served as f64,
    )
}

/// Anything that picks a phase from the observed queues and the step index.
pub trait Controller {
    fn act(&mut self, state: &StateVector, t: usize) -> usize;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub cumulative: f64,
    pub discounted: f64,
    pub trajectory: Vec<Transition>,
    pub final_state: EnvState,
}

/// Runs `policy` for `horizon` steps from `start`. Transitions carry trajectory
/// id 0 and step indices `0..horizon`.
pub fn rollout(
    config: &IntersectionEnvConfig,
    start: &EnvState,
    policy: &mut dyn Controller,
    horizon: usize,
    gamma: f64,
    rng: &mut impl Rng,
) -> Rollout {
    let mut state = start.clone();
    let mut cumulative = 0.0;
    let mut discounted = 0.0;
    let mut discount = 1.0;
    let mut trajectory = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let obs = state.observe();
        let action = policy.act(&obs, t);
        let (next, r) = step(config, &state, action, rng);
        cumulative += r;
        discounted += discount * r;
        discount *= gamma;
        trajectory.push(Transition {
            s: obs,
            a: action,
            r,
            s_next: next.observe(),
            traj_id: 0,
            t: t as i64,
        });
        state = next;
    }
    Rollout {
        cumulative,
        discounted,
        trajectory,
        final_state: state,
    }
}

/// Green time per flow proportional to its arrival rate over a cycle of
/// length `cycle`.
pub fn optimal_green_split(rates: &[f64], cycle: f64) -> Result<Vec<f64>> {
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) || rates.iter().any(|r| *r < 0.0) {
        return Err(Error::InvalidParameter("rates must be non-negative with a positive sum".into()));
    }
    if !(cycle > 0.0) {
        return Err(Error::InvalidParameter(format!("cycle time {cycle} must be > 0")));
    }
    Ok(rates.iter().map(|r| r * cycle / total).collect())
}

/// Discounted return of serving two flows alternately, starting with the
/// first, when each service step clears `lambda_i^2 / (lambda_1 + lambda_2)`.
pub fn alternating_return(lambda1: f64, lambda2: f64, gamma: f64) -> Result<f64> {
    let total = lambda1 + lambda2;
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("lambda1 + lambda2 must be > 0".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} outside [0, 1)")));
    }
    let g2 = 1.0 - gamma * gamma;
    Ok(lambda1 * lambda1 / total / g2 + gamma * lambda2 * lambda2 / total / g2)
}
