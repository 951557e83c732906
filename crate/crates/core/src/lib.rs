//! Offline traffic-signal control from a static batch of experience.
//!
//! The pipeline: load or [`collect`](policy::collect) a [`Batch`], derive a
//! finite pessimistic MDP over its core states with
//! [`build_mdp`](derive::build_mdp), solve it with
//! [`value_iteration`](planner::value_iteration), and act anywhere in the state
//! space through the one-step lookup of a [`DerivedController`].

pub mod dataset;
pub mod derive;
pub mod error;
pub mod neighbors;
pub mod planner;

pub use dataset::{Batch, StateVector, Transition};
pub use derive::{build_mdp, DeriveParams, DerivedMdp, PenaltyMode};
pub use error::{Error, Result};
pub use neighbors::{MetricConfig, NeighborIndex, NeighborSet};
pub use planner::{value_iteration, DerivedController, Solution};
pub mod env;
pub mod policy;
pub mod eval;
pub mod theory;
