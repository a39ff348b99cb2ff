//! Simulated end-to-end network-slicing testbed and the online constrained
//! orchestration stack that runs on it: per-slice SLA-aware learners, a
//! probabilistic baseline-switching safety layer, and dual-decomposition
//! capacity coordination.
//!
//! Module map, bottom-up:
//! - [`domain`]: slices, actions, states, transitions, cost/reward forms.
//! - [`nn`]: hand-rolled MLPs with analytic gradients, Adam, and a
//!   mean-field Gaussian variational wrapper.
//! - [`env`]: the deterministic seeded simulator.
//! - [`baseline`]: the offline grid-search policy and other rule-based
//!   comparators.
//! - [`agent`]: clipped-surrogate actor-critic with Lagrangian SLA shaping
//!   and behavior-cloning pretraining.
//! - [`safety`]: cost-to-go estimator and proactive baseline switching.
//! - [`coordination`]: action modifiers, per-resource dual coordinators,
//!   and the brute-force modification oracle.
//! - [`rollout`]: the joint multi-slice episode runner with ablation modes.

pub mod agent;
pub mod baseline;
pub mod coordination;
pub mod domain;
pub mod env;
pub mod nn;
pub mod rollout;
pub mod safety;

pub use agent::{Agent, AgentConfig};
pub use domain::{
    Action, Episode, PolicySource, ResourceKind, ResourceVector, SliceKind, SliceSpec, SliceTag,
    State, Transition, ACTION_DIM, RESOURCE_KINDS, STATE_DIM,
};
pub use env::{Env, EnvConfig, EnvError};
pub use rollout::{RolloutConfig, RunMode, SliceController};
