//! Online meta-gradient adaptation of return functions.
//!
//! The return a reinforcement-learning agent regresses on is itself a
//! parametric function: the discount gates how far it looks ahead, the
//! bootstrapping parameter gates how much it trusts the value estimate.
//! This crate treats those two knobs as logits, differentiates the return
//! analytically with respect to them, and adapts them online by
//! cross-validating each inner update on held-out experience:
//!
//! * [`returns`] — n-step, lambda and off-policy corrected returns with
//!   analytic meta-parameter gradients;
//! * [`meta`] — the logit state, the decayed sensitivity trace, the
//!   meta-update rule and an exact-accumulation test oracle;
//! * [`approx`] — linear values and softmax policies, optionally conditioned
//!   on an embedding of the meta-parameters;
//! * [`envs`] — the illustrative reward processes, a noisy gridworld, the
//!   exact value oracle and the actor harness;
//! * [`algo`] — the prediction and control loops, their frozen baselines,
//!   validation objectives and the experience-swap scheme;
//! * [`gradcheck`] — the finite-difference verification suite.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`];
//! the aliases below fix the default double-precision instantiation used by
//! the command-line harness.

pub mod algo;
pub mod approx;
pub mod config;
pub mod envs;
pub mod error;
pub mod gradcheck;
pub mod meta;
pub mod returns;
pub mod runlog;
pub mod scalar;
pub mod stats;

pub use error::{CoreError, Result};
pub use scalar::Scalar;

/// Default scalar type for experiments.
pub type Real = f64;

pub type Trajectory = returns::Trajectory<Real>;
pub type EtaView = returns::EtaView<Real>;
pub type ReturnResult = returns::ReturnResult<Real>;
pub type MetaParams = meta::MetaParams<Real>;
pub type MetaTrace = meta::MetaTrace<Real>;
pub type EtaJacobian = meta::EtaJacobian<Real>;
pub type MetaOptimizerState = meta::MetaOptimizerState<Real>;
pub type AgentParams = approx::AgentParams<Real>;
pub type MrpSpec = envs::MrpSpec<Real>;
pub type MdpSpec = envs::MdpSpec<Real>;
pub type ValueTable = envs::ValueTable<Real>;
pub type ActorHarness = envs::ActorHarness<Real>;
pub type InnerUpdateResult = algo::InnerUpdateResult<Real>;
pub type ValidationSpec = algo::ValidationSpec<Real>;
pub type RunLog = runlog::RunLog<Real>;
pub type RunRow = runlog::RunRow<Real>;
