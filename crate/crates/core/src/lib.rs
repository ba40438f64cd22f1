//! Curiosity-driven exploration for continuous control.
//!
//! The crate couples a variational Bayesian neural network dynamics model
//! with policy-gradient learners: every transition the agent experiences is
//! scored by how much it would move the model's weight posterior, and that
//! information gain is added to the environment reward.
//!
//! Module map:
//!
//! - [`numerics`]: dense MLPs with manual backprop, Adam, small linear algebra.
//! - [`bnn`]: the factorized-Gaussian dynamics model and its information gain.
//! - [`vime`]: replay pool, KL normalization, reward shaping, epoch orchestration.
//! - [`envs`]: sparse-reward mountain car, cart-pole swing-up, and a chain task.
//! - [`rl`]: Gaussian policy, rollouts, REINFORCE and a trust-region learner.
//! - [`cli`]: experiment harness behind the `vime` binary.

pub mod bnn;
pub mod cli;
pub mod envs;
pub mod error;
pub mod numerics;
pub mod rl;
pub mod vime;

pub use error::{Error, Result};
