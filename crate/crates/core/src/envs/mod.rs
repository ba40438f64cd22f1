//! Sparse-reward control tasks with pure, dependency-free dynamics.
//!
//! `step` is a function of `(state, action)` only; nothing is hidden in the
//! environment value, so rollouts can run in parallel from a shared `Env`.

mod chain;
mod mountain_car;
mod swingup;
mod visitation;

use rand::RngCore;

pub use chain::Chain;
pub use mountain_car::SparseMountainCar;
pub use swingup::SparseCartPoleSwingup;
pub use visitation::{occupied_cells, visitation_grid};

use crate::error::{check_finite, check_len, Error, Result};

pub const DEFAULT_HORIZON: usize = 500;

/// The action each task actually applies: every coordinate clipped to `[-1, 1]`.
pub fn clip_action(action: &[f64]) -> Vec<f64> {
    action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    /// Width of the network-facing observation returned by [`Env::observe`].
    pub obs_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub action_bounds: Vec<(f64, f64)>,
    /// Nominal range of each state coordinate (used for plots and histograms).
    pub state_bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    MountainCar(SparseMountainCar),
    Swingup(SparseCartPoleSwingup),
    Chain(Chain),
}

impl Env {
    /// Registry: `sparse-mountaincar`, `sparse-cartpole-swingup`, `chain-N`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sparse-mountaincar" => Ok(Env::MountainCar(SparseMountainCar::default())),
            "sparse-cartpole-swingup" => Ok(Env::Swingup(SparseCartPoleSwingup::default())),
            other => {
                if let Some(n) = other.strip_prefix("chain-") {
                    let n: usize = n.parse().map_err(|_| Error::UnknownEnv(other.to_string()))?;
                    Ok(Env::Chain(Chain::new(n)?))
                } else {
                    Err(Error::UnknownEnv(other.to_string()))
                }
            }
        }
    }

    pub fn spec(&self) -> EnvSpec {
        match self {
            Env::MountainCar(e) => e.spec(),
            Env::Swingup(e) => e.spec(),
            Env::Chain(e) => e.spec(),
        }
    }

    pub fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            Env::MountainCar(e) => e.reset(rng),
            Env::Swingup(e) => e.reset(rng),
            Env::Chain(e) => e.reset(),
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            Env::MountainCar(_) => 2,
            Env::Swingup(_) => 4,
            Env::Chain(e) => e.n,
        }
    }

    /// Actions are clipped to `[-1, 1]` (every task shares these bounds).
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<StepResult> {
        check_len("env state", self.state_dim(), state.len())?;
        check_len("env action", 1, action.len())?;
        check_finite("env state", state)?;
        check_finite("env action", action)?;
        let clipped = clip_action(action);
        Ok(match self {
            Env::MountainCar(e) => e.step(state, &clipped),
            Env::Swingup(e) => e.step(state, &clipped),
            Env::Chain(e) => e.step(state, &clipped),
        })
    }

    /// Roughly unit-scaled features of a state, fed to the policy and the
    /// dynamics model.
    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        match self {
            Env::MountainCar(e) => e.observe(state),
            Env::Swingup(e) => e.observe(state),
            Env::Chain(_) => state.to_vec(),
        }
    }
}
