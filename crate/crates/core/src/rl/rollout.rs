use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::GaussianPolicy;
use crate::bnn::TransitionTriple;
use crate::envs::{clip_action, Env};
use crate::error::{Error, Result};

/// One episode. `states` and `observations` hold `len() + 1` entries (the
/// final one is the state reached by the last action).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub external_rewards: Vec<f64>,
    /// Equal to `external_rewards` until intrinsic rewards are added.
    pub shaped_rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// True when the episode ended by reaching a terminal state.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn external_return(&self) -> f64 {
        self.external_rewards.iter().sum()
    }

    /// `(obs_t, a_t, obs_{t+1})` triples in the network-facing feature space,
    /// with the action as applied (clipped).
    pub fn transitions(&self) -> Vec<TransitionTriple> {
        (0..self.len())
            .map(|t| {
                TransitionTriple::new(
                    self.observations[t].clone(),
                    clip_action(&self.actions[t]),
                    self.observations[t + 1].clone(),
                )
            })
            .collect()
    }
}

/// Runs one episode of at most `horizon` steps, driven by `act(obs, rng)`
/// which returns the action and its log-probability.
pub fn rollout_with<F, R>(env: &Env, horizon: usize, rng: &mut R, mut act: F) -> Result<Trajectory>
where
    F: FnMut(&[f64], &[f64], &mut R) -> Result<(Vec<f64>, f64)>,
    R: RngCore,
{
    let state = env.reset(rng);
    let mut traj = Trajectory {
        observations: vec![env.observe(&state)],
        states: vec![state],
        actions: Vec::with_capacity(horizon),
        external_rewards: Vec::with_capacity(horizon),
        shaped_rewards: Vec::new(),
        log_probs: Vec::with_capacity(horizon),
        terminated: false,
    };
    for _ in 0..horizon {
        let t = traj.actions.len();
        let (action, log_prob) = act(&traj.states[t], &traj.observations[t], rng)?;
        let step = env.step(&traj.states[t], &action)?;
        traj.observations.push(env.observe(&step.next_state));
        traj.states.push(step.next_state);
        traj.actions.push(action);
        traj.external_rewards.push(step.reward);
        traj.log_probs.push(log_prob);
        if step.done {
            traj.terminated = true;
            break;
        }
    }
    traj.shaped_rewards = traj.external_rewards.clone();
    Ok(traj)
}

pub fn rollout<R: RngCore>(policy: &GaussianPolicy, env: &Env, horizon: usize, rng: &mut R) -> Result<Trajectory> {
    rollout_with(env, horizon, rng, |_, obs, rng| policy.sample_action(obs, rng))
}

/// Whole episodes until at least `min_timesteps` steps are collected. Each
/// episode draws from its own stream seeded by `rng`.
pub fn collect_batch<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    env: &Env,
    min_timesteps: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    if min_timesteps == 0 {
        return Err(Error::InvalidArgument("min_timesteps must be at least 1".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut batch = Vec::new();
    let mut total = 0;
    while total < min_timesteps {
        let mut episode_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let traj = rollout(policy, env, horizon, &mut episode_rng)?;
        total += traj.len();
        batch.push(traj);
    }
    Ok(batch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episode_returns: Vec<f64>,
    pub mean_return: f64,
}

/// Mean undiscounted external return of an arbitrary controller
/// `act(state, obs, rng) -> action`.
pub fn evaluate_with<F, R>(env: &Env, n_episodes: usize, horizon: usize, rng: &mut R, mut act: F) -> Result<EvalReport>
where
    F: FnMut(&[f64], &[f64], &mut ChaCha8Rng) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let mut episode_returns = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut episode_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let traj = rollout_with(env, horizon, &mut episode_rng, |s, o, r| Ok((act(s, o, r)?, 0.0)))?;
        episode_returns.push(traj.external_return());
    }
    let mean_return = episode_returns.iter().sum::<f64>() / n_episodes as f64;
    Ok(EvalReport {
        episode_returns,
        mean_return,
    })
}

/// Evaluates the stochastic policy on external reward only.
pub fn evaluate<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    env: &Env,
    n_episodes: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<EvalReport> {
    evaluate_with(env, n_episodes, horizon, rng, |_, obs, r| Ok(policy.sample_action(obs, r)?.0))
}
