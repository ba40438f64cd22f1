use rand::{Rng, RngCore};

use super::{EnvSpec, StepResult, DEFAULT_HORIZON};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

/// Mountain car with reward +1 only for escaping the valley on the right.
/// State is `(position, velocity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMountainCar {
    /// Start positions are uniform on `[-0.5 - w, -0.5 + w]`.
    pub reset_half_width: f64,
    pub horizon: usize,
}

impl Default for SparseMountainCar {
    fn default() -> Self {
        Self {
            reset_half_width: 0.1,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl SparseMountainCar {
    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "sparse-mountaincar".into(),
            state_dim: 2,
            obs_dim: 2,
            action_dim: 1,
            horizon: self.horizon,
            action_bounds: vec![(-1.0, 1.0)],
            state_bounds: vec![(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)],
        }
    }

    pub fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let w = self.reset_half_width;
        let x = if w > 0.0 { rng.random_range(-0.5 - w..=-0.5 + w) } else { -0.5 };
        vec![x, 0.0]
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> StepResult {
        let (x, v) = (state[0], state[1]);
        let mut v_next = (v + FORCE * action[0] - GRAVITY * (3.0 * x).cos()).clamp(-MAX_SPEED, MAX_SPEED);
        let x_next = (x + v_next).clamp(MIN_POSITION, MAX_POSITION);
        if x_next <= MIN_POSITION && v_next < 0.0 {
            v_next = 0.0;
        }
        let done = x_next >= GOAL_POSITION;
        StepResult {
            next_state: vec![x_next, v_next],
            reward: if done { 1.0 } else { 0.0 },
            done,
        }
    }

    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        let mid = 0.5 * (MIN_POSITION + MAX_POSITION);
        let half = 0.5 * (MAX_POSITION - MIN_POSITION);
        vec![(state[0] - mid) / half, state[1] / MAX_SPEED]
    }
}
