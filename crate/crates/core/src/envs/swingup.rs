use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{EnvSpec, StepResult, DEFAULT_HORIZON};

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const HALF_LENGTH: f64 = 0.5;
const FORCE_SCALE: f64 = 10.0;
const DT: f64 = 0.02;
pub const TRACK_LIMIT: f64 = 3.0;
pub const UPRIGHT_COS: f64 = 0.8;

/// Cart-pole that starts hanging down; reward +1 per step while the pole is
/// within `acos(0.8)` of upright. State is `(x, x_dot, beta, beta_dot)` with
/// `beta = 0` upright and `beta = pi` hanging.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCartPoleSwingup {
    pub angle_noise: f64,
    pub horizon: usize,
}

impl Default for SparseCartPoleSwingup {
    fn default() -> Self {
        Self {
            angle_noise: 0.05,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl SparseCartPoleSwingup {
    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "sparse-cartpole-swingup".into(),
            state_dim: 4,
            obs_dim: 5,
            action_dim: 1,
            horizon: self.horizon,
            action_bounds: vec![(-1.0, 1.0)],
            state_bounds: vec![(-TRACK_LIMIT, TRACK_LIMIT), (-10.0, 10.0), (-PI, PI), (-15.0, 15.0)],
        }
    }

    pub fn reset(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let w = self.angle_noise;
        let jitter = if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
        vec![0.0, 0.0, PI + jitter, 0.0]
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> StepResult {
        let (x, x_dot, beta, beta_dot) = (state[0], state[1], state[2], state[3]);
        let force = FORCE_SCALE * action[0];
        let total_mass = CART_MASS + POLE_MASS;
        let (sin, cos) = beta.sin_cos();
        let temp = (force + POLE_MASS * HALF_LENGTH * beta_dot * beta_dot * sin) / total_mass;
        let beta_acc =
            (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - POLE_MASS * HALF_LENGTH * beta_acc * cos / total_mass;
        let next = vec![
            x + DT * x_dot,
            x_dot + DT * x_acc,
            beta + DT * beta_dot,
            beta_dot + DT * beta_acc,
        ];
        let reward = if next[2].cos() > UPRIGHT_COS { 1.0 } else { 0.0 };
        let done = next[0].abs() > TRACK_LIMIT;
        StepResult {
            next_state: next,
            reward,
            done,
        }
    }

    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        let (sin, cos) = state[2].sin_cos();
        vec![state[0] / TRACK_LIMIT, state[1] / 5.0, cos, sin, state[3] / 10.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn starts_hanging_down() {
        let env = SparseCartPoleSwingup::default();
        let s = SparseCartPoleSwingup {
            angle_noise: 0.0,
            ..Default::default()
        }
        .reset(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(s[2].cos() < -0.99);
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(3));
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!((a[2] - PI).abs() <= 0.05 && a[0] == 0.0 && a[1] == 0.0 && a[3] == 0.0);
    }

    #[test]
    fn upright_equilibrium_is_rewarded() {
        let r = SparseCartPoleSwingup::default().step(&[0.0, 0.0, 0.0, 0.0], &[0.0]);
        assert!(r.next_state[2].cos() > UPRIGHT_COS);
        assert_eq!(r.reward, 1.0);
        assert!(!r.done);
    }

    #[test]
    fn hanging_pole_earns_nothing() {
        let r = SparseCartPoleSwingup::default().step(&[0.0, 0.0, PI, 0.0], &[1.0]);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn leaving_the_track_ends_the_episode() {
        let r = SparseCartPoleSwingup::default().step(&[2.99, 5.0, PI, 0.0], &[1.0]);
        assert!(r.done);
    }
}
