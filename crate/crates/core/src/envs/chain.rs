use super::{EnvSpec, StepResult};
use crate::error::{Error, Result};

/// `n` positions in a row, one-hot encoded. A positive action moves right,
/// anything else moves left; the only reward is +1 on reaching the last
/// position, which ends the episode. Episodes start at the left end and last
/// `n - 1` steps by default, so only a consistently rightward policy ever
/// sees the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub n: usize,
    pub horizon: usize,
}

impl Chain {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("chain needs at least 2 states, got {n}")));
        }
        Ok(Self { n, horizon: n - 1 })
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: format!("chain-{}", self.n),
            state_dim: self.n,
            obs_dim: self.n,
            action_dim: 1,
            horizon: self.horizon,
            action_bounds: vec![(-1.0, 1.0)],
            state_bounds: vec![(0.0, 1.0); self.n],
        }
    }

    pub fn one_hot(&self, position: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        s[position] = 1.0;
        s
    }

    /// Zero-based index of the occupied position.
    pub fn position(state: &[f64]) -> usize {
        state
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn reset(&self) -> Vec<f64> {
        self.one_hot(0)
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> StepResult {
        let pos = Self::position(state);
        let next = if action[0] > 0.0 {
            (pos + 1).min(self.n - 1)
        } else {
            pos.saturating_sub(1)
        };
        let done = next == self.n - 1;
        StepResult {
            next_state: self.one_hot(next),
            reward: if done { 1.0 } else { 0.0 },
            done,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walks_and_pays_only_at_the_end() {
        let chain = Chain::new(4).unwrap();
        let mut s = chain.reset();
        assert_eq!(Chain::position(&s), 0);
        s = chain.step(&s, &[-0.3]).next_state;
        assert_eq!(Chain::position(&s), 0);
        for expected in 1..3 {
            let r = chain.step(&s, &[0.1]);
            assert_eq!(r.reward, 0.0);
            s = r.next_state;
            assert_eq!(Chain::position(&s), expected);
        }
        let r = chain.step(&s, &[1.0]);
        assert_eq!(r.reward, 1.0);
        assert!(r.done);
        assert_eq!(chain.spec().horizon, 3);
    }

    #[test]
    fn rejects_degenerate_chain() {
        assert!(Chain::new(1).is_err());
    }
}
