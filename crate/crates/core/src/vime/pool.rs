use std::collections::VecDeque;

use rand::Rng;

use crate::bnn::{TransitionBatch, TransitionSource, TransitionTriple};
use crate::error::{check_len, Error, Result};

/// Bounded FIFO store of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPool {
    capacity: usize,
    min_size: usize,
    state_dim: usize,
    action_dim: usize,
    buffer: VecDeque<TransitionTriple>,
}

impl ReplayPool {
    pub fn new(capacity: usize, min_size: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("pool capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            min_size,
            state_dim,
            action_dim,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_size(&self) -> usize {
        self.min_size
    }

    /// True once enough transitions are stored to train on.
    pub fn is_ready(&self) -> bool {
        self.buffer.len() >= self.min_size
    }

    /// Appends `triple`, evicting the oldest entry when full.
    pub fn add(&mut self, triple: TransitionTriple) -> Result<()> {
        check_len("pool state", self.state_dim, triple.state.len())?;
        check_len("pool action", self.action_dim, triple.action.len())?;
        check_len("pool next state", self.state_dim, triple.next_state.len())?;
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(triple);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionTriple> {
        self.buffer.iter()
    }
}

impl TransitionSource for ReplayPool {
    fn len(&self) -> usize {
        self.buffer.len()
    }

    /// `n` rows drawn uniformly with replacement.
    fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        if self.buffer.is_empty() {
            return Err(Error::EmptyPool);
        }
        let rows = (0..n)
            .map(|_| self.buffer[rng.random_range(0..self.buffer.len())].clone())
            .collect();
        Ok(TransitionBatch::new(rows))
    }
}
