use rand::Rng;

use super::model::{elbo_with_grad, PreactivationNoise, TransitionSource};
use super::posterior::{BnnPrior, VariationalPosterior};
use crate::error::{Error, Result};
use crate::numerics::AdamState;

/// Minibatch schedule for fitting the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboSchedule {
    pub iterations: usize,
    pub batch_size: usize,
    /// Posterior samples per bound evaluation.
    pub n_samples: usize,
}

impl Default for ElboSchedule {
    fn default() -> Self {
        Self {
            iterations: 500,
            batch_size: 10,
            n_samples: 10,
        }
    }
}

/// Runs `iterations` Adam ascent steps on the bound using minibatches drawn
/// with replacement from `source`. The prior KL is weighted by
/// `batch_size / source.len()`, so one pass worth of minibatches counts it once.
///
/// Returns the trained posterior; `posterior` itself is untouched, so a
/// failure leaves the caller's model as it was.
pub fn train_elbo<S, R>(
    posterior: &VariationalPosterior,
    prior: &BnnPrior,
    source: &S,
    schedule: ElboSchedule,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<VariationalPosterior>
where
    S: TransitionSource + ?Sized,
    R: Rng + ?Sized,
{
    let mut trained = posterior.clone();
    if schedule.iterations == 0 {
        return Ok(trained);
    }
    if source.is_empty() {
        return Err(Error::EmptyPool);
    }
    let kl_weight = schedule.batch_size as f64 / source.len() as f64;
    let mut params = trained.pack();
    for _ in 0..schedule.iterations {
        let batch = source.sample_batch(schedule.batch_size, rng)?;
        let noise = PreactivationNoise::draw(&trained, schedule.n_samples, batch.len(), rng);
        let (_, grad) = elbo_with_grad(&trained, prior, &batch, &noise, kl_weight)?;
        let descent: Vec<f64> = grad.pack().into_iter().map(|g| -g).collect();
        adam.step(&mut params, &descent)?;
        trained.unpack(&params)?;
    }
    Ok(trained)
}
