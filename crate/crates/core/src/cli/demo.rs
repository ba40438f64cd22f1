use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bnn::{
    default_prior_sigma, kl_between, predictive_moments, train_elbo, BnnPrior, ElboSchedule, TransitionBatch, TransitionSource, TransitionTriple,
    VariationalPosterior,
};
use crate::error::{Error, Result};
use crate::numerics::linalg::{mean, median};
use crate::numerics::{Activation, AdamConfig, AdamState, Topology};

/// One-dimensional regression with a mid-run data injection.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub seed: u64,
    pub n_train: usize,
    pub train_range: (f64, f64),
    pub n_inject: usize,
    pub inject_range: (f64, f64),
    pub noise_std: f64,
    pub iterations: usize,
    /// `None` disables the injection (the control run).
    pub injection_iteration: Option<usize>,
    pub batch_size: usize,
    pub n_samples: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub init_rho: f64,
    pub init_log_std: f64,
    pub prior_sigma: f64,
    pub grid: (f64, f64, usize),
    pub predictive_samples: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 100,
            train_range: (-1.0, 1.0),
            n_inject: 20,
            inject_range: (1.5, 2.0),
            noise_std: 0.05,
            iterations: 11_000,
            injection_iteration: Some(10_000),
            batch_size: 10,
            n_samples: 10,
            learning_rate: 1e-4,
            hidden: 32,
            init_rho: -1.0,
            init_log_std: -2.0,
            prior_sigma: default_prior_sigma(),
            grid: (-2.5, 2.5, 101),
            predictive_samples: 200,
            output_dir: None,
        }
    }
}

/// `[x, x^2, x^3, x^4]`.
pub fn quartic_features(x: f64) -> Vec<f64> {
    vec![x, x * x, x.powi(3), x.powi(4)]
}

pub fn demo_target(x: f64) -> f64 {
    (2.0 * x).sin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    /// `KL[q_i || q_{i-1}]` for every training iteration `i`.
    pub kl_trace: Vec<f64>,
    pub injection_iteration: Option<usize>,
    /// `(x, predictive mean, predictive std)` over the grid after training.
    pub predictions: Vec<(f64, f64, f64)>,
}

impl DemoOutcome {
    /// `kl_trace[i]` divided by the median of the preceding `window` values.
    pub fn spike_ratio(&self, i: usize, window: usize) -> f64 {
        let lo = i.saturating_sub(window);
        let base = median(&self.kl_trace[lo..i]);
        self.kl_trace[i] / base
    }

    /// Largest spike ratio at or after `burn_in`.
    pub fn max_spike_ratio(&self, burn_in: usize, window: usize) -> f64 {
        (burn_in.max(window)..self.kl_trace.len())
            .map(|i| self.spike_ratio(i, window))
            .fold(0.0, f64::max)
    }

    /// Mean predictive std inside `[lo, hi]` and outside it.
    pub fn std_inside_outside(&self, range: (f64, f64)) -> (f64, f64) {
        let (inside, outside): (Vec<f64>, Vec<f64>) = (
            self.predictions.iter().filter(|p| p.0 >= range.0 && p.0 <= range.1).map(|p| p.2).collect(),
            self.predictions.iter().filter(|p| p.0 < range.0 || p.0 > range.1).map(|p| p.2).collect(),
        );
        (mean(&inside), mean(&outside))
    }
}

/// Yields exactly the injected rows while weighting the prior term as for a
/// minibatch of the full training set.
struct InjectionBatch<'a> {
    rows: &'a [TransitionTriple],
    pool_len: usize,
}

impl TransitionSource for InjectionBatch<'_> {
    fn len(&self) -> usize {
        self.pool_len
    }

    fn sample_batch<R: Rng + ?Sized>(&self, _n: usize, _rng: &mut R) -> Result<TransitionBatch> {
        Ok(TransitionBatch::new(self.rows.to_vec()))
    }
}

fn dataset<R: Rng>(n: usize, range: (f64, f64), noise: &Normal<f64>, rng: &mut R) -> Vec<TransitionTriple> {
    (0..n)
        .map(|_| {
            let x = rng.random_range(range.0..=range.1);
            TransitionTriple::new(quartic_features(x), Vec::new(), vec![demo_target(x) + noise.sample(rng)])
        })
        .collect()
}

/// Trains the regression model one Adam step at a time, logging the KL
/// between consecutive posteriors. At the injection iteration the new points
/// join the training set and form that iteration's minibatch on their own.
pub fn bnn_demo(config: &DemoConfig) -> Result<DemoOutcome> {
    if config.batch_size == 0 || config.n_samples == 0 {
        return Err(Error::InvalidArgument("batch_size and n_samples must be positive".into()));
    }
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
    data_rng.set_stream(1);
    let mut train_rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_rng.set_stream(2);
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(3);

    let mut data = dataset(config.n_train, config.train_range, &noise, &mut data_rng);
    let injected = dataset(config.n_inject, config.inject_range, &noise, &mut data_rng);
    let topology = Topology::new(vec![4, config.hidden, 1], Activation::Relu)?;
    let mut posterior = VariationalPosterior::initialize(topology, &mut init_rng, config.init_rho, config.init_log_std);
    let prior = BnnPrior::from_seed(posterior.n_params(), config.prior_sigma, init_rng.next_u64())?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), posterior.pack().len());
    let one_step = ElboSchedule {
        iterations: 1,
        batch_size: config.batch_size,
        n_samples: config.n_samples,
    };

    let mut kl_trace = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let next = if Some(it) == config.injection_iteration {
            data.extend(injected.iter().cloned());
            let schedule = ElboSchedule {
                batch_size: injected.len(),
                ..one_step
            };
            let source = InjectionBatch {
                rows: &injected,
                pool_len: data.len(),
            };
            train_elbo(&posterior, &prior, &source, schedule, &mut adam, &mut train_rng)?
        } else {
            train_elbo(&posterior, &prior, &data[..], one_step, &mut adam, &mut train_rng)?
        };
        kl_trace.push(kl_between(&next, &posterior)?);
        posterior = next;
    }

    let (lo, hi, n) = config.grid;
    let mut pred_rng = ChaCha8Rng::seed_from_u64(config.seed);
    pred_rng.set_stream(4);
    let predictions = (0..n)
        .map(|i| {
            let x = if n > 1 { lo + (hi - lo) * i as f64 / (n - 1) as f64 } else { lo };
            let (m, s) =
                predictive_moments(&posterior, &quartic_features(x), &[], config.predictive_samples, &mut pred_rng)?;
            Ok((x, m[0], s[0]))
        })
        .collect::<Result<Vec<_>>>()?;

    let outcome = DemoOutcome {
        kl_trace,
        injection_iteration: config.injection_iteration,
        predictions,
    };
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        let mut kl = String::from("iteration,kl\n");
        for (i, v) in outcome.kl_trace.iter().enumerate() {
            let _ = writeln!(kl, "{i},{v}");
        }
        fs::write(dir.join("demo_kl.csv"), kl)?;
        let mut pred = String::from("x,mean,std,lo1,hi1,lo2,hi2\n");
        for (x, m, s) in &outcome.predictions {
            let _ = writeln!(pred, "{x},{m},{s},{},{},{},{}", m - s, m + s, m - 2.0 * s, m + 2.0 * s);
        }
        fs::write(dir.join("demo_predictions.csv"), pred)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_are_powers() {
        assert_eq!(quartic_features(2.0), vec![2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn short_demo_is_deterministic_and_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let config = DemoConfig {
            iterations: 60,
            injection_iteration: Some(50),
            grid: (-2.0, 2.0, 5),
            predictive_samples: 10,
            output_dir: Some(dir.path().to_path_buf()),
            ..DemoConfig::default()
        };
        let a = bnn_demo(&config).unwrap();
        let b = bnn_demo(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kl_trace.len(), 60);
        assert!(a.kl_trace.iter().all(|k| *k >= 0.0));
        let kl = fs::read_to_string(dir.path().join("demo_kl.csv")).unwrap();
        assert_eq!(kl.lines().count(), 61);
        let pred = fs::read_to_string(dir.path().join("demo_predictions.csv")).unwrap();
        assert_eq!(pred.lines().count(), 6);
    }
}
