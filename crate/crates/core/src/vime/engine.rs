use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::normalizer::KlNormalizer;
use super::pool::ReplayPool;
use crate::bnn::{
    default_prior_sigma, info_gain_step, kl_between, posterior_refit, train_elbo, Bnn, BnnPrior, ElboSchedule,
    GainMode, InfoGainConfig, KlDirection, RefitConfig, TransitionSource, TransitionTriple, VariationalPosterior,
};
use crate::error::{check_len, Error, Result};
use crate::numerics::linalg::{mean, median};
use crate::numerics::{Activation, AdamConfig, AdamState, Topology};
use crate::rl::{GaussianPolicy, Learner, Trajectory, UpdateReport};

/// How a transition's information gain is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntrinsicMode {
    /// Second-order estimate from the gradient and the diagonal KL Hessian.
    Approx,
    /// Closed-form KL after the scaled Newton step.
    Exact,
    /// KL after iteratively refitting the posterior to the transition.
    Refit,
}

impl IntrinsicMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "approx" => Ok(Self::Approx),
            "exact" => Ok(Self::Exact),
            "refit" => Ok(Self::Refit),
            other => Err(Error::Parse(format!("unknown intrinsic mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Approx => "approx",
            Self::Exact => "exact",
            Self::Refit => "refit",
        }
    }
}

pub fn parse_direction(name: &str) -> Result<KlDirection> {
    match name {
        "forward" | "forward_kl" => Ok(KlDirection::Forward),
        "reversed" | "reversed_kl" => Ok(KlDirection::Reversed),
        other => Err(Error::Parse(format!("unknown KL direction '{other}'"))),
    }
}

pub fn direction_name(direction: KlDirection) -> &'static str {
    match direction {
        KlDirection::Forward => "forward_kl",
        KlDirection::Reversed => "reversed_kl",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VimeConfig {
    pub eta: f64,
    pub lambda: f64,
    pub mode: IntrinsicMode,
    pub direction: KlDirection,
    /// Posterior samples per information-gain gradient.
    pub gain_samples: usize,
    pub refit: RefitConfig,
    pub window_length: usize,
    pub kl_floor: f64,
    pub pool_capacity: usize,
    pub pool_min_size: usize,
    pub bnn_hidden: Vec<usize>,
    pub bnn_schedule: ElboSchedule,
    pub bnn_lr: f64,
    pub prior_sigma: f64,
    /// Starting `rho` of every posterior weight.
    pub init_rho: f64,
    pub init_log_std: f64,
}

impl Default for VimeConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            lambda: 0.01,
            mode: IntrinsicMode::Approx,
            direction: KlDirection::Forward,
            gain_samples: 10,
            refit: RefitConfig::default(),
            window_length: 10,
            kl_floor: 1e-8,
            pool_capacity: 100_000,
            pool_min_size: 500,
            bnn_hidden: vec![32],
            bnn_schedule: ElboSchedule::default(),
            bnn_lr: 1e-4,
            prior_sigma: default_prior_sigma(),
            init_rho: -3.0,
            init_log_std: -2.0,
        }
    }
}

impl VimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be finite and non-negative, got {}", self.eta)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.gain_samples == 0 {
            return Err(Error::InvalidArgument("gain_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Raw information gain of every transition against a frozen posterior, in
/// order. All randomness comes from `seed`.
pub fn score_trajectory(
    posterior: &VariationalPosterior,
    transitions: &[TransitionTriple],
    config: &VimeConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = InfoGainConfig {
        lambda: config.lambda,
        mode: match config.mode {
            IntrinsicMode::Exact => GainMode::Exact,
            _ => GainMode::Approx,
        },
        direction: config.direction,
        n_samples: config.gain_samples,
    };
    transitions
        .iter()
        .map(|tr| {
            let kl = match config.mode {
                IntrinsicMode::Approx | IntrinsicMode::Exact => info_gain_step(posterior, tr, &gain, &mut rng)?,
                IntrinsicMode::Refit => {
                    let refit = posterior_refit(posterior, tr, &config.refit, &mut rng)?;
                    match config.direction {
                        KlDirection::Forward => kl_between(&refit, posterior)?,
                        KlDirection::Reversed => kl_between(posterior, &refit)?,
                    }
                }
            };
            // Rounding can leave a tiny negative closed-form KL.
            Ok(kl.max(0.0))
        })
        .collect()
}

/// `r + eta * kl`, elementwise.
pub fn shape_rewards(external: &[f64], normalized_kls: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_len("normalized KLs", external.len(), normalized_kls.len())?;
    Ok(external.iter().zip(normalized_kls).map(|(r, k)| r + eta * k).collect())
}

/// Exploration state carried across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Vime {
    pub config: VimeConfig,
    pub pool: ReplayPool,
    pub normalizer: KlNormalizer,
    pub bnn: Bnn,
    adam: AdamState,
}

impl Vime {
    /// Builds the model for `obs_dim`-wide observations; `rng` draws the
    /// posterior means and the prior seed.
    pub fn new<R: Rng + ?Sized>(config: VimeConfig, obs_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![obs_dim + action_dim];
        sizes.extend_from_slice(&config.bnn_hidden);
        sizes.push(obs_dim);
        let topology = Topology::new(sizes, Activation::Relu)?;
        let posterior = VariationalPosterior::initialize(topology, rng, config.init_rho, config.init_log_std);
        let prior = BnnPrior::from_seed(posterior.n_params(), config.prior_sigma, rng.next_u64())?;
        let adam = AdamState::new(AdamConfig::with_lr(config.bnn_lr), posterior.pack().len());
        Ok(Self {
            pool: ReplayPool::new(config.pool_capacity, config.pool_min_size, obs_dim, action_dim)?,
            normalizer: KlNormalizer::new(config.window_length, config.kl_floor)?,
            bnn: Bnn { posterior, prior },
            adam,
            config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub episodes: usize,
    pub timesteps: usize,
    pub external_mean_return: f64,
    pub external_median_return: f64,
    /// Episodes that reached a terminal state.
    pub terminated_episodes: usize,
    pub raw_kl_median: f64,
    pub raw_kl_mean: f64,
    pub raw_kl_max: f64,
    pub divisor: f64,
    pub pool_size: usize,
    pub bnn_updated: bool,
    pub bnn_error: Option<String>,
    pub policy: UpdateReport,
}

/// One epoch of the exploration loop on freshly collected `trajectories`:
/// pool insertion, scoring against the pre-update posterior, normalization,
/// reward shaping, dynamics training and the policy update, in that order.
/// With `vime = None` only the policy update runs, on external rewards.
///
/// `bnn_rng` feeds scoring seeds and dynamics training only, so the policy
/// path consumes no extra randomness.
pub fn epoch_update<R: Rng + ?Sized>(
    epoch: usize,
    vime: Option<&mut Vime>,
    policy: &mut GaussianPolicy,
    learner: &mut Learner,
    trajectories: &mut [Trajectory],
    bnn_rng: &mut R,
) -> Result<EpochDiagnostics> {
    let returns: Vec<f64> = trajectories.iter().map(Trajectory::external_return).collect();
    let mut diag = EpochDiagnostics {
        epoch,
        episodes: trajectories.len(),
        timesteps: trajectories.iter().map(Trajectory::len).sum(),
        external_mean_return: mean(&returns),
        external_median_return: median(&returns),
        terminated_episodes: trajectories.iter().filter(|t| t.terminated).count(),
        divisor: 1.0,
        ..EpochDiagnostics::default()
    };
    for traj in trajectories.iter_mut() {
        traj.shaped_rewards = traj.external_rewards.clone();
    }

    if let Some(vime) = vime {
        let transitions: Vec<Vec<TransitionTriple>> = trajectories.iter().map(Trajectory::transitions).collect();
        for tr in transitions.iter().flatten() {
            vime.pool.add(tr.clone())?;
        }

        if vime.config.eta > 0.0 {
            let seeds: Vec<u64> = transitions.iter().map(|_| bnn_rng.next_u64()).collect();
            let snapshot = &vime.bnn.posterior;
            let config = &vime.config;
            let raw: Vec<Vec<f64>> = transitions
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(tr, &seed)| score_trajectory(snapshot, tr, config, seed))
                .collect::<Result<_>>()?;
            let all: Vec<f64> = raw.iter().flatten().copied().collect();
            if !all.is_empty() {
                diag.raw_kl_median = median(&all);
                diag.raw_kl_mean = mean(&all);
                diag.raw_kl_max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            for (traj, kls) in trajectories.iter_mut().zip(&raw) {
                let normalized = vime.normalizer.normalize(kls);
                traj.shaped_rewards = shape_rewards(&traj.external_rewards, &normalized, vime.config.eta)?;
            }
            diag.divisor = vime.normalizer.divisor();
        }

        if vime.pool.is_ready() {
            let trained = train_elbo(
                &vime.bnn.posterior,
                &vime.bnn.prior,
                &vime.pool,
                vime.config.bnn_schedule,
                &mut vime.adam,
                bnn_rng,
            );
            match trained {
                Ok(next) => {
                    vime.bnn.posterior = next;
                    diag.bnn_updated = true;
                }
                Err(e) => {
                    log::warn!("epoch {epoch}: dynamics update failed, keeping previous posterior: {e}");
                    diag.bnn_error = Some(e.to_string());
                }
            }
        }
        diag.pool_size = vime.pool.len();
    }

    diag.policy = learner.update(policy, trajectories)?;
    Ok(diag)
}
