//! Variational Bayesian neural network used as the dynamics model.
//!
//! The weight posterior is a fully factorized Gaussian with
//! `sigma = softplus(rho)`. Training maximizes the variational lower bound
//! with the local reparametrization trick; scoring a transition measures
//! the KL divergence a single update on it would cause.

mod info_gain;
mod model;
mod posterior;
mod snapshot;
mod train;

pub use info_gain::{
    info_gain_from_gradient, info_gain_step, loglik_gradient, posterior_refit, second_order_gain, stepped_posterior,
    GainMode, InfoGainConfig, KlDirection, RefitConfig,
};
pub use model::{
    elbo, elbo_with_grad, expected_log_likelihood_with_grad, gaussian_log_density, log_likelihood,
    predictive_moments, sample_predict, ElboGradient, PreactivationNoise, TransitionBatch, TransitionSource,
    TransitionTriple,
};
pub use posterior::{
    default_prior_sigma, hessian_diag_kl, inverse_softplus, kl_between, kl_factorized, kl_to_prior, sigma_from_rho,
    sigmoid, softplus, BnnPrior, VariationalPosterior,
};
pub use snapshot::{Bnn, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use train::{train_elbo, ElboSchedule};
