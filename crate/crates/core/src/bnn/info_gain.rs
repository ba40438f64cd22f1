//! Per-transition information gain: how far one observation would move the
//! weight posterior, measured as a KL divergence.

use rand::Rng;

use super::model::{expected_log_likelihood_with_grad, PreactivationNoise, TransitionBatch, TransitionTriple};
use super::posterior::{hessian_diag_kl, kl_between, kl_grad_wrt_q, VariationalPosterior};
use crate::error::{check_finite, check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// `0.5 * lambda^2 * grad^T H^-1 grad`.
    Approx,
    /// KL between the posterior after one scaled Newton step and the current one.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlDirection {
    /// `KL[q(updated) || q(current)]`.
    Forward,
    /// `KL[q(current) || q(updated)]`.
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoGainConfig {
    pub lambda: f64,
    pub mode: GainMode,
    pub direction: KlDirection,
    pub n_samples: usize,
}

impl Default for InfoGainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            mode: GainMode::Approx,
            direction: KlDirection::Forward,
            n_samples: 10,
        }
    }
}

/// Gradient over `phi = [mu; rho]` of the sampled log-likelihood of one
/// transition, averaged over `n_samples` draws.
pub fn loglik_gradient<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    transition: &TransitionTriple,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let batch = TransitionBatch::new(vec![transition.clone()]);
    let noise = PreactivationNoise::draw(posterior, n_samples, 1, rng);
    let (_, grad) = expected_log_likelihood_with_grad(posterior, &batch, &noise)?;
    let mut phi_grad = grad.mu;
    phi_grad.extend(grad.rho);
    check_finite("log-likelihood gradient", &phi_grad)?;
    Ok(phi_grad)
}

/// `0.5 * lambda^2 * sum_i grad_i^2 / hess_i` for a diagonal Hessian.
pub fn second_order_gain(grad: &[f64], hess_diag: &[f64], lambda: f64) -> f64 {
    0.5 * lambda * lambda * grad.iter().zip(hess_diag).map(|(g, h)| g * g / h).sum::<f64>()
}

/// Posterior after the step `phi - lambda * H^-1 grad_ell`, where
/// `grad_ell = -grad_loglik` at the current point.
pub fn stepped_posterior(
    posterior: &VariationalPosterior,
    grad_loglik: &[f64],
    hess_diag: &[f64],
    lambda: f64,
) -> Result<VariationalPosterior> {
    let phi = posterior.phi();
    check_len("phi gradient", phi.len(), grad_loglik.len())?;
    check_len("hessian diagonal", phi.len(), hess_diag.len())?;
    let next: Vec<f64> = phi
        .iter()
        .zip(grad_loglik)
        .zip(hess_diag)
        .map(|((p, g), h)| p + lambda * g / h)
        .collect();
    posterior.with_phi(&next)
}

/// Information gain for a known log-likelihood gradient.
pub fn info_gain_from_gradient(
    posterior: &VariationalPosterior,
    grad_loglik: &[f64],
    config: &InfoGainConfig,
) -> Result<f64> {
    let hess = hessian_diag_kl(&posterior.rho);
    // Positive by construction; a zero here means sigma overflowed.
    if let Some(i) = hess.iter().position(|&h| !(h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidArgument(format!("degenerate KL Hessian entry at {i}")));
    }
    match config.mode {
        GainMode::Approx => Ok(second_order_gain(grad_loglik, &hess, config.lambda)),
        GainMode::Exact => {
            let updated = stepped_posterior(posterior, grad_loglik, &hess, config.lambda)?;
            match config.direction {
                KlDirection::Forward => kl_between(&updated, posterior),
                KlDirection::Reversed => kl_between(posterior, &updated),
            }
        }
    }
}

/// Information gain of one transition under the current posterior. The
/// posterior is only read.
pub fn info_gain_step<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    transition: &TransitionTriple,
    config: &InfoGainConfig,
    rng: &mut R,
) -> Result<f64> {
    if !(config.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", config.lambda)));
    }
    let grad = loglik_gradient(posterior, transition, config.n_samples, rng)?;
    info_gain_from_gradient(posterior, &grad, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefitConfig {
    pub iterations: usize,
    /// Scale of each preconditioned step.
    pub step_size: f64,
    pub n_samples: usize,
}

impl Default for RefitConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            step_size: 0.5,
            n_samples: 10,
        }
    }
}

/// Minimizes `KL[q(phi) || q(phi_current)] - E_q[log p(s' | s, a)]` for one
/// transition, starting at the current posterior. Each iteration takes a
/// gradient step preconditioned by the inverse KL Hessian at the start point
/// (so a single unit step on a linear likelihood is the Newton step).
/// Returns the candidate; nothing is committed.
pub fn posterior_refit<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    transition: &TransitionTriple,
    config: &RefitConfig,
    rng: &mut R,
) -> Result<VariationalPosterior> {
    let mut candidate = posterior.clone();
    if config.iterations == 0 {
        return Ok(candidate);
    }
    let anchor_mu = posterior.mu.clone();
    let anchor_sigma = posterior.sigma();
    let hess = hessian_diag_kl(&posterior.rho);
    let batch = TransitionBatch::new(vec![transition.clone()]);
    let mut phi = candidate.phi();
    let n = posterior.n_params();
    for _ in 0..config.iterations {
        let noise = PreactivationNoise::draw(&candidate, config.n_samples, 1, rng);
        let (_, ll_grad) = expected_log_likelihood_with_grad(&candidate, &batch, &noise)?;
        let (kmu, krho) = kl_grad_wrt_q(&candidate, &anchor_mu, &anchor_sigma);
        for i in 0..n {
            phi[i] -= config.step_size * (kmu[i] - ll_grad.mu[i]) / hess[i];
            phi[n + i] -= config.step_size * (krho[i] - ll_grad.rho[i]) / hess[n + i];
        }
        check_finite("refit parameters", &phi)?;
        candidate = candidate.with_phi(&phi)?;
    }
    Ok(candidate)
}
