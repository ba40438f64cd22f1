use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::numerics::{DenseNet, Topology};

/// `log(1 + e^x)`, stable for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `sigma > 0`.
pub fn inverse_softplus(sigma: f64) -> f64 {
    if sigma > 30.0 {
        sigma + (-(-sigma).exp()).ln_1p()
    } else {
        sigma.exp_m1().ln()
    }
}

pub fn sigma_from_rho(rho: &[f64]) -> Vec<f64> {
    rho.iter().map(|&r| softplus(r)).collect()
}

/// Prior standard deviation `softplus(0.5)`.
pub fn default_prior_sigma() -> f64 {
    softplus(0.5)
}

/// Fully factorized Gaussian over every weight and bias of a [`Topology`],
/// plus the per-output observation log-std of the Gaussian likelihood.
///
/// The variational parameters are often handled as one vector
/// `phi = [mu..., rho...]`; [`VariationalPosterior::phi`] and
/// [`VariationalPosterior::with_phi`] convert to and from that layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPosterior {
    pub topology: Topology,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub likelihood_log_std: Vec<f64>,
}

impl VariationalPosterior {
    pub fn new(topology: Topology, mu: Vec<f64>, rho: Vec<f64>, likelihood_log_std: Vec<f64>) -> Result<Self> {
        let n = topology.param_count();
        check_len("posterior mu", n, mu.len())?;
        check_len("posterior rho", n, rho.len())?;
        check_len("likelihood log-std", topology.output_dim(), likelihood_log_std.len())?;
        Ok(Self {
            topology,
            mu,
            rho,
            likelihood_log_std,
        })
    }

    /// Means from the scaled-normal initializer, every `rho` set to `init_rho`.
    pub fn initialize<R: Rng + ?Sized>(topology: Topology, rng: &mut R, init_rho: f64, init_log_std: f64) -> Self {
        let mu = topology.init_params(rng, 1.0);
        let n = mu.len();
        let out = topology.output_dim();
        Self {
            topology,
            mu,
            rho: vec![init_rho; n],
            likelihood_log_std: vec![init_log_std; out],
        }
    }

    pub fn n_params(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        sigma_from_rho(&self.rho)
    }

    pub fn phi(&self) -> Vec<f64> {
        let mut phi = Vec::with_capacity(2 * self.mu.len());
        phi.extend_from_slice(&self.mu);
        phi.extend_from_slice(&self.rho);
        phi
    }

    pub fn with_phi(&self, phi: &[f64]) -> Result<Self> {
        let n = self.n_params();
        check_len("phi", 2 * n, phi.len())?;
        Ok(Self {
            topology: self.topology.clone(),
            mu: phi[..n].to_vec(),
            rho: phi[n..].to_vec(),
            likelihood_log_std: self.likelihood_log_std.clone(),
        })
    }

    /// `[mu..., rho..., likelihood_log_std...]`, the vector trained by the ELBO.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = self.phi();
        v.extend_from_slice(&self.likelihood_log_std);
        v
    }

    pub fn unpack(&mut self, packed: &[f64]) -> Result<()> {
        let n = self.n_params();
        check_len("packed posterior", 2 * n + self.likelihood_log_std.len(), packed.len())?;
        self.mu.copy_from_slice(&packed[..n]);
        self.rho.copy_from_slice(&packed[n..2 * n]);
        self.likelihood_log_std.copy_from_slice(&packed[2 * n..]);
        Ok(())
    }

    /// Deterministic network at the posterior means.
    pub fn mean_net(&self) -> DenseNet {
        DenseNet {
            topology: self.topology.clone(),
            params: self.mu.clone(),
        }
    }

    /// One weight vector `theta = mu + sigma * eps`.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.rho)
            .map(|(&m, &r)| {
                let z: f64 = rng.sample(StandardNormal);
                m + softplus(r) * z
            })
            .collect()
    }
}

/// Factorized Gaussian prior with a shared standard deviation. The means are
/// drawn once from N(0, I) using `seed`, so the seed alone reproduces them.
#[derive(Debug, Clone, PartialEq)]
pub struct BnnPrior {
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl BnnPrior {
    pub fn from_seed(n_params: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior sigma must be positive, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = (0..n_params).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self { mu, sigma, seed })
    }

    pub fn sigma_vec(&self) -> Vec<f64> {
        vec![self.sigma; self.mu.len()]
    }
}

/// `KL[N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)]` summed over independent coordinates.
pub fn kl_factorized(mu_q: &[f64], sigma_q: &[f64], mu_p: &[f64], sigma_p: &[f64]) -> Result<f64> {
    let n = mu_q.len();
    check_len("kl sigma_q", n, sigma_q.len())?;
    check_len("kl mu_p", n, mu_p.len())?;
    check_len("kl sigma_p", n, sigma_p.len())?;
    let mut total = 0.0;
    for i in 0..n {
        let (sq, sp) = (sigma_q[i], sigma_p[i]);
        if !(sq > 0.0 && sp > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "standard deviations must be positive (coordinate {i}: {sq}, {sp})"
            )));
        }
        let ratio = sq / sp;
        let d = mu_p[i] - mu_q[i];
        // (r^2 - 1 - ln r^2) is computed as written; it vanishes exactly at r = 1.
        total += 0.5 * (ratio * ratio - 1.0 - 2.0 * ratio.ln() + d * d / (sp * sp));
    }
    Ok(total)
}

/// KL between two posteriors over the same topology.
pub fn kl_between(q: &VariationalPosterior, p: &VariationalPosterior) -> Result<f64> {
    kl_factorized(&q.mu, &q.sigma(), &p.mu, &p.sigma())
}

pub fn kl_to_prior(q: &VariationalPosterior, prior: &BnnPrior) -> Result<f64> {
    kl_factorized(&q.mu, &q.sigma(), &prior.mu, &prior.sigma_vec())
}

/// Gradient of `KL[q || p]` with respect to the mean and rho of `q`.
pub(crate) fn kl_grad_wrt_q(q: &VariationalPosterior, mu_p: &[f64], sigma_p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = q.n_params();
    let mut dmu = Vec::with_capacity(n);
    let mut drho = Vec::with_capacity(n);
    for i in 0..n {
        let sq = softplus(q.rho[i]);
        let sp2 = sigma_p[i] * sigma_p[i];
        dmu.push((q.mu[i] - mu_p[i]) / sp2);
        drho.push((sq / sp2 - 1.0 / sq) * sigmoid(q.rho[i]));
    }
    (dmu, drho)
}

/// Diagonal Hessian of `phi -> KL[q(phi) || q(phi_0)]` evaluated at `phi = phi_0`,
/// laid out as `[mu entries..., rho entries...]`.
///
/// The mean entries are `1 / sigma^2`; the rho entries are
/// `2 sigmoid(rho)^2 / sigma^2`. Off-diagonal terms vanish.
pub fn hessian_diag_kl(rho: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(2 * rho.len());
    h.extend(rho.iter().map(|&r| {
        let s = softplus(r);
        1.0 / (s * s)
    }));
    h.extend(rho.iter().map(|&r| {
        let s = softplus(r);
        let g = sigmoid(r);
        2.0 * g * g / (s * s)
    }));
    h
}
