use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_finite, check_len, Result};
use crate::numerics::{Activation, DenseNet, Topology};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Log-density of a diagonal Gaussian with the given means and log-stds.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) * (-ls).exp();
            -HALF_LN_2PI - ls - 0.5 * z * z
        })
        .sum()
}

/// `N(mean_net(obs), diag(exp(2 log_std)))` with a state-independent spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: DenseNet,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    /// Tanh hidden layers; the output layer starts near zero so the initial
    /// mean action is close to 0. `log_std` starts at `init_log_std`.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let topology = Topology::new(sizes, Activation::Tanh)?;
        Ok(Self {
            mean_net: DenseNet::random(topology, rng, 0.1),
            log_std: vec![init_log_std; action_dim],
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.topology.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn n_params(&self) -> usize {
        self.mean_net.params.len() + self.log_std.len()
    }

    /// Network parameters followed by `log_std`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean_net.params.clone();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("policy parameters", self.n_params(), params.len())?;
        let n = self.mean_net.params.len();
        self.mean_net.params.copy_from_slice(&params[..n]);
        self.log_std.copy_from_slice(&params[n..]);
        Ok(())
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mean = self.mean_net.predict(obs)?;
        check_finite("policy mean", &mean)?;
        Ok(mean)
    }

    /// `action = mean + exp(log_std) * z` and its exact log-density.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(obs)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let log_prob = gaussian_log_prob(&mean, &self.log_std, &action);
        Ok((action, log_prob))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        check_len("policy action", self.action_dim(), action.len())?;
        Ok(gaussian_log_prob(&self.mean(obs)?, &self.log_std, action))
    }

    /// `log pi(a | s)` and its gradient with respect to [`GaussianPolicy::params`].
    pub fn log_prob_grad(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len("policy action", self.action_dim(), action.len())?;
        let (mean, cache) = self.mean_net.forward(obs)?;
        check_finite("policy mean", &mean)?;
        let mut dmean = Vec::with_capacity(mean.len());
        let mut dlog_std = Vec::with_capacity(mean.len());
        for d in 0..mean.len() {
            let inv_var = (-2.0 * self.log_std[d]).exp();
            let r = action[d] - mean[d];
            dmean.push(r * inv_var);
            dlog_std.push(r * r * inv_var - 1.0);
        }
        let mut grad = self.mean_net.backward(&cache, &dmean)?.params;
        grad.extend(dlog_std);
        Ok((gaussian_log_prob(&mean, &self.log_std, action), grad))
    }

    /// Jacobian rows `d mean_d / d net_params`, one per action dimension.
    pub fn mean_jacobian(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (mean, cache) = self.mean_net.forward(obs)?;
        let rows = (0..mean.len())
            .map(|d| {
                let mut e = vec![0.0; mean.len()];
                e[d] = 1.0;
                self.mean_net.backward(&cache, &e).map(|g| g.params)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((mean, rows))
    }
}

/// `KL[N(m0, s0^2) || N(m1, s1^2)]` for diagonal Gaussians given log-stds.
pub fn gaussian_kl(mean0: &[f64], log_std0: &[f64], mean1: &[f64], log_std1: &[f64]) -> f64 {
    (0..mean0.len())
        .map(|d| {
            let var0 = (2.0 * log_std0[d]).exp();
            let var1 = (2.0 * log_std1[d]).exp();
            let dm = mean0[d] - mean1[d];
            log_std1[d] - log_std0[d] + (var0 + dm * dm) / (2.0 * var1) - 0.5
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(3, 2, &[8], 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn collapsed_spread_returns_the_mean() {
        let mut p = policy(1);
        p.log_std = vec![-800.0; 2];
        let obs = [0.2, -0.1, 0.4];
        let (a, _) = p.sample_action(&obs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, p.mean(&obs).unwrap());
    }

    #[test]
    fn density_at_the_mode() {
        let lp = gaussian_log_prob(&[0.3], &[0.0], &[0.3]);
        assert!((lp + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn sampled_actions_centre_on_the_mean() {
        let p = GaussianPolicy::new(2, 1, &[4], 0.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let obs = [0.5, -0.5];
        let mean = p.mean(&obs).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let avg = (0..n).map(|_| p.sample_action(&obs, &mut rng).unwrap().0[0]).sum::<f64>() / n as f64;
        assert!((avg - mean).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn stored_log_prob_matches_recomputation() {
        let p = policy(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, lp) = p.sample_action(&obs, &mut rng).unwrap();
            assert!((p.log_prob(&obs, &a).unwrap() - lp).abs() <= 1e-12);
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = policy(5);
        let obs = [0.3, 0.7, -0.2];
        let action = [0.4, -1.1];
        let (_, g) = p.log_prob_grad(&obs, &action).unwrap();
        let fd = finite_diff_grad(
            |x| {
                let mut q = p.clone();
                q.set_params(x).unwrap();
                q.log_prob(&obs, &action).unwrap()
            },
            &p.params(),
            1e-6,
        )
        .unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        assert_eq!(gaussian_kl(&[0.3], &[-0.2], &[0.3], &[-0.2]), 0.0);
        let kl = gaussian_kl(&[1.0], &[0.0], &[0.0], &[0.0]);
        assert!((kl - 0.5).abs() < 1e-15);
    }
}
