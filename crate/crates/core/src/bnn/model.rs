//! Likelihood, local-reparametrization sampling, and the variational bound.

use rand::Rng;
use rand_distr::StandardNormal;

use super::posterior::{kl_grad_wrt_q, kl_to_prior, sigmoid, BnnPrior, VariationalPosterior};
use crate::error::{check_finite, check_len, Error, Result};
use crate::numerics::forward;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// One observed transition `(s_t, a_t, s_{t+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTriple {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

impl TransitionTriple {
    pub fn new(state: Vec<f64>, action: Vec<f64>, next_state: Vec<f64>) -> Self {
        Self {
            state,
            action,
            next_state,
        }
    }

    /// Network input: the state followed by the action.
    pub fn input(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.state.len() + self.action.len());
        x.extend_from_slice(&self.state);
        x.extend_from_slice(&self.action);
        x
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBatch {
    pub rows: Vec<TransitionTriple>,
}

impl TransitionBatch {
    pub fn new(rows: Vec<TransitionTriple>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Anything that can hand out minibatches drawn with replacement.
pub trait TransitionSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch>;
}

impl TransitionSource for [TransitionTriple] {
    fn len(&self) -> usize {
        <[TransitionTriple]>::len(self)
    }

    fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch> {
        if self.is_empty() {
            return Err(Error::EmptyPool);
        }
        let rows = (0..n).map(|_| self[rng.random_range(0..self.len())].clone()).collect();
        Ok(TransitionBatch::new(rows))
    }
}

fn check_row(posterior: &VariationalPosterior, row: &TransitionTriple) -> Result<()> {
    let topo = &posterior.topology;
    check_len("bnn input", topo.input_dim(), row.state.len() + row.action.len())?;
    check_len("bnn target", topo.output_dim(), row.next_state.len())
}

/// Diagonal Gaussian log-density of `target` around `mean`; also returns the
/// gradients with respect to `mean` and `log_std`.
pub fn gaussian_log_density(target: &[f64], mean: &[f64], log_std: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let mut value = 0.0;
    let mut dmean = Vec::with_capacity(mean.len());
    let mut dlog_std = Vec::with_capacity(mean.len());
    for d in 0..mean.len() {
        let inv_var = (-2.0 * log_std[d]).exp();
        let r = target[d] - mean[d];
        value += -HALF_LN_2PI - log_std[d] - 0.5 * r * r * inv_var;
        dmean.push(r * inv_var);
        dlog_std.push(r * r * inv_var - 1.0);
    }
    (value, dmean, dlog_std)
}

/// `log p(batch | theta)` for one fixed weight vector.
pub fn log_likelihood(posterior: &VariationalPosterior, weights: &[f64], batch: &TransitionBatch) -> Result<f64> {
    let mut total = 0.0;
    for row in &batch.rows {
        check_row(posterior, row)?;
        let (out, _) = forward(&posterior.topology, weights, &row.input())?;
        check_finite("bnn output", &out)?;
        total += gaussian_log_density(&row.next_state, &out, &posterior.likelihood_log_std).0;
    }
    Ok(total)
}

/// Standard-normal draws for the pre-activations of every layer, for a fixed
/// number of samples and rows. Holding one of these fixed freezes the
/// stochasticity of the bound (common random numbers).
#[derive(Debug, Clone)]
pub struct PreactivationNoise {
    values: Vec<f64>,
    per_row: usize,
    rows: usize,
    samples: usize,
}

impl PreactivationNoise {
    pub fn draw<R: Rng + ?Sized>(posterior: &VariationalPosterior, samples: usize, rows: usize, rng: &mut R) -> Self {
        let per_row: usize = posterior.topology.sizes()[1..].iter().sum();
        let values = (0..samples * rows * per_row).map(|_| rng.sample(StandardNormal)).collect();
        Self {
            values,
            per_row,
            rows,
            samples,
        }
    }

    pub fn zeros(posterior: &VariationalPosterior, samples: usize, rows: usize) -> Self {
        let per_row: usize = posterior.topology.sizes()[1..].iter().sum();
        Self {
            values: vec![0.0; samples * rows * per_row],
            per_row,
            rows,
            samples,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn slot(&self, sample: usize, row: usize) -> &[f64] {
        let start = (sample * self.rows + row) * self.per_row;
        &self.values[start..start + self.per_row]
    }
}

/// Values kept from one locally reparametrized forward pass.
struct LrtLayer {
    input: Vec<f64>,
    std: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

/// Posterior quantities reused by every forward pass of one call.
pub(crate) struct LrtContext<'a> {
    posterior: &'a VariationalPosterior,
    sigma: Vec<f64>,
    var: Vec<f64>,
    dsigma_drho: Vec<f64>,
}

impl<'a> LrtContext<'a> {
    pub(crate) fn new(posterior: &'a VariationalPosterior) -> Self {
        let sigma = posterior.sigma();
        let var = sigma.iter().map(|s| s * s).collect();
        let dsigma_drho = posterior.rho.iter().map(|&r| sigmoid(r)).collect();
        Self {
            posterior,
            sigma,
            var,
            dsigma_drho,
        }
    }

    /// Samples each layer's pre-activations from the Gaussian induced by the
    /// weight posterior: mean `mu_W x + mu_b`, variance `sigma_W^2 x^2 + sigma_b^2`.
    fn forward(&self, input: &[f64], noise: &[f64]) -> (Vec<f64>, Vec<LrtLayer>) {
        let topo = &self.posterior.topology;
        let mu = &self.posterior.mu;
        let mut layers = Vec::with_capacity(topo.n_layers());
        let mut x = input.to_vec();
        let mut noise_offset = 0;
        for (k, span) in topo.spans().into_iter().enumerate() {
            let mut std = Vec::with_capacity(span.outputs);
            let mut pre = Vec::with_capacity(span.outputs);
            for j in 0..span.outputs {
                let w0 = span.weights + j * span.inputs;
                let mut m = mu[span.bias + j];
                let mut v = self.var[span.bias + j];
                for i in 0..span.inputs {
                    m += mu[w0 + i] * x[i];
                    v += self.var[w0 + i] * x[i] * x[i];
                }
                let s = v.sqrt();
                std.push(s);
                pre.push(m + s * noise[noise_offset + j]);
            }
            noise_offset += span.outputs;
            let post: Vec<f64> = match topo.activation_after(k) {
                Some(act) => pre.iter().map(|&p| act.apply(p)).collect(),
                None => pre.clone(),
            };
            let input = std::mem::replace(&mut x, post.clone());
            layers.push(LrtLayer { input, std, pre, post });
        }
        (x, layers)
    }

    /// Accumulates d(objective)/d(mu) and d/d(rho) given d/d(output).
    fn backward(&self, layers: &[LrtLayer], noise: &[f64], output_grad: &[f64], dmu: &mut [f64], drho: &mut [f64]) {
        let topo = &self.posterior.topology;
        let mu = &self.posterior.mu;
        let spans = topo.spans();
        let mut noise_offset: usize = topo.sizes()[1..].iter().sum();
        let mut delta = output_grad.to_vec();
        for k in (0..spans.len()).rev() {
            let span = spans[k];
            let layer = &layers[k];
            noise_offset -= span.outputs;
            if let Some(act) = topo.activation_after(k) {
                for (j, d) in delta.iter_mut().enumerate() {
                    *d *= act.derivative(layer.pre[j], layer.post[j]);
                }
            }
            let x = &layer.input;
            let mut input_grad = vec![0.0; span.inputs];
            for j in 0..span.outputs {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                // d pre / d var = eps / (2 std); zero-variance units carry no noise path.
                let s = layer.std[j];
                let noise_coef = if s > 0.0 { noise[noise_offset + j] / s } else { 0.0 };
                let b = span.bias + j;
                dmu[b] += dj;
                drho[b] += dj * noise_coef * self.sigma[b] * self.dsigma_drho[b];
                let w0 = span.weights + j * span.inputs;
                for i in 0..span.inputs {
                    let xi = x[i];
                    let w = w0 + i;
                    dmu[w] += dj * xi;
                    drho[w] += dj * noise_coef * self.sigma[w] * xi * xi * self.dsigma_drho[w];
                    input_grad[i] += dj * (mu[w] + noise_coef * self.var[w] * xi);
                }
            }
            delta = input_grad;
        }
    }
}

/// Next-state predictions from `n_samples` independent posterior draws,
/// sampled through the pre-activations.
pub fn sample_predict<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    state: &[f64],
    action: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let topo = &posterior.topology;
    check_len("bnn input", topo.input_dim(), state.len() + action.len())?;
    let mut input = state.to_vec();
    input.extend_from_slice(action);
    let ctx = LrtContext::new(posterior);
    let noise = PreactivationNoise::draw(posterior, n_samples, 1, rng);
    (0..n_samples)
        .map(|s| {
            let (out, _) = ctx.forward(&input, noise.slot(s, 0));
            check_finite("bnn output", &out)?;
            Ok(out)
        })
        .collect()
}

/// Gradient of the bound with respect to every trainable quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl ElboGradient {
    fn zeros(posterior: &VariationalPosterior) -> Self {
        Self {
            mu: vec![0.0; posterior.n_params()],
            rho: vec![0.0; posterior.n_params()],
            log_std: vec![0.0; posterior.likelihood_log_std.len()],
        }
    }

    /// Same layout as [`VariationalPosterior::pack`].
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.mu.len() + self.log_std.len());
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.rho);
        v.extend_from_slice(&self.log_std);
        v
    }
}

/// Sampled log-likelihood `(1/N) sum_i log p(batch | theta_i)` and its gradient,
/// for the given frozen noise.
pub fn expected_log_likelihood_with_grad(
    posterior: &VariationalPosterior,
    batch: &TransitionBatch,
    noise: &PreactivationNoise,
) -> Result<(f64, ElboGradient)> {
    if noise.rows < batch.len() {
        return Err(Error::InvalidArgument("noise draws do not cover the batch".into()));
    }
    let ctx = LrtContext::new(posterior);
    let mut grad = ElboGradient::zeros(posterior);
    let mut total = 0.0;
    let samples = noise.samples();
    let scale = 1.0 / samples as f64;
    for (r, row) in batch.rows.iter().enumerate() {
        check_row(posterior, row)?;
        let input = row.input();
        for s in 0..samples {
            let eps = noise.slot(s, r);
            let (out, layers) = ctx.forward(&input, eps);
            check_finite("bnn output", &out)?;
            let (ll, dout, dls) = gaussian_log_density(&row.next_state, &out, &posterior.likelihood_log_std);
            total += scale * ll;
            let dout: Vec<f64> = dout.iter().map(|d| d * scale).collect();
            ctx.backward(&layers, eps, &dout, &mut grad.mu, &mut grad.rho);
            for (g, d) in grad.log_std.iter_mut().zip(&dls) {
                *g += scale * d;
            }
        }
    }
    Ok((total, grad))
}

/// Variational lower bound with frozen noise:
/// `(1/N) sum_i log p(batch | theta_i) - kl_weight * KL[q || prior]`.
pub fn elbo_with_grad(
    posterior: &VariationalPosterior,
    prior: &BnnPrior,
    batch: &TransitionBatch,
    noise: &PreactivationNoise,
    kl_weight: f64,
) -> Result<(f64, ElboGradient)> {
    check_len("prior", posterior.n_params(), prior.mu.len())?;
    let (ll, mut grad) = expected_log_likelihood_with_grad(posterior, batch, noise)?;
    if kl_weight == 0.0 {
        return Ok((ll, grad));
    }
    let kl = kl_to_prior(posterior, prior)?;
    let (kmu, krho) = kl_grad_wrt_q(posterior, &prior.mu, &prior.sigma_vec());
    for i in 0..posterior.n_params() {
        grad.mu[i] -= kl_weight * kmu[i];
        grad.rho[i] -= kl_weight * krho[i];
    }
    Ok((ll - kl_weight * kl, grad))
}

pub fn elbo<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    prior: &BnnPrior,
    batch: &TransitionBatch,
    n_samples: usize,
    kl_weight: f64,
    rng: &mut R,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let noise = PreactivationNoise::draw(posterior, n_samples, batch.len(), rng);
    Ok(elbo_with_grad(posterior, prior, batch, &noise, kl_weight)?.0)
}

/// Standard deviation of the predictive mean over `n_samples` posterior draws,
/// per output dimension (observation noise excluded).
pub fn predictive_moments<R: Rng + ?Sized>(
    posterior: &VariationalPosterior,
    state: &[f64],
    action: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let draws = sample_predict(posterior, state, action, n_samples, rng)?;
    let dim = posterior.topology.output_dim();
    let n = draws.len() as f64;
    let mut mean = vec![0.0; dim];
    for d in &draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for d in &draws {
        for k in 0..dim {
            var[k] += (d[k] - mean[k]).powi(2) / n;
        }
    }
    Ok((mean, var.into_iter().map(f64::sqrt).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::posterior::default_prior_sigma;
    use crate::numerics::{finite_diff_grad, Activation, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_posterior(sizes: Vec<usize>, seed: u64) -> VariationalPosterior {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = Topology::new(sizes, Activation::Relu).unwrap();
        let mut q = VariationalPosterior::initialize(topo, &mut rng, -2.0, 0.0);
        for r in q.rho.iter_mut() {
            *r = rng.random_range(-3.0..0.0);
        }
        for l in q.likelihood_log_std.iter_mut() {
            *l = rng.random_range(-0.5..0.5);
        }
        q
    }

    fn random_batch(q: &VariationalPosterior, rows: usize, action_dim: usize, rng: &mut ChaCha8Rng) -> TransitionBatch {
        let sd = q.topology.input_dim() - action_dim;
        let od = q.topology.output_dim();
        let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        TransitionBatch::new(
            (0..rows)
                .map(|_| TransitionTriple::new(v(sd), v(action_dim), v(od)))
                .collect(),
        )
    }

    /// Hand-written Gaussian log-pdf, independent of `gaussian_log_density`.
    fn log_pdf(x: f64, mean: f64, std: f64) -> f64 {
        let z = (x - mean) / std;
        -(2.0 * std::f64::consts::PI).sqrt().ln() - std.ln() - z * z / 2.0
    }

    #[test]
    fn log_likelihood_at_mode_is_half_log_two_pi() {
        let topo = Topology::new(vec![1, 1], Activation::Relu).unwrap();
        let q = VariationalPosterior::new(topo, vec![2.0, 0.5], vec![-3.0, -3.0], vec![0.0]).unwrap();
        let batch = TransitionBatch::new(vec![TransitionTriple::new(vec![1.0], vec![], vec![2.5])]);
        let ll = log_likelihood(&q, &q.mu, &batch).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-15);
        let doubled = TransitionBatch::new([batch.rows.clone(), batch.rows.clone()].concat());
        assert_eq!(log_likelihood(&q, &q.mu, &doubled).unwrap(), 2.0 * ll);
    }

    #[test]
    fn log_likelihood_matches_density_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = toy_posterior(vec![3, 5, 2], 4);
        let batch = random_batch(&q, 6, 1, &mut rng);
        let theta = q.sample_weights(&mut rng);
        let ll = log_likelihood(&q, &theta, &batch).unwrap();
        let mut oracle = 0.0;
        for row in &batch.rows {
            let out = crate::numerics::DenseNet::new(q.topology.clone(), theta.clone())
                .unwrap()
                .predict(&row.input())
                .unwrap();
            for d in 0..2 {
                oracle += log_pdf(row.next_state[d], out[d], q.likelihood_log_std[d].exp());
            }
        }
        assert!((ll - oracle).abs() < 1e-12, "{ll} vs {oracle}");
    }

    #[test]
    fn zero_variance_samples_equal_mean_network() {
        let mut q = toy_posterior(vec![2, 4, 2], 5);
        for r in q.rho.iter_mut() {
            *r = -1000.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean = q.mean_net().predict(&[0.4, -0.3]).unwrap();
        for s in sample_predict(&q, &[0.4], &[-0.3], 20, &mut rng).unwrap() {
            assert_eq!(s, mean);
        }
    }

    #[test]
    fn sample_predict_is_seed_deterministic() {
        let q = toy_posterior(vec![2, 4, 2], 5);
        let a = sample_predict(&q, &[0.1], &[0.2], 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_predict(&q, &[0.1], &[0.2], 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_bnn_sample_mean_matches_mean_network() {
        let topo = Topology::new(vec![2, 1], Activation::Relu).unwrap();
        let q = VariationalPosterior::new(topo, vec![0.7, -1.1, 0.3], vec![-1.0, 0.0, -0.5], vec![0.0]).unwrap();
        let x = [0.8, 1.5];
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = sample_predict(&q, &x, &[], n, &mut rng).unwrap();
        let mean = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let s = q.sigma();
        let var = s[0].powi(2) * x[0] * x[0] + s[1].powi(2) * x[1] * x[1] + s[2].powi(2);
        let analytic = 0.7 * 0.8 - 1.1 * 1.5 + 0.3;
        let se = (var / n as f64).sqrt();
        assert!((mean - analytic).abs() < 3.0 * se, "{mean} vs {analytic} (se {se})");
    }

    #[test]
    fn elbo_of_prior_on_empty_batch_is_zero() {
        let topo = Topology::new(vec![2, 3, 1], Activation::Relu).unwrap();
        let prior = BnnPrior::from_seed(topo.param_count(), default_prior_sigma(), 5).unwrap();
        let rho = vec![crate::bnn::inverse_softplus(prior.sigma); prior.mu.len()];
        let q = VariationalPosterior::new(topo, prior.mu.clone(), rho, vec![0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = elbo(&q, &prior, &TransitionBatch::default(), 10, 1.0, &mut rng).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn zero_kl_weight_reduces_to_sampled_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = toy_posterior(vec![3, 4, 2], 9);
        let prior = BnnPrior::from_seed(q.n_params(), default_prior_sigma(), 1).unwrap();
        let batch = random_batch(&q, 5, 1, &mut rng);
        let noise = PreactivationNoise::draw(&q, 10, batch.len(), &mut rng);
        let (e, _) = elbo_with_grad(&q, &prior, &batch, &noise, 0.0).unwrap();
        let (ll, _) = expected_log_likelihood_with_grad(&q, &batch, &noise).unwrap();
        assert_eq!(e, ll);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences_under_frozen_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let q = toy_posterior(vec![3, 4, 2], 13);
        let prior = BnnPrior::from_seed(q.n_params(), default_prior_sigma(), 2).unwrap();
        let batch = random_batch(&q, 4, 1, &mut rng);
        let noise = PreactivationNoise::draw(&q, 3, batch.len(), &mut rng);
        let kl_weight = 0.2;
        let (_, grad) = elbo_with_grad(&q, &prior, &batch, &noise, kl_weight).unwrap();
        let f = |p: &[f64]| {
            let mut qq = q.clone();
            qq.unpack(p).unwrap();
            elbo_with_grad(&qq, &prior, &batch, &noise, kl_weight).unwrap().0
        };
        let fd = finite_diff_grad(f, &q.pack(), 1e-6).unwrap();
        for (a, b) in grad.pack().iter().zip(&fd) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
            assert!(rel < 1e-3, "analytic {a} vs fd {b}");
        }
    }
}
