use log::warn;
use rand::Rng;

use super::baseline::{Baseline, BaselineKind};
use super::policy::{gaussian_kl, gaussian_log_prob, GaussianPolicy};
use super::returns::discounted_returns;
use super::rollout::Trajectory;
use crate::error::{check_finite, Error, Result};
use crate::numerics::linalg::{conjugate_gradient, dot};
use crate::numerics::{AdamConfig, AdamState};

/// Flattened `(obs, action, advantage)` rows of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub advantages: Vec<f64>,
}

impl PolicyBatch {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

/// Shifts to zero mean and scales to unit population std. A batch whose
/// spread is at rounding level relative to its magnitude becomes all zeros,
/// so numerical noise is never amplified into a policy step.
pub fn whiten(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let mean = crate::numerics::linalg::mean(values);
    let std = crate::numerics::linalg::std_dev(values);
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let degenerate = std <= 1e-10 * scale;
    for v in values.iter_mut() {
        *v = if degenerate { 0.0 } else { (*v - mean) / std };
    }
}

/// Whitened `G_t - b(s_t)` over shaped rewards, followed by a baseline refit
/// on this batch's returns.
pub fn compute_advantages(trajectories: &[Trajectory], baseline: &mut Baseline, gamma: f64) -> Result<PolicyBatch> {
    let returns: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| discounted_returns(&t.shaped_rewards, gamma))
        .collect();
    let mut batch = PolicyBatch {
        observations: Vec::new(),
        actions: Vec::new(),
        advantages: Vec::new(),
    };
    for (traj, ret) in trajectories.iter().zip(&returns) {
        let b = baseline.predict(traj)?;
        for t in 0..traj.len() {
            batch.observations.push(traj.observations[t].clone());
            batch.actions.push(traj.actions[t].clone());
            batch.advantages.push(ret[t] - b[t]);
        }
    }
    check_finite("advantages", &batch.advantages)?;
    whiten(&mut batch.advantages);
    baseline.fit(trajectories, &returns)?;
    Ok(batch)
}

/// `(1/n) sum_i w_i grad log pi(a_i | o_i)`.
pub fn likelihood_ratio_gradient(policy: &GaussianPolicy, batch: &PolicyBatch) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; policy.n_params()];
    if batch.is_empty() {
        return Ok(grad);
    }
    for i in 0..batch.len() {
        if batch.advantages[i] == 0.0 {
            continue;
        }
        let (_, g) = policy.log_prob_grad(&batch.observations[i], &batch.actions[i])?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += batch.advantages[i] * gi;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    check_finite("policy gradient", &grad)?;
    Ok(grad)
}

/// `(1/n) sum_i A_i exp(log pi(a_i|o_i) - old_log_prob_i)`.
pub fn surrogate(policy: &GaussianPolicy, batch: &PolicyBatch, old_log_probs: &[f64]) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..batch.len() {
        let lp = policy.log_prob(&batch.observations[i], &batch.actions[i])?;
        total += batch.advantages[i] * (lp - old_log_probs[i]).exp();
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateReport {
    pub accepted: bool,
    /// Mean `KL[old || new]` over batch observations (0 when rejected).
    pub kl: f64,
    pub surrogate_gain: f64,
    pub backtracks: usize,
    pub grad_norm: f64,
}

/// One Adam ascent step on the likelihood-ratio gradient.
pub fn reinforce_update(policy: &mut GaussianPolicy, batch: &PolicyBatch, adam: &mut AdamState) -> Result<UpdateReport> {
    let grad = likelihood_ratio_gradient(policy, batch)?;
    let grad_norm = dot(&grad, &grad).sqrt();
    let mut params = policy.params();
    let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
    adam.step(&mut params, &descent)?;
    if !params.iter().all(|p| p.is_finite()) {
        return Err(Error::NonFinite("policy parameters"));
    }
    let old = policy.clone();
    policy.set_params(&params)?;
    let kl = mean_policy_kl(&old, policy, &batch.observations)?;
    Ok(UpdateReport {
        accepted: true,
        kl,
        surrogate_gain: 0.0,
        backtracks: 0,
        grad_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionConfig {
    pub kl_step: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub max_backtracks: usize,
    /// Accept only if the measured KL is at most `kl_tolerance * kl_step`.
    pub kl_tolerance: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            kl_step: 0.01,
            cg_iters: 10,
            cg_damping: 1e-3,
            max_backtracks: 10,
            kl_tolerance: 1.5,
        }
    }
}

/// Solves `F x = g` by CG and scales `x` so `0.5 x^T F x = kl_step`. Falls
/// back to the plain gradient direction when CG yields no ascent direction.
pub fn natural_gradient_step<F>(grad: &[f64], mut fvp: F, config: &TrustRegionConfig) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let cg = conjugate_gradient(&mut fvp, grad, config.cg_iters, 1e-10);
    let usable = cg.solution.iter().all(|x| x.is_finite()) && dot(&cg.solution, grad) > 0.0;
    let direction = if usable {
        cg.solution
    } else {
        warn!("conjugate gradient gave no ascent direction; using the plain gradient");
        grad.to_vec()
    };
    let quad = dot(&direction, &fvp(&direction));
    if !(quad > 0.0) || !quad.is_finite() {
        return Err(Error::NonFinite("natural gradient curvature"));
    }
    let scale = (2.0 * config.kl_step / quad).sqrt();
    Ok(direction.into_iter().map(|x| x * scale).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    /// Accepted parameters, or `None` when every candidate failed.
    pub params: Option<Vec<f64>>,
    pub kl: f64,
    pub improvement: f64,
    pub backtracks: usize,
}

/// Halves `full_step` until the candidate improves the surrogate and keeps
/// `kl(candidate) <= kl_tolerance * kl_step`.
pub fn backtracking_line_search<S, K>(
    theta: &[f64],
    full_step: &[f64],
    mut surrogate: S,
    mut kl: K,
    config: &TrustRegionConfig,
) -> Result<LineSearchOutcome>
where
    S: FnMut(&[f64]) -> Result<f64>,
    K: FnMut(&[f64]) -> Result<f64>,
{
    let base = surrogate(theta)?;
    let mut frac = 1.0;
    for backtracks in 0..=config.max_backtracks {
        let candidate: Vec<f64> = theta.iter().zip(full_step).map(|(t, s)| t + frac * s).collect();
        let value = surrogate(&candidate)?;
        let divergence = kl(&candidate)?;
        if value.is_finite()
            && divergence.is_finite()
            && value > base
            && divergence <= config.kl_tolerance * config.kl_step
        {
            return Ok(LineSearchOutcome {
                params: Some(candidate),
                kl: divergence,
                improvement: value - base,
                backtracks,
            });
        }
        frac *= 0.5;
    }
    Ok(LineSearchOutcome {
        params: None,
        kl: 0.0,
        improvement: 0.0,
        backtracks: config.max_backtracks,
    })
}

/// Mean `KL[old(.|o) || new(.|o)]` over `observations`.
pub fn mean_policy_kl(old: &GaussianPolicy, new: &GaussianPolicy, observations: &[Vec<f64>]) -> Result<f64> {
    if observations.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for o in observations {
        total += gaussian_kl(&old.mean(o)?, &old.log_std, &new.mean(o)?, &new.log_std);
    }
    Ok(total / observations.len() as f64)
}

/// Natural-gradient step with a KL-constrained backtracking line search.
/// A rejected step leaves `policy` unchanged.
pub fn trust_region_update(
    policy: &mut GaussianPolicy,
    batch: &PolicyBatch,
    config: &TrustRegionConfig,
) -> Result<UpdateReport> {
    if !(config.kl_step >= 0.0) {
        return Err(Error::InvalidArgument(format!("kl_step must be non-negative, got {}", config.kl_step)));
    }
    let grad = likelihood_ratio_gradient(policy, batch)?;
    let grad_norm = dot(&grad, &grad).sqrt();
    if grad_norm == 0.0 || config.kl_step == 0.0 || batch.is_empty() {
        return Ok(UpdateReport {
            grad_norm,
            ..UpdateReport::default()
        });
    }

    let old = policy.clone();
    let n_net = old.mean_net.params.len();
    let action_dim = old.action_dim();
    let inv_var: Vec<f64> = old.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut jacobians = Vec::with_capacity(batch.len());
    let mut old_log_probs = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (mean, rows) = old.mean_jacobian(&batch.observations[i])?;
        old_log_probs.push(gaussian_log_prob(&mean, &old.log_std, &batch.actions[i]));
        jacobians.push(rows);
    }
    let n = batch.len() as f64;
    // Gaussian Fisher: J^T diag(1/sigma^2) J on the mean weights, 2 I on log_std.
    let fvp = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let (vm, vs) = v.split_at(n_net);
        for rows in &jacobians {
            for d in 0..action_dim {
                let jv = dot(&rows[d], vm) * inv_var[d] / n;
                for (o, j) in out[..n_net].iter_mut().zip(&rows[d]) {
                    *o += jv * j;
                }
            }
        }
        for (o, s) in out[n_net..].iter_mut().zip(vs) {
            *o = 2.0 * s;
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += config.cg_damping * x;
        }
        out
    };
    let step = natural_gradient_step(&grad, fvp, config)?;
    let theta = old.params();
    let mut scratch = old.clone();
    let mut scratch_kl = old.clone();
    let outcome = backtracking_line_search(
        &theta,
        &step,
        |p| {
            scratch.set_params(p)?;
            surrogate(&scratch, batch, &old_log_probs)
        },
        |p| {
            scratch_kl.set_params(p)?;
            mean_policy_kl(&old, &scratch_kl, &batch.observations)
        },
        config,
    )?;
    match outcome.params {
        Some(p) => {
            policy.set_params(&p)?;
            Ok(UpdateReport {
                accepted: true,
                kl: outcome.kl,
                surrogate_gain: outcome.improvement,
                backtracks: outcome.backtracks,
                grad_norm,
            })
        }
        None => {
            warn!("trust-region line search rejected the step");
            Ok(UpdateReport {
                accepted: false,
                backtracks: outcome.backtracks,
                grad_norm,
                ..UpdateReport::default()
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Reinforce,
    TrpoLite,
}

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "reinforce" => Ok(Self::Reinforce),
            "trpo-lite" => Ok(Self::TrpoLite),
            other => Err(Error::Parse(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Reinforce => "reinforce",
            Self::TrpoLite => "trpo-lite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub policy_lr: f64,
    pub baseline: BaselineKind,
    pub trust_region: TrustRegionConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::TrpoLite,
            gamma: 0.99,
            policy_lr: 0.01,
            baseline: BaselineKind::Linear,
            trust_region: TrustRegionConfig::default(),
        }
    }
}

/// Policy-gradient learner state carried across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub config: LearnerConfig,
    pub baseline: Baseline,
    adam: AdamState,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(config: LearnerConfig, policy: &GaussianPolicy, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {}", config.gamma)));
        }
        Ok(Self {
            baseline: Baseline::new(config.baseline, policy.obs_dim(), rng)?,
            adam: AdamState::new(AdamConfig::with_lr(config.policy_lr), policy.n_params()),
            config,
        })
    }

    /// Updates `policy` from trajectories whose `shaped_rewards` are final.
    pub fn update(&mut self, policy: &mut GaussianPolicy, trajectories: &[Trajectory]) -> Result<UpdateReport> {
        let batch = compute_advantages(trajectories, &mut self.baseline, self.config.gamma)?;
        match self.config.algorithm {
            Algorithm::Reinforce => reinforce_update(policy, &batch, &mut self.adam),
            Algorithm::TrpoLite => trust_region_update(policy, &batch, &self.config.trust_region),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Env;
    use crate::numerics::finite_diff_grad;
    use crate::rl::rollout::collect_batch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(policy: &GaussianPolicy, rows: usize, seed: u64) -> PolicyBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs_dim = policy.obs_dim();
        let observations: Vec<Vec<f64>> =
            (0..rows).map(|_| (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let actions = observations.iter().map(|o| policy.sample_action(o, &mut rng).unwrap().0).collect();
        let mut advantages: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        whiten(&mut advantages);
        PolicyBatch {
            observations,
            actions,
            advantages,
        }
    }

    #[test]
    fn whitening_gives_zero_mean_unit_std() {
        let mut v: Vec<f64> = (0..257).map(|i| ((i * 37) % 101) as f64 * 0.3 - 4.0).collect();
        whiten(&mut v);
        let m = crate::numerics::linalg::mean(&v);
        let s = crate::numerics::linalg::std_dev(&v);
        assert!(m.abs() <= 1e-10);
        assert!((s - 1.0).abs() <= 1e-10);
        let mut flat = vec![3.0; 5];
        whiten(&mut flat);
        assert_eq!(flat, vec![0.0; 5]);
        let mut noise = vec![1e-13, -2e-13, 0.0, 3e-14];
        whiten(&mut noise);
        assert_eq!(noise, vec![0.0; 4]);
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut policy = GaussianPolicy::new(2, 1, &[8], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut batch = random_batch(&policy, 20, 1);
        batch.advantages = vec![0.0; 20];
        let before = policy.clone();
        let mut adam = AdamState::new(AdamConfig::with_lr(0.01), policy.n_params());
        reinforce_update(&mut policy, &batch, &mut adam).unwrap();
        assert_eq!(policy, before);
        trust_region_update(&mut policy, &batch, &TrustRegionConfig::default()).unwrap();
        assert_eq!(policy, before);
    }

    #[test]
    fn gradient_matches_surrogate_finite_differences() {
        let policy = GaussianPolicy::new(3, 2, &[6], -0.3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let batch = random_batch(&policy, 15, 3);
        let old_lp: Vec<f64> = (0..batch.len())
            .map(|i| policy.log_prob(&batch.observations[i], &batch.actions[i]).unwrap())
            .collect();
        let analytic = likelihood_ratio_gradient(&policy, &batch).unwrap();
        let fd = finite_diff_grad(
            |p| {
                let mut q = policy.clone();
                q.set_params(p).unwrap();
                surrogate(&q, &batch, &old_lp).unwrap()
            },
            &policy.params(),
            1e-6,
        )
        .unwrap();
        for (a, b) in analytic.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn natural_step_matches_closed_form_on_a_quadratic() {
        // F = L L^T + I, known; CG with n iterations is exact.
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut f = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                f[i * n + j] = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fvp = |v: &[f64]| (0..n).map(|i| (0..n).map(|j| f[i * n + j] * v[j]).sum()).collect::<Vec<f64>>();
        let config = TrustRegionConfig {
            cg_iters: 50,
            ..TrustRegionConfig::default()
        };
        let step = natural_gradient_step(&g, fvp, &config).unwrap();
        let finv_g = crate::numerics::linalg::cholesky_solve(&f, n, &g).unwrap();
        let scale = (2.0 * config.kl_step / dot(&g, &finv_g)).sqrt();
        // Quadratic surrogate g^T d with exact quadratic KL accepts the full step.
        let outcome = backtracking_line_search(
            &vec![0.0; n],
            &step,
            |p| Ok(dot(&g, p)),
            |p| Ok(0.5 * dot(p, &fvp(p))),
            &config,
        )
        .unwrap();
        let accepted = outcome.params.unwrap();
        assert_eq!(outcome.backtracks, 0);
        for (a, b) in accepted.iter().zip(&finv_g) {
            assert!((a - scale * b).abs() <= 1e-6, "{a} vs {}", scale * b);
        }
    }

    #[test]
    fn accepted_steps_respect_the_kl_radius() {
        let env = Env::from_name("sparse-mountaincar").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut policy = GaussianPolicy::new(2, 1, &[32], 0.0, &mut rng).unwrap();
        let config = TrustRegionConfig::default();
        for epoch in 0..5 {
            let trajs = collect_batch(&policy, &env, 400, 100, &mut rng).unwrap();
            // Dense surrogate reward so every step has a signal.
            let mut batch = PolicyBatch {
                observations: Vec::new(),
                actions: Vec::new(),
                advantages: Vec::new(),
            };
            for t in &trajs {
                for i in 0..t.len() {
                    batch.observations.push(t.observations[i].clone());
                    batch.actions.push(t.actions[i].clone());
                    batch.advantages.push(t.observations[i + 1][1]);
                }
            }
            whiten(&mut batch.advantages);
            let old = policy.clone();
            let report = trust_region_update(&mut policy, &batch, &config).unwrap();
            let measured = mean_policy_kl(&old, &policy, &batch.observations).unwrap();
            if report.accepted {
                assert!(measured <= 1.5 * config.kl_step, "epoch {epoch}: {measured}");
                assert!(measured > 0.0);
            } else {
                assert_eq!(policy, old);
            }
        }
    }

    #[test]
    fn vanishing_radius_vanishing_change() {
        let policy = GaussianPolicy::new(2, 1, &[8], 0.0, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let batch = random_batch(&policy, 50, 7);
        let mut last = f64::INFINITY;
        for kl_step in [1e-2, 1e-4, 1e-6, 0.0] {
            let mut p = policy.clone();
            let config = TrustRegionConfig {
                kl_step,
                ..TrustRegionConfig::default()
            };
            trust_region_update(&mut p, &batch, &config).unwrap();
            let change: f64 = p.params().iter().zip(policy.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(change <= last);
            last = change;
        }
        assert_eq!(last, 0.0);
    }
}
