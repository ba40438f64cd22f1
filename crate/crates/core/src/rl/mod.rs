//! Gaussian policies, rollouts and policy-gradient learners.

mod baseline;
mod policy;
mod returns;
mod rollout;
mod update;

pub use baseline::{Baseline, BaselineKind};
pub use policy::{gaussian_kl, gaussian_log_prob, GaussianPolicy};
pub use returns::discounted_returns;
pub use rollout::{collect_batch, evaluate, evaluate_with, rollout, rollout_with, EvalReport, Trajectory};
pub use update::{
    backtracking_line_search, compute_advantages, likelihood_ratio_gradient, mean_policy_kl, natural_gradient_step,
    reinforce_update, surrogate, trust_region_update, whiten, Algorithm, Learner, LearnerConfig, LineSearchOutcome,
    PolicyBatch, TrustRegionConfig, UpdateReport,
};
