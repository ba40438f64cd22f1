use std::path::PathBuf;

use crate::bnn::{ElboSchedule, RefitConfig};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::rl::{Algorithm, BaselineKind, LearnerConfig, TrustRegionConfig};
use crate::vime::{direction_name, parse_direction, IntrinsicMode, VimeConfig};

/// Everything needed to reproduce a training run. Serializes to a flat
/// `key = value` file that [`RunConfig::parse`] reads back exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub algorithm: Algorithm,
    /// `false` runs the plain policy-gradient learner with no dynamics model.
    pub vime: bool,
    pub seeds: Vec<u64>,
    pub n_epochs: usize,
    pub batch_timesteps: usize,
    /// `None` uses the environment's own horizon.
    pub horizon: Option<usize>,
    pub eval_episodes: usize,
    pub policy_hidden: Vec<usize>,
    pub policy_init_log_std: f64,
    pub gamma: f64,
    pub policy_lr: f64,
    pub baseline: BaselineKind,
    pub kl_step: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub vime_config: VimeConfig,
    pub log_visited: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: "sparse-mountaincar".into(),
            algorithm: Algorithm::TrpoLite,
            vime: true,
            seeds: (0..5).collect(),
            n_epochs: 150,
            batch_timesteps: 1000,
            horizon: None,
            eval_episodes: 10,
            policy_hidden: vec![32],
            policy_init_log_std: 0.0,
            gamma: 0.99,
            policy_lr: 0.01,
            baseline: BaselineKind::Mlp,
            kl_step: 0.01,
            cg_iters: 10,
            cg_damping: 1e-3,
            vime_config: VimeConfig {
                pool_capacity: 20_000,
                bnn_schedule: ElboSchedule {
                    iterations: 100,
                    ..ElboSchedule::default()
                },
                ..VimeConfig::default()
            },
            log_visited: true,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value for {key}: '{value}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Parse(format!("bad value for {key}: '{other}'"))),
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn horizon(&self) -> Result<usize> {
        match self.horizon {
            Some(h) => Ok(h),
            None => Ok(Env::from_name(&self.env)?.spec().horizon),
        }
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            algorithm: self.algorithm,
            gamma: self.gamma,
            policy_lr: self.policy_lr,
            baseline: self.baseline,
            trust_region: TrustRegionConfig {
                kl_step: self.kl_step,
                cg_iters: self.cg_iters,
                cg_damping: self.cg_damping,
                ..TrustRegionConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        Env::from_name(&self.env)?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.batch_timesteps == 0 {
            return Err(Error::InvalidArgument("batch_timesteps must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::InvalidArgument("eval_episodes must be positive".into()));
        }
        if self.horizon == Some(0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        self.vime_config.validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let vc = &mut self.vime_config;
        match key.trim() {
            "env" => self.env = v.to_string(),
            "algorithm" => self.algorithm = Algorithm::parse(v)?,
            "vime" => self.vime = parse_bool(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "n_epochs" => self.n_epochs = parse_num(key, v)?,
            "batch_timesteps" => self.batch_timesteps = parse_num(key, v)?,
            "horizon" => self.horizon = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "eval_episodes" => self.eval_episodes = parse_num(key, v)?,
            "policy_hidden" => self.policy_hidden = parse_list(key, v)?,
            "policy_init_log_std" => self.policy_init_log_std = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "policy_lr" => self.policy_lr = parse_num(key, v)?,
            "baseline" => self.baseline = BaselineKind::parse(v)?,
            "kl_step" => self.kl_step = parse_num(key, v)?,
            "cg_iters" => self.cg_iters = parse_num(key, v)?,
            "cg_damping" => self.cg_damping = parse_num(key, v)?,
            "eta" => vc.eta = parse_num(key, v)?,
            "lambda" => vc.lambda = parse_num(key, v)?,
            "mode" => vc.mode = IntrinsicMode::parse(v)?,
            "direction" => vc.direction = parse_direction(v)?,
            "gain_samples" => vc.gain_samples = parse_num(key, v)?,
            "refit_iterations" => vc.refit.iterations = parse_num(key, v)?,
            "refit_step_size" => vc.refit.step_size = parse_num(key, v)?,
            "refit_samples" => vc.refit.n_samples = parse_num(key, v)?,
            "window_length" => vc.window_length = parse_num(key, v)?,
            "kl_floor" => vc.kl_floor = parse_num(key, v)?,
            "pool_capacity" => vc.pool_capacity = parse_num(key, v)?,
            "pool_min_size" => vc.pool_min_size = parse_num(key, v)?,
            "bnn_hidden" => vc.bnn_hidden = parse_list(key, v)?,
            "bnn_iterations" => vc.bnn_schedule.iterations = parse_num(key, v)?,
            "bnn_batch_size" => vc.bnn_schedule.batch_size = parse_num(key, v)?,
            "bnn_samples" => vc.bnn_schedule.n_samples = parse_num(key, v)?,
            "bnn_lr" => vc.bnn_lr = parse_num(key, v)?,
            "prior_sigma" => vc.prior_sigma = parse_num(key, v)?,
            "bnn_init_rho" => vc.init_rho = parse_num(key, v)?,
            "bnn_init_log_std" => vc.init_log_std = parse_num(key, v)?,
            "log_visited" => self.log_visited = parse_bool(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`; floats use shortest round-trip form.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let vc = &self.vime_config;
        let RefitConfig {
            iterations: refit_iterations,
            step_size: refit_step_size,
            n_samples: refit_samples,
        } = vc.refit;
        vec![
            ("env", self.env.clone()),
            ("algorithm", self.algorithm.name().into()),
            ("vime", self.vime.to_string()),
            ("seeds", join(&self.seeds)),
            ("n_epochs", self.n_epochs.to_string()),
            ("batch_timesteps", self.batch_timesteps.to_string()),
            ("horizon", self.horizon.map_or("auto".into(), |h| h.to_string())),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("policy_hidden", join(&self.policy_hidden)),
            ("policy_init_log_std", self.policy_init_log_std.to_string()),
            ("gamma", self.gamma.to_string()),
            ("policy_lr", self.policy_lr.to_string()),
            ("baseline", self.baseline.name().into()),
            ("kl_step", self.kl_step.to_string()),
            ("cg_iters", self.cg_iters.to_string()),
            ("cg_damping", self.cg_damping.to_string()),
            ("eta", vc.eta.to_string()),
            ("lambda", vc.lambda.to_string()),
            ("mode", vc.mode.name().into()),
            ("direction", direction_name(vc.direction).into()),
            ("gain_samples", vc.gain_samples.to_string()),
            ("refit_iterations", refit_iterations.to_string()),
            ("refit_step_size", refit_step_size.to_string()),
            ("refit_samples", refit_samples.to_string()),
            ("window_length", vc.window_length.to_string()),
            ("kl_floor", vc.kl_floor.to_string()),
            ("pool_capacity", vc.pool_capacity.to_string()),
            ("pool_min_size", vc.pool_min_size.to_string()),
            ("bnn_hidden", join(&vc.bnn_hidden)),
            ("bnn_iterations", vc.bnn_schedule.iterations.to_string()),
            ("bnn_batch_size", vc.bnn_schedule.batch_size.to_string()),
            ("bnn_samples", vc.bnn_schedule.n_samples.to_string()),
            ("bnn_lr", vc.bnn_lr.to_string()),
            ("prior_sigma", vc.prior_sigma.to_string()),
            ("bnn_init_rho", vc.init_rho.to_string()),
            ("bnn_init_log_std", vc.init_log_std.to_string()),
            ("log_visited", self.log_visited.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
        ]
    }

    pub fn to_kv(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Defaults overridden by the `key = value` lines of `text`. Blank lines
    /// and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply(text)?;
        Ok(config)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_round_trips() {
        let mut c = RunConfig::default();
        c.set("eta", "0.003").unwrap();
        c.set("seeds", "4,9").unwrap();
        c.set("horizon", "77").unwrap();
        c.set("mode", "refit").unwrap();
        c.set("direction", "reversed_kl").unwrap();
        c.set("prior_sigma", &crate::bnn::default_prior_sigma().to_string()).unwrap();
        assert_eq!(RunConfig::parse(&c.to_kv()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_kv()).unwrap(), RunConfig::default());
    }

    #[test]
    fn later_lines_override_earlier_ones() {
        let c = RunConfig::parse("eta = 1\n# note\neta = 2 # trailing\n").unwrap();
        assert_eq!(c.vime_config.eta, 2.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("eta = fast").is_err());
        assert!(RunConfig::parse("eta").is_err());
    }

    #[test]
    fn horizon_defaults_to_the_environment() {
        let mut c = RunConfig::default();
        assert_eq!(c.horizon().unwrap(), 500);
        c.set("env", "chain-20").unwrap();
        assert_eq!(c.horizon().unwrap(), 19);
    }
}
