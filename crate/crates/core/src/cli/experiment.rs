use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::RunConfig;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::numerics::linalg::{mean, median, quantile};
use crate::rl::{collect_batch, evaluate, GaussianPolicy, Learner};
use crate::vime::{epoch_update, EpochDiagnostics, Vime};

pub const CURVE_SCHEMA: &str = "curve-v1";

/// Independent random streams of one seed. Each consumer owns a stream, so
/// adding or removing one (e.g. the dynamics model) never shifts another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Stream {
    PolicyInit = 1,
    LearnerInit = 2,
    Rollout = 3,
    Evaluation = 4,
    ModelInit = 5,
    Model = 6,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Per-epoch record of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub diagnostics: EpochDiagnostics,
    pub eval_returns: Vec<f64>,
}

impl EpochRecord {
    /// Mean external return of the evaluation episodes.
    pub fn eval_mean(&self) -> f64 {
        mean(&self.eval_returns)
    }

    pub fn eval_median(&self) -> f64 {
        median(&self.eval_returns)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Raw states of every training rollout, in collection order.
    pub visited: Vec<Vec<f64>>,
}

impl SeedRun {
    /// First epoch whose evaluation median exceeds zero.
    pub fn first_success(&self) -> Option<usize> {
        self.epochs.iter().position(|e| e.eval_median() > 0.0)
    }

    /// First epoch in which any training episode reached a terminal state.
    pub fn first_terminal(&self) -> Option<usize> {
        self.epochs.iter().position(|e| e.diagnostics.terminated_episodes > 0)
    }
}

/// The exploration loop for one seed.
pub fn run_seed(config: &RunConfig, seed: u64) -> Result<SeedRun> {
    config.validate()?;
    let env = Env::from_name(&config.env)?;
    let spec = env.spec();
    let horizon = config.horizon()?;
    let mut policy = GaussianPolicy::new(
        spec.obs_dim,
        spec.action_dim,
        &config.policy_hidden,
        config.policy_init_log_std,
        &mut stream(seed, Stream::PolicyInit),
    )?;
    let mut learner = Learner::new(config.learner_config(), &policy, &mut stream(seed, Stream::LearnerInit))?;
    let mut vime = if config.vime {
        Some(Vime::new(
            config.vime_config.clone(),
            spec.obs_dim,
            spec.action_dim,
            &mut stream(seed, Stream::ModelInit),
        )?)
    } else {
        None
    };
    let mut rollout_rng = stream(seed, Stream::Rollout);
    let mut eval_rng = stream(seed, Stream::Evaluation);
    let mut model_rng = stream(seed, Stream::Model);

    let mut run = SeedRun {
        seed,
        epochs: Vec::with_capacity(config.n_epochs),
        visited: Vec::new(),
    };
    for epoch in 0..config.n_epochs {
        let mut trajectories = collect_batch(&policy, &env, config.batch_timesteps, horizon, &mut rollout_rng)?;
        if config.log_visited {
            for t in &trajectories {
                run.visited.extend(t.states.iter().cloned());
            }
        }
        let diagnostics =
            epoch_update(epoch, vime.as_mut(), &mut policy, &mut learner, &mut trajectories, &mut model_rng)?;
        let eval = evaluate(&policy, &env, config.eval_episodes, horizon, &mut eval_rng)?;
        log::debug!(
            "seed {seed} epoch {epoch}: return {:.3} eval {:.3} kl_median {:.3e} pool {}",
            diagnostics.external_mean_return,
            eval.mean_return,
            diagnostics.raw_kl_median,
            diagnostics.pool_size
        );
        run.epochs.push(EpochRecord {
            diagnostics,
            eval_returns: eval.episode_returns,
        });
    }
    Ok(run)
}

/// Cross-seed statistics of the evaluation return at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub per_seed: Vec<f64>,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn aggregate(runs: &[SeedRun]) -> Vec<CurvePoint> {
    let n_iter = runs.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
    (0..n_iter)
        .map(|i| {
            let per_seed: Vec<f64> = runs.iter().map(|r| r.epochs[i].eval_mean()).collect();
            CurvePoint {
                iteration: i,
                median: median(&per_seed),
                q25: quantile(&per_seed, 0.25),
                q75: quantile(&per_seed, 0.75),
                per_seed,
            }
        })
        .collect()
}

/// Average over iterations of the median curve.
pub fn all_iteration_median(curve: &[CurvePoint]) -> f64 {
    mean(&curve.iter().map(|p| p.median).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub runs: Vec<SeedRun>,
    pub failures: Vec<(u64, String)>,
    pub curve: Vec<CurvePoint>,
    pub output_dir: PathBuf,
}

impl ExperimentOutcome {
    pub fn all_iteration_median(&self) -> f64 {
        all_iteration_median(&self.curve)
    }

    pub fn final_median(&self) -> f64 {
        self.curve.last().map_or(0.0, |p| p.median)
    }
}

fn curve_csv(seeds: &[u64], curve: &[CurvePoint]) -> String {
    let mut out = String::from("iteration");
    for s in seeds {
        let _ = write!(out, ",seed_{s}");
    }
    out.push_str(",median,q25,q75\n");
    for p in curve {
        let _ = write!(out, "{}", p.iteration);
        for v in &p.per_seed {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{},{}", p.median, p.q25, p.q75);
    }
    out
}

const DIAGNOSTICS_HEADER: &str = "epoch,episodes,timesteps,external_mean_return,external_median_return,\
terminated_episodes,eval_mean_return,eval_median_return,raw_kl_median,raw_kl_mean,raw_kl_max,divisor,\
pool_size,bnn_updated,policy_accepted,policy_kl,policy_backtracks\n";

fn diagnostics_csv(run: &SeedRun) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    for e in &run.epochs {
        let d = &e.diagnostics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.epoch,
            d.episodes,
            d.timesteps,
            d.external_mean_return,
            d.external_median_return,
            d.terminated_episodes,
            e.eval_mean(),
            e.eval_median(),
            d.raw_kl_median,
            d.raw_kl_mean,
            d.raw_kl_max,
            d.divisor,
            d.pool_size,
            d.bnn_updated,
            d.policy.accepted,
            d.policy.kl,
            d.policy.backtracks
        );
    }
    out
}

fn visited_csv(run: &SeedRun) -> String {
    let mut out = String::new();
    for s in &run.visited {
        let row: Vec<String> = s.iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn manifest_json(config: &RunConfig, outcome_seeds: &[u64], failures: &[(u64, String)], summary: f64) -> String {
    let mut cfg = serde_json::Map::new();
    for (k, v) in config.entries() {
        cfg.insert(k.to_string(), serde_json::Value::String(v));
    }
    let failures: Vec<serde_json::Value> = failures
        .iter()
        .map(|(s, e)| serde_json::json!({ "seed": s, "error": e }))
        .collect();
    let manifest = serde_json::json!({
        "schema": CURVE_SCHEMA,
        "package_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "completed_seeds": outcome_seeds,
        "failed_seeds": failures,
        "all_iteration_median": summary,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    text
}

pub fn visited_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}_visited.csv"))
}

/// Runs every seed (concurrently) and writes, under `config.output_dir`:
/// `config.txt`, `manifest.json`, `curve.csv`, `summary.txt`, and per seed
/// `seed_<s>_diagnostics.csv` plus `seed_<s>_visited.csv`.
///
/// Failed seeds are reported in the manifest and left out of the curve.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let results: Vec<(u64, Result<SeedRun>)> =
        config.seeds.par_iter().map(|&seed| (seed, run_seed(config, seed))).collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    let curve = aggregate(&runs);
    let completed: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let summary = all_iteration_median(&curve);

    fs::write(dir.join("config.txt"), config.to_kv())?;
    fs::write(dir.join("manifest.json"), manifest_json(config, &completed, &failures, summary))?;
    fs::write(dir.join("curve.csv"), curve_csv(&completed, &curve))?;
    for run in &runs {
        fs::write(dir.join(format!("seed_{}_diagnostics.csv", run.seed)), diagnostics_csv(run))?;
        if config.log_visited {
            fs::write(visited_path(&dir, run.seed), visited_csv(run))?;
        }
    }
    let mut text = format!("all_iteration_median = {summary}\n");
    let _ = writeln!(text, "final_median = {}", curve.last().map_or(0.0, |p| p.median));
    for run in &runs {
        let _ = writeln!(
            text,
            "seed_{} first_success = {} first_terminal = {}",
            run.seed,
            run.first_success().map_or("none".into(), |e| e.to_string()),
            run.first_terminal().map_or("none".into(), |e| e.to_string())
        );
    }
    fs::write(dir.join("summary.txt"), text)?;

    Ok(ExperimentOutcome {
        runs,
        failures,
        curve,
        output_dir: dir,
    })
}

/// Reads back a `curve.csv`: seed labels and rows of numbers.
pub fn read_curve(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty curve file".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad curve value '{v}'"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub eta: f64,
    pub outcome: ExperimentOutcome,
}

/// One experiment per `eta`, all with the base config's seeds, written to
/// `<output_dir>/eta_<i>`; `sweep.csv` compares them.
pub fn sweep_eta(base: &RunConfig, etas: &[f64]) -> Result<Vec<SweepCell>> {
    if etas.is_empty() {
        return Err(Error::InvalidArgument("eta list is empty".into()));
    }
    fs::create_dir_all(&base.output_dir)?;
    let cells = etas
        .iter()
        .enumerate()
        .map(|(i, &eta)| {
            let mut config = base.clone();
            config.vime_config.eta = eta;
            config.output_dir = base.output_dir.join(format!("eta_{i}"));
            run_experiment(&config).map(|outcome| SweepCell { eta, outcome })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = String::from("eta,all_iteration_median,final_median,completed_seeds\n");
    for c in &cells {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            c.eta,
            c.outcome.all_iteration_median(),
            c.outcome.final_median(),
            c.outcome.runs.len()
        );
    }
    fs::write(base.output_dir.join("sweep.csv"), table)?;
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> RunConfig {
        let mut c = RunConfig::default();
        c.env = "chain-6".into();
        c.seeds = vec![0, 1];
        c.n_epochs = 3;
        c.batch_timesteps = 60;
        c.eval_episodes = 2;
        c.vime_config.pool_min_size = 20;
        c.vime_config.bnn_hidden = vec![8];
        c.vime_config.bnn_schedule.iterations = 10;
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn zero_epochs_write_header_only_curves() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(dir.path());
        c.n_epochs = 0;
        run_experiment(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        assert_eq!(text, "iteration,seed_0,seed_1,median,q25,q75\n");
    }

    #[test]
    fn quartiles_bracket_the_median() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(dir.path());
        c.seeds = vec![0, 1, 2];
        let out = run_experiment(&c).unwrap();
        for p in &out.curve {
            assert!(p.q25 <= p.median && p.median <= p.q75);
        }
    }

    #[test]
    fn config_file_reproduces_the_run_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = tiny(dir.path());
        run_experiment(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("config.txt")).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }
}
