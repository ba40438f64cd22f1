use std::fs;

use vime::cli::{run_experiment, run_seed, RunConfig};
use vime::rl::Algorithm;

fn small(env: &str, algorithm: Algorithm) -> RunConfig {
    let mut c = RunConfig::default();
    c.env = env.into();
    c.algorithm = algorithm;
    c.seeds = vec![0, 1];
    c.n_epochs = 3;
    c.batch_timesteps = 200;
    c.eval_episodes = 2;
    c.vime_config.pool_min_size = 50;
    c.vime_config.bnn_schedule.iterations = 20;
    c
}

#[test]
fn eta_zero_matches_the_plain_learner_bitwise() {
    for algorithm in [Algorithm::Reinforce, Algorithm::TrpoLite] {
        for env in ["sparse-mountaincar", "chain-8"] {
            let mut with_model = small(env, algorithm);
            with_model.vime_config.eta = 0.0;
            let mut without = with_model.clone();
            without.vime = false;
            for seed in [0, 1] {
                let a = run_seed(&with_model, seed).unwrap();
                let b = run_seed(&without, seed).unwrap();
                assert_eq!(a.visited, b.visited, "{env} {algorithm:?}");
                for (x, y) in a.epochs.iter().zip(&b.epochs) {
                    assert_eq!(x.eval_returns, y.eval_returns);
                    assert_eq!(x.diagnostics.policy, y.diagnostics.policy);
                    assert_eq!(x.diagnostics.external_mean_return, y.diagnostics.external_mean_return);
                }
            }
        }
    }
}

#[test]
fn eta_zero_and_disabled_write_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = small("sparse-mountaincar", Algorithm::TrpoLite);
    a.vime_config.eta = 0.0;
    a.output_dir = dir.path().join("eta0");
    let mut b = a.clone();
    b.vime = false;
    b.output_dir = dir.path().join("disabled");
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    let read = |c: &RunConfig, f: &str| fs::read(c.output_dir.join(f)).unwrap();
    assert_eq!(read(&a, "curve.csv"), read(&b, "curve.csv"));
    for seed in [0, 1] {
        let f = format!("seed_{seed}_visited.csv");
        assert_eq!(read(&a, &f), read(&b, &f));
    }
}

#[test]
fn positive_eta_changes_the_policy_path() {
    let mut a = small("chain-8", Algorithm::TrpoLite);
    a.vime_config.eta = 1.0;
    let mut b = a.clone();
    b.vime = false;
    let x = run_seed(&a, 0).unwrap();
    let y = run_seed(&b, 0).unwrap();
    assert_ne!(x.visited, y.visited);
}
