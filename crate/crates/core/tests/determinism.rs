use std::fs;
use std::path::Path;

use vime::cli::{read_curve, run_experiment, RunConfig};
use vime::numerics::linalg::{median, quantile};

fn config(dir: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.env = "chain-6".into();
    c.seeds = vec![3, 5, 8];
    c.n_epochs = 4;
    c.batch_timesteps = 100;
    c.eval_episodes = 3;
    c.vime_config.eta = 0.5;
    c.vime_config.pool_min_size = 30;
    c.vime_config.bnn_schedule.iterations = 20;
    c.output_dir = dir.to_path_buf();
    c
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "config.txt" && e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn identical_configs_emit_identical_bytes() {
    let root = tempfile::tempdir().unwrap();
    let a = config(&root.path().join("a"));
    let b = config(&root.path().join("b"));
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    let fa = files(&a.output_dir);
    let fb = files(&b.output_dir);
    assert!(fa.len() >= 8);
    assert_eq!(fa, fb);
}

#[test]
fn curve_statistics_are_recomputable_from_per_seed_files() {
    let root = tempfile::tempdir().unwrap();
    let c = config(root.path());
    run_experiment(&c).unwrap();
    let (header, rows) = read_curve(&root.path().join("curve.csv")).unwrap();
    assert_eq!(header.first().map(String::as_str), Some("iteration"));
    assert_eq!(&header[header.len() - 3..], ["median", "q25", "q75"]);
    for (i, row) in rows.iter().enumerate() {
        let mut per_seed = Vec::new();
        for &seed in &c.seeds {
            let diag = fs::read_to_string(root.path().join(format!("seed_{seed}_diagnostics.csv"))).unwrap();
            let mut lines = diag.lines();
            let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
            let k = cols.iter().position(|c| *c == "eval_mean_return").unwrap();
            let line = lines.nth(i).unwrap();
            per_seed.push(line.split(',').nth(k).unwrap().parse::<f64>().unwrap());
        }
        let n = per_seed.len();
        assert_eq!(&row[1..=n], &per_seed[..]);
        assert_eq!(row[n + 1], median(&per_seed));
        assert_eq!(row[n + 2], quantile(&per_seed, 0.25));
        assert_eq!(row[n + 3], quantile(&per_seed, 0.75));
    }
}
