use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vime::cli::{bnn_demo, export_visitation, run_experiment, sweep_eta, DemoConfig, RunConfig};
use vime::envs::occupied_cells;

#[derive(Parser)]
#[command(name = "vime", version, about = "Exploration by variational information gain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_timesteps: Option<usize>,
    /// Disable the dynamics model entirely.
    #[arg(long)]
    no_vime: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, as `key=value`; repeatable and applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            config.apply(&text)?;
        }
        let mut set = |k: &str, v: String| config.set(k, &v);
        if let Some(v) = &self.env {
            set("env", v.clone())?;
        }
        if let Some(v) = &self.algorithm {
            set("algorithm", v.clone())?;
        }
        if let Some(v) = self.eta {
            set("eta", v.to_string())?;
        }
        if let Some(v) = &self.seeds {
            set("seeds", v.clone())?;
        }
        if let Some(v) = self.epochs {
            set("n_epochs", v.to_string())?;
        }
        if let Some(v) = self.batch_timesteps {
            set("batch_timesteps", v.to_string())?;
        }
        if self.no_vime {
            set("vime", "false".into())?;
        }
        if let Some(v) = &self.out {
            set("output_dir", v.display().to_string())?;
        }
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got '{kv}'");
            };
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on every configured seed and write curves and diagnostics.
    Train(RunArgs),
    /// BNN regression with an out-of-range data injection.
    BnnDemo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 11_000)]
        iterations: usize,
        #[arg(long, default_value_t = 10_000)]
        inject_at: usize,
        /// Run the control with no injection.
        #[arg(long)]
        no_inject: bool,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        init_rho: Option<f64>,
        #[arg(long, default_value = "runs/bnn-demo")]
        out: PathBuf,
    },
    /// One training run per eta value with shared seeds.
    SweepEta {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated eta values.
        #[arg(long, default_value = "0,0.0001,0.01,1,100")]
        etas: String,
    },
    /// Histogram the states visited during a finished run.
    ExportVisitation {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        dim_x: usize,
        #[arg(long, default_value_t = 1)]
        dim_y: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let config = args.resolve()?;
            let outcome = run_experiment(&config)?;
            println!(
                "{} seeds completed, all-iteration median {:.4}, output in {}",
                outcome.runs.len(),
                outcome.all_iteration_median(),
                outcome.output_dir.display()
            );
            for (seed, err) in &outcome.failures {
                eprintln!("seed {seed} failed: {err}");
            }
            Ok(if outcome.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::BnnDemo {
            seed,
            iterations,
            inject_at,
            no_inject,
            batch_size,
            samples,
            lr,
            init_rho,
            out,
        } => {
            let defaults = DemoConfig::default();
            let config = DemoConfig {
                seed,
                iterations,
                injection_iteration: (!no_inject).then_some(inject_at),
                batch_size: batch_size.unwrap_or(defaults.batch_size),
                n_samples: samples.unwrap_or(defaults.n_samples),
                learning_rate: lr.unwrap_or(defaults.learning_rate),
                init_rho: init_rho.unwrap_or(defaults.init_rho),
                output_dir: Some(out.clone()),
                ..defaults
            };
            let outcome = bnn_demo(&config)?;
            if let Some(i) = outcome.injection_iteration.filter(|&i| i < outcome.kl_trace.len()) {
                println!("spike ratio at injection: {:.2}", outcome.spike_ratio(i, 100));
            }
            let (inside, outside) = outcome.std_inside_outside(config.train_range);
            println!("predictive std inside {inside:.4}, outside {outside:.4}; written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepEta { run, etas } => {
            let config = run.resolve()?;
            let etas: Vec<f64> = etas
                .split(',')
                .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad eta '{v}'")))
                .collect::<Result<_>>()?;
            let cells = sweep_eta(&config, &etas)?;
            let mut failed = false;
            for c in &cells {
                println!(
                    "eta {:>10}: all-iteration median {:.4}, final median {:.4}",
                    c.eta,
                    c.outcome.all_iteration_median(),
                    c.outcome.final_median()
                );
                failed |= !c.outcome.failures.is_empty();
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::ExportVisitation {
            run_dir,
            dim_x,
            dim_y,
            bins,
        } => {
            let grid = export_visitation(&run_dir, (dim_x, dim_y), bins)?;
            println!("{} occupied cells of {}", occupied_cells(&grid), bins * bins);
            Ok(ExitCode::SUCCESS)
        }
    }
}
