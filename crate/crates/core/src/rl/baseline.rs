use rand::Rng;

use super::rollout::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::linalg::cholesky_solve;
use crate::numerics::{Activation, AdamConfig, AdamState, DenseNet, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Zero,
    Linear,
    Mlp,
}

impl BaselineKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::Zero),
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::Parse(format!("unknown baseline '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Linear => "linear",
            Self::Mlp => "mlp",
        }
    }
}

fn time_feature(t: usize) -> f64 {
    t as f64 / 100.0
}

/// `[o, o^2, tau, tau^2, tau^3, 1]` with `tau = t / 100`.
fn linear_features(obs: &[f64], t: usize) -> Vec<f64> {
    let tau = time_feature(t);
    let mut f = Vec::with_capacity(2 * obs.len() + 4);
    f.extend(obs.iter().map(|o| o.clamp(-10.0, 10.0)));
    f.extend(obs.iter().map(|o| o.clamp(-10.0, 10.0).powi(2)));
    f.extend([tau, tau * tau, tau * tau * tau, 1.0]);
    f
}

/// State-value estimate used to centre returns.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    Zero,
    /// Ridge regression on hand-built state and time features.
    Linear { coefficients: Option<Vec<f64>> },
    /// One hidden ReLU layer fitted by full-batch Adam on standardized
    /// returns. Predicts exactly `target_mean` while `target_std` is 0
    /// (before the first fit, or after fitting constant returns).
    Mlp {
        net: DenseNet,
        adam: AdamState,
        iterations: usize,
        target_mean: f64,
        target_std: f64,
    },
}

impl Baseline {
    pub fn new<R: Rng + ?Sized>(kind: BaselineKind, obs_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(match kind {
            BaselineKind::Zero => Baseline::Zero,
            BaselineKind::Linear => Baseline::Linear { coefficients: None },
            BaselineKind::Mlp => {
                let topology = Topology::new(vec![obs_dim + 1, 32, 1], Activation::Relu)?;
                let net = DenseNet::random(topology, rng, 1.0);
                let adam = AdamState::new(AdamConfig::with_lr(1e-3), net.params.len());
                Baseline::Mlp {
                    net,
                    adam,
                    iterations: 50,
                    target_mean: 0.0,
                    target_std: 0.0,
                }
            }
        })
    }

    /// Predicted return-to-go for every timestep of `traj`.
    pub fn predict(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let n = traj.len();
        match self {
            Baseline::Zero | Baseline::Linear { coefficients: None } => Ok(vec![0.0; n]),
            Baseline::Linear { coefficients: Some(w) } => Ok((0..n)
                .map(|t| linear_features(&traj.observations[t], t).iter().zip(w).map(|(f, c)| f * c).sum())
                .collect()),
            Baseline::Mlp {
                net,
                target_mean,
                target_std,
                ..
            } if *target_std == 0.0 => Ok(vec![*target_mean; n]),
            Baseline::Mlp {
                net,
                target_mean,
                target_std,
                ..
            } => (0..n)
                .map(|t| {
                    let mut input = traj.observations[t].clone();
                    input.push(time_feature(t));
                    Ok(net.predict(&input)?[0] * target_std + target_mean)
                })
                .collect(),
        }
    }

    /// Refits on `returns[i][t]`, the return-to-go of `trajectories[i]` at `t`.
    pub fn fit(&mut self, trajectories: &[Trajectory], returns: &[Vec<f64>]) -> Result<()> {
        match self {
            Baseline::Zero => Ok(()),
            Baseline::Linear { coefficients } => {
                let mut rows = Vec::new();
                let mut targets = Vec::new();
                for (traj, ret) in trajectories.iter().zip(returns) {
                    for t in 0..traj.len() {
                        rows.push(linear_features(&traj.observations[t], t));
                        targets.push(ret[t]);
                    }
                }
                if rows.is_empty() {
                    return Ok(());
                }
                let d = rows[0].len();
                let mut xtx = vec![0.0; d * d];
                let mut xty = vec![0.0; d];
                for (row, y) in rows.iter().zip(&targets) {
                    for i in 0..d {
                        xty[i] += row[i] * y;
                        for j in 0..d {
                            xtx[i * d + j] += row[i] * row[j];
                        }
                    }
                }
                // Escalate the ridge until the normal equations factor.
                let mut reg = 1e-5;
                for _ in 0..5 {
                    let mut a = xtx.clone();
                    for i in 0..d {
                        a[i * d + i] += reg;
                    }
                    if let Ok(w) = cholesky_solve(&a, d, &xty) {
                        if w.iter().all(|c| c.is_finite()) {
                            *coefficients = Some(w);
                            return Ok(());
                        }
                    }
                    reg *= 10.0;
                }
                Err(Error::NonFinite("linear baseline fit"))
            }
            Baseline::Mlp {
                net,
                adam,
                iterations,
                target_mean,
                target_std,
            } => {
                let mut inputs = Vec::new();
                let mut targets = Vec::new();
                for (traj, ret) in trajectories.iter().zip(returns) {
                    for t in 0..traj.len() {
                        let mut input = traj.observations[t].clone();
                        input.push(time_feature(t));
                        inputs.push(input);
                        targets.push(ret[t]);
                    }
                }
                if inputs.is_empty() {
                    return Ok(());
                }
                let mean = crate::numerics::linalg::mean(&targets);
                let std = crate::numerics::linalg::std_dev(&targets);
                *target_mean = mean;
                *target_std = std;
                if std == 0.0 {
                    return Ok(());
                }
                let n = inputs.len() as f64;
                let mut params = net.params.clone();
                for _ in 0..*iterations {
                    let mut grad = vec![0.0; params.len()];
                    for (x, y) in inputs.iter().zip(&targets) {
                        let (out, cache) = net.forward(x)?;
                        let r = out[0] - (y - mean) / std;
                        let g = net.backward(&cache, &[2.0 * r / n])?;
                        for (acc, gi) in grad.iter_mut().zip(&g.params) {
                            *acc += gi;
                        }
                    }
                    adam.step(&mut params, &grad)?;
                    net.params.copy_from_slice(&params);
                }
                Ok(())
            }
        }
    }
}
