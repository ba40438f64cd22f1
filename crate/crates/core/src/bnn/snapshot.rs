//! Versioned text snapshots of a dynamics model. Every float is written as
//! the hex of its IEEE-754 bits, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::posterior::{BnnPrior, VariationalPosterior};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Topology};

pub const SNAPSHOT_MAGIC: &str = "vime-bnn-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Posterior plus the prior it is regularized toward.
#[derive(Debug, Clone, PartialEq)]
pub struct Bnn {
    pub posterior: VariationalPosterior,
    pub prior: BnnPrior,
}

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {:016x}", v.to_bits());
    }
    out.push('\n');
}

fn parse_floats(tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            u64::from_str_radix(t, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Parse(format!("bad float bits `{t}`: {e}")))
        })
        .collect()
}

impl Bnn {
    pub fn to_record(&self) -> String {
        let q = &self.posterior;
        let mut out = format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}\n");
        out.push_str("sizes");
        for s in q.topology.sizes() {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
        let _ = writeln!(out, "hidden {}", q.topology.hidden().name());
        let _ = writeln!(out, "prior_seed {}", self.prior.seed);
        push_floats(&mut out, "prior_sigma", &[self.prior.sigma]);
        push_floats(&mut out, "mu", &q.mu);
        push_floats(&mut out, "rho", &q.rho);
        push_floats(&mut out, "log_std", &q.likelihood_log_std);
        out
    }

    pub fn from_record(record: &str) -> Result<Self> {
        let mut lines = record.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(SNAPSHOT_MAGIC) {
            return Err(Error::Parse("not a bnn snapshot".into()));
        }
        let version: u32 = head
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse("missing snapshot version".into()))?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!("unsupported snapshot version {version}")));
        }
        let mut sizes = None;
        let mut hidden = None;
        let mut seed = None;
        let mut sigma = None;
        let (mut mu, mut rho, mut log_std) = (None, None, None);
        for line in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let Some((key, rest)) = tokens.split_first() else {
                continue;
            };
            match *key {
                "sizes" => {
                    sizes = Some(
                        rest.iter()
                            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "hidden" => hidden = Some(Activation::parse(rest.first().copied().unwrap_or(""))?),
                "prior_seed" => {
                    seed = Some(
                        rest.first()
                            .and_then(|t| t.parse::<u64>().ok())
                            .ok_or_else(|| Error::Parse("bad prior seed".into()))?,
                    )
                }
                "prior_sigma" => sigma = parse_floats(rest)?.first().copied(),
                "mu" => mu = Some(parse_floats(rest)?),
                "rho" => rho = Some(parse_floats(rest)?),
                "log_std" => log_std = Some(parse_floats(rest)?),
                other => return Err(Error::Parse(format!("unknown snapshot field `{other}`"))),
            }
        }
        let missing = |f: &str| Error::Parse(format!("snapshot is missing `{f}`"));
        let topology = Topology::new(sizes.ok_or_else(|| missing("sizes"))?, hidden.ok_or_else(|| missing("hidden"))?)?;
        let posterior = VariationalPosterior::new(
            topology,
            mu.ok_or_else(|| missing("mu"))?,
            rho.ok_or_else(|| missing("rho"))?,
            log_std.ok_or_else(|| missing("log_std"))?,
        )?;
        let prior = BnnPrior::from_seed(
            posterior.n_params(),
            sigma.ok_or_else(|| missing("prior_sigma"))?,
            seed.ok_or_else(|| missing("prior_seed"))?,
        )?;
        Ok(Self { posterior, prior })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_record())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_record(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::default_prior_sigma;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn record_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let topo = Topology::new(vec![3, 7, 2], Activation::Relu).unwrap();
        let mut posterior = VariationalPosterior::initialize(topo, &mut rng, -3.0, -0.25);
        posterior.mu[0] = -0.0;
        posterior.rho[1] = f64::MIN_POSITIVE;
        let prior = BnnPrior::from_seed(posterior.n_params(), default_prior_sigma(), 77).unwrap();
        let bnn = Bnn { posterior, prior };
        let back = Bnn::from_record(&bnn.to_record()).unwrap();
        assert_eq!(back.to_record(), bnn.to_record());
        assert!(back.posterior.mu.iter().zip(&bnn.posterior.mu).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back, bnn);
    }

    #[test]
    fn rejects_other_versions() {
        assert!(Bnn::from_record("vime-bnn-snapshot 99\n").is_err());
        assert!(Bnn::from_record("something else\n").is_err());
    }
}
