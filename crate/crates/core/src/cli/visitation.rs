use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::experiment::visited_path;
use crate::envs::{visitation_grid, Env};
use crate::error::{Error, Result};

/// Loads the visited-state logs of every seed in a run directory.
pub fn load_visited(run_dir: &Path) -> Result<(RunConfig, Vec<Vec<f64>>)> {
    let config_path = run_dir.join("config.txt");
    let config = RunConfig::parse(&fs::read_to_string(&config_path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read {}: {e}", config_path.display()))
    })?)?;
    let mut states = Vec::new();
    for &seed in &config.seeds {
        let path = visited_path(run_dir, seed);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::InvalidArgument(format!("missing state log {}: {e}", path.display())))?;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let row = line
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad state value '{v}'"))))
                .collect::<Result<Vec<_>>>()?;
            states.push(row);
        }
    }
    Ok((config, states))
}

/// Histograms the logged states of a run over two state coordinates within
/// the environment's nominal bounds and writes `visitation.csv`.
pub fn export_visitation(run_dir: &Path, dims: (usize, usize), bins: usize) -> Result<Vec<Vec<u64>>> {
    let (config, states) = load_visited(run_dir)?;
    let spec = Env::from_name(&config.env)?.spec();
    if dims.0 >= spec.state_dim || dims.1 >= spec.state_dim {
        return Err(Error::InvalidArgument(format!("state dims {dims:?} out of range for {}", spec.name)));
    }
    let bounds = (spec.state_bounds[dims.0], spec.state_bounds[dims.1]);
    let grid = visitation_grid(&states, dims, bins, bounds);
    let mut out = String::new();
    for row in &grid {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    fs::write(run_dir.join("visitation.csv"), out)?;
    Ok(grid)
}
