//! The exploration engine: replay pool, information-gain rewards and the
//! per-epoch loop that couples dynamics training to policy updates.

mod engine;
mod normalizer;
mod pool;

pub use engine::{
    direction_name, epoch_update, parse_direction, score_trajectory, shape_rewards, EpochDiagnostics, IntrinsicMode,
    Vime, VimeConfig,
};
pub use normalizer::KlNormalizer;
pub use pool::ReplayPool;
