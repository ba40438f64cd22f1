//! Dense networks, Adam, and numeric helpers shared by the rest of the crate.

mod adam;
mod finite_diff;
pub mod linalg;
mod net;

pub use adam::{AdamConfig, AdamState};
pub use finite_diff::{finite_diff_grad, finite_diff_hessian_diag};
pub use net::{backward, forward, Activation, DenseNet, ForwardCache, Gradients, LayerSpan, Topology};
