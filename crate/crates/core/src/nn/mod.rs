//! Small dense networks, Adam, Gaussian policy heads and the policy file format.

mod adam;
mod gaussian;
mod mlp;
mod policy_file;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gaussian::{
    clamp_log_std, diag_gaussian_entropy, diag_gaussian_log_prob, gaussian_head, softplus,
    tanh_log_derivative, GaussianPolicy, HeadMode, HeadOutput, LOG_STD_MAX, LOG_STD_MIN,
};
pub use mlp::{mlp_forward, mlp_grad, to_matrix, Activation, ForwardCache, Mlp};
pub use policy_file::{PolicyFile, PolicyKind, POLICY_FILE_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("gradient divergence")]
    GradientDivergence,
    #[error("action outside open interval")]
    ActionOutsideInterval,
    #[error("policy file: {0}")]
    PolicyFile(String),
}
