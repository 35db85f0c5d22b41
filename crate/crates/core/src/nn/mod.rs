//! Feedforward-network substrate.
//!
//! Hand-rolled on purpose: the training losses in [`crate::rorl`] need exact
//! reverse-mode gradients with respect to both parameters and inputs, and the
//! attack optimizers in [`crate::attacks`] need input gradients through the
//! policy and critics. Everything is `f64` and checked against central finite
//! differences in the test suites.

mod adam;
mod checkpoint;
mod mlp;
mod policy;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_adam, load_mlp, save_adam, save_mlp};
pub use mlp::{mlp_forward, mlp_gradients, Mlp, MlpCache, MlpGrads};
pub(crate) use mlp::{concat_sa, rows_to_batch};
pub use policy::{
    jeffrey_divergence, jeffrey_divergence_grad, jeffrey_divergence_params, GaussianTanhPolicy,
    PolicyHeads,
};

use thiserror::Error;

/// Errors from network construction, evaluation, optimization, and persistence.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite gradient encountered in {context}")]
    NonFiniteGrad { context: String },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint format: {0}")]
    BadFormat(String),
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
