//! Minimal dense numeric kernel.
//!
//! Everything downstream (forward/inverse dynamics models, the Q-network,
//! the evidential head) is a small feed-forward MLP, so this module only
//! provides what those need: row-major matrices, MLPs with exact backprop,
//! the three training losses, Adam, a central-difference gradient checker,
//! and a bit-exact checkpoint format. All arithmetic is `f64`.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod matrix;
mod mlp;
pub mod special;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{gradcheck, gradcheck_with, relative_error, GradcheckReport};
pub use loss::{argmax, cce_loss, edl_loss, mse_loss, softmax};
pub use matrix::Matrix;
pub use mlp::{Activation, ActivationCache, Dense, Gradients, MlpModel, MlpSpec, Mode};
