//! Minimal differentiable building blocks with explicit backward passes.
//!
//! Every tensor is a batch of flattened rows (`[batch, features]`); layers
//! that need spatial structure carry their own `(channels, height, width)`.
//! Parameters live in a [`ParamStore`] and are referenced by [`ParamId`], so
//! the same network structure can run in 32-bit (training) or 64-bit
//! (gradient checking) precision.

mod checkpoint;
mod gradcheck;
mod gru;
mod layers;
mod optim;
mod params;
mod scalar;
mod softmax;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport, GroupReport};
pub use gru::{Gru, GruCache};
pub use layers::{build_sequential, Activation, Layer, LayerSpec, SeqCache, Sequential, Shape};
pub use optim::{Adam, AdamConfig, SgdMomentum};
pub use params::{Gradients, Group, GroupMask, Param, ParamId, ParamStore};
pub use scalar::{check_finite, Scalar};
pub use softmax::{entropy_term, log_softmax_rows, softmax_rows};
