//! Dense `f64` tensors with a reverse-mode autodiff tape.
//!
//! All recurrences are evaluated sequentially; there is no parallel scan.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointManifest, TensorEntry};
pub use params::{ParamId, ParamStore, Session};
pub use tape::{Gradients, Tape, Var, GATHER_PAD};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::softplus;
