//! Residual-stacked selective state-space forecaster over delay-embedded patches.

mod checkpoint;
mod config;
mod forward;
mod net;
mod rollout;

pub use checkpoint::{load_model, save_model};
pub use config::ModelConfig;
pub use forward::{teacher_forward, TeacherOutputs};
pub use net::{Graph, Model, StackState, TrunkOut};
pub use rollout::{autoregressive_rollout, generate, usable_context, Generated, DEFAULT_ENVELOPE};
