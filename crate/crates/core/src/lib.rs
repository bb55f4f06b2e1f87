//! Long-horizon forecasting of chaotic dynamical systems.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dynamics`]: ODE systems, RK4 integration, Lyapunov exponents, dataset windows.
//! - [`embedding`]: delay-embedding parameter selection, delay embedding and patching.
//! - [`numcore`]: a small reverse-mode autodiff tape over dense `f64` tensors.
//! - [`model`]: the residual-stacked selective state-space forecaster.
//! - [`training`]: teacher-forcing and student-forcing optimisation with MMD regularisation.
//! - [`metrics`]: point-wise and attractor-statistics evaluation.
//! - [`pipeline`]: reproducible end-to-end runs backing the command-line front-end.

pub mod config;
pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
