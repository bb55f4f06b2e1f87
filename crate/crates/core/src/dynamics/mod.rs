//! Chaotic ODE systems, RK4 integration, Lyapunov exponents and dataset splits.

mod dataset;
mod integrate;
mod system;
mod trajectory;

pub use dataset::{
    build_dataset, random_initial_condition, simulate_test_cases, sliding_test_cases, DatasetSplit, SimulatedTests,
    SplitConfig, TestCase, TestSource,
};
pub use integrate::{
    advance, estimate_mle, integrate, integrate_sampled, lyapunov_stride, resample_to_lyapunov_grid, rk4_step,
    TangentState, MLE_DELTA0,
};
pub use system::{OdeSystem, SystemKind, VectorField};
pub use trajectory::{Standardizer, Trajectory};
