//! Time grids, reproducible Brownian noise, forward diffusions, tangent
//! processes and path functionals.

mod functional;
mod grid;
mod model;
mod noise;
mod paths;
pub mod tensor_io;

pub use functional::{
    evaluate_functional, probe_adaptedness, AbsState, ConstantFunctional, PathFunctional, RunningAverage,
    StateValue, SupPower, TanhState, ZeroFunctional,
};
pub use grid::TimeGrid;
pub use model::{
    fd_step, ConstantDiffusion, ConstantDrift, Diffusion, Drift, LinearDrift, ModelSpec, SineDrift,
    StateConstantDiffusion, StateDiffusion, TanhDiffusion, TimeDiffusion, TimeLinearDiffusion, ZeroDrift,
};
pub(crate) use model::Scratch;
pub use noise::{path_rng, BrownianBundle, NoiseKind};
pub(crate) use paths::{fill_running_sup, norm};
pub use paths::{simulate_forward, simulate_tangent, PathBundle, PathPrefix};

/// Deepest exhaustively enumerated Bernoulli tree.
pub const MAX_TREE_DEPTH: usize = 22;

/// Uniform grid on `[0, horizon]`.
pub fn make_grid(horizon: f64, n_steps: usize) -> crate::Result<TimeGrid> {
    TimeGrid::uniform(horizon, n_steps)
}

/// Seeded Gaussian increments; see [`BrownianBundle::sample`].
pub fn sample_brownian(grid: &TimeGrid, dim: usize, paths: usize, seed: u64) -> crate::Result<BrownianBundle> {
    BrownianBundle::sample(grid, dim, paths, seed)
}
