//! Backward solvers producing per-path `(Y, Z)`: an exact binary-tree
//! recursion, regression Monte Carlo with `z`-truncation and Picard
//! iteration, closed forms for the `γ|z|²` and `a·y` drivers, and the two
//! two-stage decompositions.

mod backward;
mod cole_hopf;
mod decomposed;
mod linear;
mod lsmc;
mod quadrature;
mod regression;
mod solution;
mod tree;

pub use backward::PicardOptions;
pub use cole_hopf::{solve_cole_hopf, ColeHopfOptions};
pub use decomposed::{
    additive_stage2_under_q, solve_additive_stages, solve_decomposed_additive, solve_decomposed_malliavin,
    AdditiveStages,
};
pub use linear::solve_linear;
pub use lsmc::{solve_lsmc, LsmcOptions};
pub use quadrature::GaussHermite;
pub use regression::{Basis, Design, PolynomialBasis, PrefixIndicatorBasis, Projector};
pub use solution::{BsdeSolution, PicardStats, SolverMethod};
pub use tree::{solve_tree, TreeSolution};
