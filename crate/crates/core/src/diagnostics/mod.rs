//! Estimators for the a-priori bounds: `Z`-growth ratios, exponential
//! moments of `Y*`, the stochastic exponential and its `L^p` norms, a grid
//! BMO proxy with the reverse-Hölder exponent `p*`, pairwise
//! uniqueness probes and a tangent-process check.

mod bmo;
mod girsanov;
mod moments;
mod tangent;
mod uniqueness;
mod zgrowth;

pub use bmo::{bmo_estimate, phi, pstar_from_bmo, BmoEstimate, PStar, Saturation};
pub use girsanov::{gradz_along, stochastic_exponential, GirsanovReport, GradPart, LpEstimate, DEFAULT_LP};
pub use moments::{
    class_membership, exp_moment, exp_moment_of, ladder_q, y_star, ClassEntry, ClassMembershipReport, MomentEstimate,
    DEFAULT_EPS_GRID, DEFAULT_P_GRID, STABILITY_TOL,
};
pub use tangent::{tangent_vs_bump, TangentCheck};
pub use uniqueness::{uniqueness_probe, UniquenessVerdict};
pub use zgrowth::{growth_stability, relative_change, z_growth_report, GrowthStability, ZGrowthReport};
