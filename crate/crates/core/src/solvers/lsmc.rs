use serde::{Deserialize, Serialize};

use super::backward::{backward_regression, PicardOptions};
use super::regression::Basis;
use super::solution::{BsdeSolution, SolverMethod};
use crate::engine::{evaluate_functional, BrownianBundle, PathBundle};
use crate::generators::{GeneratorSpec, Truncation};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsmcOptions {
    /// Level `N` of the `z`-truncation `ρ_N`.
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    #[serde(default)]
    pub picard: PicardOptions,
}

fn default_truncation() -> f64 {
    16.0
}

impl Default for LsmcOptions {
    fn default() -> Self {
        Self {
            truncation: default_truncation(),
            picard: PicardOptions::default(),
        }
    }
}

impl LsmcOptions {
    pub fn with_truncation(level: f64) -> Self {
        Self {
            truncation: level,
            ..Self::default()
        }
    }
}

/// Terminal values `ξ + h` at the last node, with adaptedness probes.
pub(crate) fn terminal_values(spec: &GeneratorSpec, paths: &PathBundle) -> Result<Vec<f64>> {
    let n = paths.nodes() - 1;
    let xi = evaluate_functional(spec.xi.as_ref(), paths, n)?;
    let h = evaluate_functional(spec.h.as_ref(), paths, n)?;
    Ok(xi.into_iter().zip(h).map(|(a, b)| a + b).collect())
}

/// Regression Monte-Carlo solution of the BSDE with driver `F(t, X, y, ρ_N(z))`.
pub fn solve_lsmc(
    spec: &GeneratorSpec,
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
    opts: &LsmcOptions,
) -> Result<BsdeSolution> {
    let truncation = Truncation::new(opts.truncation)?;
    let terminal = terminal_values(spec, paths)?;
    let grid = paths.grid();
    let out = backward_regression(paths, noise, basis, &terminal, Some(&truncation), opts.picard, |p, i, y, z| {
        spec.driver(grid.time(i), &paths.prefix(p, i), y, z)
    })?;
    let mut sol = BsdeSolution::from_parts(
        paths,
        out.y,
        out.z,
        out.y_se,
        SolverMethod::Lsmc,
        Some(opts.truncation),
        Some(out.picard),
    )?;
    sol.rank_deficient = out.rank_deficient;
    Ok(sol)
}
