use std::fmt;

use super::paths::{fill_running_sup, PathBundle, PathPrefix};
use crate::{Error, Result};

/// Functional of a grid-sampled path, evaluated on the path stopped at a
/// node: `h((X_{u∧t_i})_u)`.
pub trait PathFunctional: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn value(&self, path: &PathPrefix<'_>) -> f64;

    /// Reads nothing after `path.node()`.
    fn adapted(&self) -> bool {
        true
    }

    /// Value as a function of the current state alone, when the functional
    /// is Markovian; closed-form oracles use it.
    fn of_state(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Declared Lipschitz constant with respect to the sup distance between
    /// paths, and growth exponent `r` of the local Lipschitz bound
    /// `K(1 + |x|^r + |x̃|^r)`; `r = None` means globally Lipschitz.
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        None
    }

    /// Upper bound on `|value|` when the functional is bounded.
    fn bound(&self) -> Option<f64> {
        None
    }
}

/// Values of `func` at `node` for every path.
///
/// Adapted functionals are probed on the first path: every state after the
/// node is perturbed and the value must not move.
pub fn evaluate_functional(func: &dyn PathFunctional, paths: &PathBundle, node: usize) -> Result<Vec<f64>> {
    if node >= paths.nodes() {
        return Err(Error::invalid(format!(
            "node {node} outside grid with {} nodes",
            paths.nodes()
        )));
    }
    if func.adapted() {
        probe_adaptedness(func, paths, node)?;
    }
    Ok((0..paths.paths())
        .map(|p| func.value(&paths.prefix(p, node)))
        .collect())
}

/// Perturbs `X_{t_j}`, `j > node`, of path 0 and checks the value is unchanged.
pub fn probe_adaptedness(func: &dyn PathFunctional, paths: &PathBundle, node: usize) -> Result<()> {
    let d = paths.dim();
    if node + 1 >= paths.nodes() {
        return Ok(());
    }
    let base = func.value(&paths.prefix(0, node));
    let mut states = paths.path_states(0).to_vec();
    for (k, v) in states[(node + 1) * d..].iter_mut().enumerate() {
        *v += 1.0 + 0.37 * k as f64;
    }
    let mut sup = vec![0.0; paths.nodes()];
    fill_running_sup(&states, d, &mut sup);
    let bumped = func.value(&PathPrefix::new(&states, &sup, paths.grid().nodes(), d, node));
    let same = base == bumped || (base.is_nan() && bumped.is_nan());
    if !same {
        return Err(Error::AdaptednessViolation(func.name().to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFunctional;

impl PathFunctional for ZeroFunctional {
    fn name(&self) -> &str {
        "zero"
    }
    fn value(&self, _path: &PathPrefix<'_>) -> f64 {
        0.0
    }
    fn of_state(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        Some((0.0, None))
    }
    fn bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantFunctional {
    pub c: f64,
}

impl PathFunctional for ConstantFunctional {
    fn name(&self) -> &str {
        "constant"
    }
    fn value(&self, _path: &PathPrefix<'_>) -> f64 {
        self.c
    }
    fn of_state(&self, _x: &[f64]) -> Option<f64> {
        Some(self.c)
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        Some((0.0, None))
    }
    fn bound(&self) -> Option<f64> {
        Some(self.c.abs())
    }
}

/// `scale · x^{coord}` at the evaluation node.
#[derive(Debug, Clone, Copy)]
pub struct StateValue {
    pub coord: usize,
    pub scale: f64,
}

impl PathFunctional for StateValue {
    fn name(&self) -> &str {
        "state"
    }
    fn value(&self, path: &PathPrefix<'_>) -> f64 {
        self.scale * path.current()[self.coord]
    }
    fn of_state(&self, x: &[f64]) -> Option<f64> {
        Some(self.scale * x[self.coord])
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        Some((self.scale.abs(), None))
    }
}

/// `scale · |x^{coord}|` at the evaluation node.
#[derive(Debug, Clone, Copy)]
pub struct AbsState {
    pub coord: usize,
    pub scale: f64,
}

impl PathFunctional for AbsState {
    fn name(&self) -> &str {
        "abs_state"
    }
    fn value(&self, path: &PathPrefix<'_>) -> f64 {
        self.scale * path.current()[self.coord].abs()
    }
    fn of_state(&self, x: &[f64]) -> Option<f64> {
        Some(self.scale * x[self.coord].abs())
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        Some((self.scale.abs(), None))
    }
}

/// `scale · tanh(x^{coord})` at the evaluation node.
#[derive(Debug, Clone, Copy)]
pub struct TanhState {
    pub coord: usize,
    pub scale: f64,
}

impl PathFunctional for TanhState {
    fn name(&self) -> &str {
        "tanh_state"
    }
    fn value(&self, path: &PathPrefix<'_>) -> f64 {
        self.scale * path.current()[self.coord].tanh()
    }
    fn of_state(&self, x: &[f64]) -> Option<f64> {
        Some(self.scale * x[self.coord].tanh())
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        Some((self.scale.abs(), None))
    }
    fn bound(&self) -> Option<f64> {
        Some(self.scale.abs())
    }
}

/// `scale · (sup_{j ≤ i} |X_{t_j}|)^p / p`, the discrete running maximum.
///
/// For `p ≥ 1` it is locally Lipschitz in the sup distance with constant
/// `scale` and growth `r = p − 1`.
#[derive(Debug, Clone, Copy)]
pub struct SupPower {
    pub power: f64,
    pub scale: f64,
}

impl PathFunctional for SupPower {
    fn name(&self) -> &str {
        "sup_power"
    }
    fn value(&self, path: &PathPrefix<'_>) -> f64 {
        self.scale * path.sup().powf(self.power) / self.power
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        let r = self.power - 1.0;
        Some((self.scale.abs(), (r > 0.0).then_some(r)))
    }
}

/// Time average `Σ_{j<i} x^{coord}_{t_j} Δ_j / T` of one coordinate.
#[derive(Debug, Clone, Copy)]
pub struct RunningAverage {
    pub coord: usize,
}

impl PathFunctional for RunningAverage {
    fn name(&self) -> &str {
        "running_average"
    }
    fn value(&self, path: &PathPrefix<'_>) -> f64 {
        let node = path.node();
        let mut acc = 0.0;
        let mut t_prev = 0.0;
        for j in 1..=node {
            let t = path.at(j).time();
            acc += path.state(j - 1)[self.coord] * (t - t_prev);
            t_prev = t;
        }
        let horizon = path.at(node).time();
        if horizon > 0.0 {
            acc / horizon
        } else {
            path.state(0)[self.coord]
        }
    }
    fn lipschitz(&self) -> Option<(f64, Option<f64>)> {
        Some((1.0, None))
    }
}
