use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Partition `0 = t_0 < … < t_n = T` shared by forward and backward passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` steps of size `horizon / n_steps`.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        let dt = horizon / n_steps as f64;
        let mut nodes: Vec<f64> = (0..n_steps).map(|i| i as f64 * dt).collect();
        nodes.push(horizon);
        Ok(Self { horizon, nodes })
    }

    /// Arbitrary partition; nodes must start at 0 and increase strictly.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("a grid needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::invalid("first grid node must be exactly 0"));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid nodes must be finite and strictly increasing"));
        }
        let horizon = *nodes.last().unwrap();
        Ok(Self { horizon, nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn time(&self, node: usize) -> f64 {
        self.nodes[node]
    }

    /// Number of steps `n`; there are `n + 1` nodes.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn last(&self) -> usize {
        self.steps()
    }

    /// `Δ_i = t_{i+1} − t_i`.
    pub fn dt(&self, step: usize) -> f64 {
        self.nodes[step + 1] - self.nodes[step]
    }

    pub fn dts(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.windows(2).map(|w| w[1] - w[0])
    }
}
