use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{PathBundle, TimeGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    TreeExact,
    Lsmc,
    ColeHopfQuadrature,
    ColeHopfNested,
    LinearQuadrature,
    LinearRegression,
    DecomposedAdditive,
    DecomposedMalliavin,
}

/// Fixed-point statistics of the per-node Picard loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PicardStats {
    pub max_iterations: usize,
    /// Largest final residual over nodes.
    pub terminal_residual: f64,
    /// Residual sequence `max_p |y^{k+1} − y^k|` at each node.
    pub histories: Vec<Vec<f64>>,
}

impl PicardStats {
    pub(crate) fn merge(&self, other: &PicardStats) -> PicardStats {
        PicardStats {
            max_iterations: self.max_iterations.max(other.max_iterations),
            terminal_residual: self.terminal_residual.max(other.terminal_residual),
            histories: self
                .histories
                .iter()
                .zip(&other.histories)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect(),
        }
    }
}

/// Per-path, per-node `(Y, Z)` with provenance.
///
/// `Y` is laid out `(path, node)`, `Z` as `(path, node, component)`. `Z` at
/// the last node repeats the value at node `n − 1`; diagnostics read
/// `Z` on nodes `0..n` only.
#[derive(Debug, Clone, PartialEq)]
pub struct BsdeSolution {
    pub(crate) grid: TimeGrid,
    pub(crate) paths: usize,
    pub(crate) dim: usize,
    pub(crate) y: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) y_se: Vec<f64>,
    pub(crate) method: SolverMethod,
    pub(crate) truncation: Option<f64>,
    pub(crate) picard: Option<PicardStats>,
    pub(crate) rank_deficient: Vec<usize>,
    pub(crate) bundle: u64,
    pub(crate) notes: BTreeMap<String, f64>,
}

impl BsdeSolution {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        paths: &PathBundle,
        y: Vec<f64>,
        z: Vec<f64>,
        y_se: Vec<f64>,
        method: SolverMethod,
        truncation: Option<f64>,
        picard: Option<PicardStats>,
    ) -> Result<Self> {
        let n = paths.nodes();
        if y.len() != paths.paths() * n || z.len() != y.len() * paths.dim() || y_se.len() != n {
            return Err(Error::invalid("solution tensors do not match the path bundle"));
        }
        if let Some(p) = y.iter().chain(&z).position(|v| !v.is_finite()) {
            let path = (p % y.len()) / n;
            return Err(Error::DriverEvaluation(format!("non-finite solution value on path {path}")));
        }
        Ok(Self {
            grid: paths.grid().clone(),
            paths: paths.paths(),
            dim: paths.dim(),
            y,
            z,
            y_se,
            method,
            truncation,
            picard,
            rank_deficient: Vec::new(),
            bundle: paths.fingerprint(),
            notes: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.grid.steps() + 1
    }

    pub fn method(&self) -> SolverMethod {
        self.method
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn picard(&self) -> Option<&PicardStats> {
        self.picard.as_ref()
    }

    pub fn rank_deficient_nodes(&self) -> &[usize] {
        &self.rank_deficient
    }

    pub fn bundle_fingerprint(&self) -> u64 {
        self.bundle
    }

    pub fn notes(&self) -> &BTreeMap<String, f64> {
        &self.notes
    }

    pub fn note(&self, key: &str) -> Option<f64> {
        self.notes.get(key).copied()
    }

    pub fn y_tensor(&self) -> &[f64] {
        &self.y
    }

    pub fn z_tensor(&self) -> &[f64] {
        &self.z
    }

    pub fn y(&self, path: usize, node: usize) -> f64 {
        self.y[path * self.nodes() + node]
    }

    pub fn z(&self, path: usize, node: usize) -> &[f64] {
        let start = (path * self.nodes() + node) * self.dim;
        &self.z[start..start + self.dim]
    }

    pub fn y_path(&self, path: usize) -> &[f64] {
        let n = self.nodes();
        &self.y[path * n..(path + 1) * n]
    }

    /// Cross-path mean of `Y_{t_node}`.
    pub fn y_mean(&self, node: usize) -> f64 {
        (0..self.paths).map(|p| self.y(p, node)).sum::<f64>() / self.paths as f64
    }

    pub fn y0(&self) -> f64 {
        self.y_mean(0)
    }

    /// Monte-Carlo standard error attached to `Y` at each node.
    pub fn y_se(&self) -> &[f64] {
        &self.y_se
    }

    /// Largest per-node standard error.
    pub fn se(&self) -> f64 {
        self.y_se.iter().copied().fold(0.0, f64::max)
    }

    pub fn same_bundle(&self, paths: &PathBundle) -> bool {
        self.bundle == paths.fingerprint() && self.paths == paths.paths() && &self.grid == paths.grid()
    }

    pub(crate) fn with_note(mut self, key: &str, value: f64) -> Self {
        self.notes.insert(key.to_string(), value);
        self
    }
}
