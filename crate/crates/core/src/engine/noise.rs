use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::{par, Error, Result};

/// Distribution of the driving increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `ΔW ~ N(0, Δ)` per component.
    Gaussian,
    /// `ΔW = ±√Δ` with probability ½; every sign pattern enumerated once.
    BernoulliTree,
}

/// Brownian increments indexed `(path, step, component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBundle {
    dim: usize,
    paths: usize,
    steps: usize,
    seed: u64,
    kind: NoiseKind,
    increments: Vec<f64>,
}

/// Per-path stream: the master seed keys the generator, the path index selects
/// the ChaCha stream, so path `p` never depends on how paths are scheduled.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

impl BrownianBundle {
    /// Seeded Gaussian increments with variance `Δ_i` per component.
    pub fn sample(grid: &TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<Self> {
        if dim == 0 || paths == 0 {
            return Err(Error::invalid("dimension and path count must be positive"));
        }
        let steps = grid.steps();
        let row = steps * dim;
        let sqrt_dt: Vec<f64> = grid.dts().map(f64::sqrt).collect();
        let mut increments = vec![0.0; paths * row];
        par::fill_chunks(&mut increments, row * par::CHUNK, |chunk, block| {
            for (k, out) in block.chunks_mut(row).enumerate() {
                let path = chunk * par::CHUNK + k;
                let mut rng = path_rng(seed, path as u64);
                for (i, step) in out.chunks_mut(dim).enumerate() {
                    for w in step {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        *w = g * sqrt_dt[i];
                    }
                }
            }
        });
        Ok(Self {
            dim,
            paths,
            steps,
            seed,
            kind: NoiseKind::Gaussian,
            increments,
        })
    }

    /// All `2^n` sign sequences of a scalar symmetric random walk; path `p`
    /// moves up at step `i` iff bit `i` of `p` is set, so paths sharing
    /// their low `i` bits share the first `i` steps.
    pub fn bernoulli_tree(grid: &TimeGrid) -> Result<Self> {
        let steps = grid.steps();
        if steps > super::MAX_TREE_DEPTH {
            return Err(Error::ResourceLimit(format!(
                "tree depth {steps} exceeds {}",
                super::MAX_TREE_DEPTH
            )));
        }
        let paths = 1usize << steps;
        let sqrt_dt: Vec<f64> = grid.dts().map(f64::sqrt).collect();
        let mut increments = Vec::with_capacity(paths * steps);
        for p in 0..paths {
            for (i, s) in sqrt_dt.iter().enumerate() {
                increments.push(if (p >> i) & 1 == 1 { *s } else { -*s });
            }
        }
        Ok(Self {
            dim: 1,
            paths,
            steps,
            seed: 0,
            kind: NoiseKind::BernoulliTree,
            increments,
        })
    }

    /// Wraps externally produced increments laid out `(path, step, component)`.
    pub fn from_increments(
        dim: usize,
        paths: usize,
        steps: usize,
        seed: u64,
        kind: NoiseKind,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if increments.len() != dim * paths * steps {
            return Err(Error::invalid(format!(
                "increment tensor has {} entries, expected {paths}×{steps}×{dim}",
                increments.len()
            )));
        }
        Ok(Self {
            dim,
            paths,
            steps,
            seed,
            kind,
            increments,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.paths, self.steps, self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    /// Increment `ΔW_step` of one path, length `d`.
    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let start = (path * self.steps + step) * self.dim;
        &self.increments[start..start + self.dim]
    }

    /// All increments of one path, `(step, component)` major.
    pub fn path(&self, path: usize) -> &[f64] {
        let row = self.steps * self.dim;
        &self.increments[path * row..(path + 1) * row]
    }

    /// Keeps only the first `paths` trajectories.
    pub fn truncated(&self, paths: usize) -> Self {
        let paths = paths.min(self.paths);
        let row = self.steps * self.dim;
        Self {
            increments: self.increments[..paths * row].to_vec(),
            paths,
            ..*self
        }
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if grid.steps() != self.steps {
            return Err(Error::invalid(format!(
                "noise has {} steps but grid has {}",
                self.steps,
                grid.steps()
            )));
        }
        Ok(())
    }
}
