use std::cell::RefCell;

use super::backward::{picard_solve, stats, PicardOptions};
use super::solution::{BsdeSolution, PicardStats, SolverMethod};
use crate::engine::{ModelSpec, PathBundle, PathPrefix, Scratch, TimeGrid, MAX_TREE_DEPTH};
use crate::generators::{GeneratorSpec, Truncation};
use crate::{Error, Result};

/// Exact backward recursion on the non-recombining binary tree.
///
/// Level `i` holds `2^i` nodes; node `k` at level `i` has children `k`
/// (down move) and `k + 2^i` (up move), matching the path numbering of
/// [`BrownianBundle::bernoulli_tree`](crate::engine::BrownianBundle::bernoulli_tree).
#[derive(Debug, Clone)]
pub struct TreeSolution {
    grid: TimeGrid,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    truncation: Option<f64>,
    picard: PicardStats,
}

impl TreeSolution {
    pub fn depth(&self) -> usize {
        self.grid.steps()
    }

    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }

    pub fn z0(&self) -> f64 {
        self.z[0][0]
    }

    pub fn y_level(&self, level: usize) -> &[f64] {
        &self.y[level]
    }

    /// `Z` at tree level `level < depth`.
    pub fn z_level(&self, level: usize) -> &[f64] {
        &self.z[level]
    }

    pub fn picard(&self) -> &PicardStats {
        &self.picard
    }

    /// Spreads node values onto the `2^n` enumerated paths.
    pub fn to_solution(&self, paths: &PathBundle) -> Result<BsdeSolution> {
        let n = self.depth();
        if paths.paths() != 1 << n || paths.dim() != 1 || paths.grid() != &self.grid {
            return Err(Error::invalid("bundle is not the enumerated tree of this solution"));
        }
        let nodes = n + 1;
        let mut y = vec![0.0; paths.paths() * nodes];
        let mut z = vec![0.0; paths.paths() * nodes];
        for p in 0..paths.paths() {
            for i in 0..nodes {
                let k = p & ((1 << i) - 1);
                y[p * nodes + i] = self.y[i][k];
                z[p * nodes + i] = self.z[i.min(n - 1)][p & ((1 << i.min(n - 1)) - 1)];
            }
        }
        BsdeSolution::from_parts(
            paths,
            y,
            z,
            vec![0.0; nodes],
            SolverMethod::TreeExact,
            self.truncation,
            Some(self.picard.clone()),
        )
    }
}

thread_local! {
    static PREFIX: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Solves the BSDE driven by a scalar symmetric random walk with
/// increments `±√Δ_i`, using the same per-node scheme as the regression
/// solver: `m = (Y_u + Y_d)/2`, `Z = (Y_u − Y_d)/(2√Δ)`.
pub fn solve_tree(
    spec: &GeneratorSpec,
    model: &ModelSpec,
    grid: &TimeGrid,
    truncation: Option<f64>,
    opts: PicardOptions,
) -> Result<TreeSolution> {
    let n = grid.steps();
    if n > MAX_TREE_DEPTH {
        return Err(Error::ResourceLimit(format!("tree depth {n} exceeds {MAX_TREE_DEPTH}")));
    }
    if model.dim() != 1 {
        return Err(Error::invalid("the binary tree drives scalar models only"));
    }
    let trunc = truncation.map(Truncation::new).transpose()?;
    let mut scratch = Scratch::new(1);
    let mut states = vec![model.x0().to_vec()];
    let mut sups = vec![vec![model.x0()[0].abs()]];
    for i in 0..n {
        let s = grid.dt(i).sqrt();
        let width = 1 << i;
        let mut next = vec![0.0; 2 * width];
        let mut sup = vec![0.0; 2 * width];
        for k in 0..width {
            let x = [states[i][k]];
            for (idx, dw) in [(k, -s), (k + width, s)] {
                let mut out = [0.0];
                model.euler_step(grid.time(i), &x, grid.dt(i), &[dw], &mut out, &mut scratch);
                if !out[0].is_finite() {
                    return Err(Error::SimulationDiverged { path: idx, node: i + 1 });
                }
                next[idx] = out[0];
                sup[idx] = sups[i][k].max(out[0].abs());
            }
        }
        states.push(next);
        sups.push(sup);
    }
    let times = grid.nodes();
    let with_prefix = |level: usize, k: usize, f: &mut dyn FnMut(&PathPrefix<'_>) -> f64| -> f64 {
        PREFIX.with(|buf| {
            let (xs, ss) = &mut *buf.borrow_mut();
            xs.clear();
            ss.clear();
            for j in 0..=level {
                let a = k & ((1 << j) - 1);
                xs.push(states[j][a]);
                ss.push(sups[j][a]);
            }
            f(&PathPrefix::new(xs, ss, times, 1, level))
        })
    };
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut zs: Vec<Vec<f64>> = vec![Vec::new(); n.max(1)];
    ys[n] = (0..1 << n)
        .map(|k| with_prefix(n, k, &mut |pre| spec.terminal(pre)))
        .collect();
    if let Some(k) = ys[n].iter().position(|v| !v.is_finite()) {
        return Err(Error::DriverEvaluation(format!("non-finite terminal value on tree leaf {k}")));
    }
    let mut histories = vec![Vec::new(); n + 1];
    for i in (0..n).rev() {
        let width = 1 << i;
        let dt = grid.dt(i);
        let s = dt.sqrt();
        let up = &ys[i + 1];
        let m: Vec<f64> = (0..width).map(|k| 0.5 * (up[k] + up[k + width])).collect();
        let z: Vec<f64> = (0..width).map(|k| (up[k + width] - up[k]) / (2.0 * s)).collect();
        let zt: Vec<f64> = match &trunc {
            Some(t) => z.iter().map(|&v| t.truncate(&[v])[0]).collect(),
            None => z.clone(),
        };
        let t = grid.time(i);
        let (y, hist) = picard_solve(i, &m, opts, |k, yv| {
            dt * with_prefix(i, k, &mut |pre| spec.driver(t, pre, yv, &zt[k..k + 1]))
        })?;
        histories[i] = hist;
        ys[i] = y;
        zs[i] = z;
    }
    Ok(TreeSolution {
        grid: grid.clone(),
        y: ys,
        z: zs,
        truncation,
        picard: stats(histories),
    })
}
