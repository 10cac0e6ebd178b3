use serde::{Deserialize, Serialize};

use crate::engine::{simulate_forward, BrownianBundle, ModelSpec, PathBundle};
use crate::{Error, Result};

/// Tangent process against bump-and-revalue with common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentCheck {
    pub bump: f64,
    /// Max over paths of `‖∇X − ∇X^{fd}‖_max / ‖∇X^{fd}‖_max` per node.
    pub per_node: Vec<f64>,
    pub max_rel_error: f64,
}

pub fn tangent_vs_bump(model: &ModelSpec, noise: &BrownianBundle, paths: &PathBundle, bump: f64) -> Result<TangentCheck> {
    if !paths.has_tangent() {
        return Err(Error::invalid("path bundle carries no tangent process"));
    }
    if !(bump > 0.0) {
        return Err(Error::invalid("bump must be positive"));
    }
    let d = model.dim();
    let grid = paths.grid();
    let mut fd = vec![0.0; paths.paths() * paths.nodes() * d * d];
    for k in 0..d {
        let shifted = |s: f64| {
            let mut x = model.x0().to_vec();
            x[k] += s;
            simulate_forward(&model.clone().with_x0(x), noise, grid)
        };
        let (up, down) = (shifted(bump)?, shifted(-bump)?);
        for p in 0..paths.paths() {
            for i in 0..paths.nodes() {
                let (u, w) = (up.state(p, i), down.state(p, i));
                for a in 0..d {
                    fd[((p * paths.nodes() + i) * d + a) * d + k] = (u[a] - w[a]) / (2.0 * bump);
                }
            }
        }
    }
    let mut per_node = vec![0.0f64; paths.nodes()];
    for p in 0..paths.paths() {
        for (i, worst) in per_node.iter_mut().enumerate() {
            let tan = paths.tangent(p, i).expect("tangent present");
            let at = (p * paths.nodes() + i) * d * d;
            let f = &fd[at..at + d * d];
            let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            let err = tan.iter().zip(f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            *worst = worst.max(err / scale);
        }
    }
    Ok(TangentCheck {
        bump,
        max_rel_error: per_node.iter().copied().fold(0.0, f64::max),
        per_node,
    })
}
