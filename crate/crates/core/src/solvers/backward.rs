use serde::{Deserialize, Serialize};

use super::regression::{Basis, Projector};
use super::solution::PicardStats;
use crate::engine::{BrownianBundle, PathBundle};
use crate::generators::Truncation;
use crate::{par, Error, Result};

/// Per-node fixed-point options for the implicit-in-`y` scheme.
///
/// The first iterate is the explicit step `m + Δ·F(m, Z)`; up to `budget`
/// further Picard iterations follow until `max_p |y^{k+1} − y^k| ≤ tol`.
/// `budget = 0` is the explicit scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardOptions {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_budget() -> usize {
    20
}

fn default_tol() -> f64 {
    1e-9
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            tol: default_tol(),
        }
    }
}

impl PicardOptions {
    pub fn explicit() -> Self {
        Self { budget: 0, tol: 0.0 }
    }
}

/// Consecutive residual increases that count as divergence.
const DIVERGENCE_RUN: usize = 3;

/// Runs the per-node fixed point on all `m.len()` rows at once.
///
/// `step(row, y)` returns `Δ·F` at the current iterate; the global residual
/// drives stopping, so every row sees the same iteration count.
pub(crate) fn picard_solve<S>(node: usize, m: &[f64], opts: PicardOptions, step: S) -> Result<(Vec<f64>, Vec<f64>)>
where
    S: Fn(usize, f64) -> f64 + Sync + Send,
{
    let rows = m.len();
    let mut y = vec![0.0; rows];
    let eval = |prev: Option<&[f64]>, out: &mut [f64]| -> Result<()> {
        par::fill_chunks(out, par::CHUNK, |chunk, block| {
            for (k, o) in block.iter_mut().enumerate() {
                let r = chunk * par::CHUNK + k;
                let at = prev.map_or(m[r], |p| p[r]);
                *o = m[r] + step(r, at);
            }
        });
        match out.iter().position(|v| !v.is_finite()) {
            Some(r) => Err(Error::DriverEvaluation(format!(
                "non-finite driver value at node {node}, row {r}"
            ))),
            None => Ok(()),
        }
    };
    eval(None, &mut y)?;
    let mut history = Vec::new();
    let mut next = vec![0.0; rows];
    let mut rising = 0;
    for it in 0..opts.budget {
        eval(Some(&y), &mut next)?;
        let res = y.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut y, &mut next);
        if let Some(&last) = history.last() {
            rising = if res > last { rising + 1 } else { 0 };
        }
        history.push(res);
        if rising >= DIVERGENCE_RUN {
            return Err(Error::SolverDiverged {
                node,
                iterations: it + 1,
                residual: res,
            });
        }
        if res <= opts.tol {
            break;
        }
    }
    Ok((y, history))
}

pub(crate) struct Backward {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub y_se: Vec<f64>,
    pub picard: PicardStats,
    pub rank_deficient: Vec<usize>,
}

/// Generic regression backward induction.
///
/// At node `i`: `m = Ê_i[Y_{i+1}]`, `Z = Ê_i[(Y_{i+1} − m)ΔWᵀ]/Δ`,
/// then `Y_i` solves `y = m + Δ·F(i, p, y, ρ_N(Z))`. `driver(path, node, y, z)`
/// is the full driver evaluated at the truncated `z`.
pub(crate) fn backward_regression<D>(
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
    terminal: &[f64],
    truncation: Option<&Truncation>,
    opts: PicardOptions,
    driver: D,
) -> Result<Backward>
where
    D: Fn(usize, usize, f64, &[f64]) -> f64 + Sync + Send,
{
    let grid = paths.grid();
    noise.check_grid(grid)?;
    let (np, d, nodes) = (paths.paths(), paths.dim(), paths.nodes());
    if noise.paths() != np || noise.dim() != d {
        return Err(Error::invalid("noise does not match the path bundle"));
    }
    if terminal.len() != np {
        return Err(Error::invalid("terminal vector length differs from path count"));
    }
    let n = nodes - 1;
    let mut y = vec![0.0; np * nodes];
    let mut z = vec![0.0; np * nodes * d];
    let mut y_se = vec![0.0; nodes];
    let mut histories = vec![Vec::new(); nodes];
    let mut rank_deficient = Vec::new();
    for (p, &v) in terminal.iter().enumerate() {
        y[p * nodes + n] = v;
    }
    let mut zi = vec![0.0; np * d];
    let mut zt = vec![0.0; np * d];
    for i in (0..n).rev() {
        let dt = grid.dt(i);
        let next: Vec<f64> = (0..np).map(|p| y[p * nodes + i + 1]).collect();
        let proj = Projector::fit(basis.design(paths, i));
        if proj.rank_deficient() {
            rank_deficient.push(i);
        }
        let m = proj.project(&next);
        let resid: Vec<f64> = next.iter().zip(&m).map(|(a, b)| a - b).collect();
        y_se[i] = std_error(&resid);
        for j in 0..d {
            let target: Vec<f64> = (0..np).map(|p| resid[p] * noise.increment(p, i)[j] / dt).collect();
            for (p, v) in proj.project(&target).into_iter().enumerate() {
                zi[p * d + j] = v;
            }
        }
        match truncation {
            Some(tr) => {
                for (src, dst) in zi.chunks(d).zip(zt.chunks_mut(d)) {
                    tr.apply(src, dst);
                }
            }
            None => zt.copy_from_slice(&zi),
        }
        let (yi, hist) = picard_solve(i, &m, opts, |p, yv| dt * driver(p, i, yv, &zt[p * d..(p + 1) * d]))?;
        histories[i] = hist;
        for p in 0..np {
            y[p * nodes + i] = yi[p];
            let at = (p * nodes + i) * d;
            z[at..at + d].copy_from_slice(&zi[p * d..(p + 1) * d]);
            if i + 1 == n {
                z[at + d..at + 2 * d].copy_from_slice(&zi[p * d..(p + 1) * d]);
            }
        }
    }
    rank_deficient.reverse();
    Ok(Backward {
        y,
        z,
        y_se,
        picard: stats(histories),
        rank_deficient,
    })
}

pub(crate) fn stats(histories: Vec<Vec<f64>>) -> PicardStats {
    PicardStats {
        max_iterations: histories.iter().map(Vec::len).max().unwrap_or(0),
        terminal_residual: histories.iter().filter_map(|h| h.last().copied()).fold(0.0, f64::max),
        histories,
    }
}

/// `sd / √P` with the unbiased variance.
pub(crate) fn std_error(resid: &[f64]) -> f64 {
    let n = resid.len();
    if n < 2 {
        return 0.0;
    }
    let mean = resid.iter().sum::<f64>() / n as f64;
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picard_reaches_fixed_point() {
        // y = 1 + 0.5·(y/2) has fixed point 4/3
        let (y, hist) = picard_solve(0, &[1.0], PicardOptions::default(), |_, y| 0.5 * y / 2.0).unwrap();
        assert!((y[0] - 4.0 / 3.0).abs() < 1e-9);
        assert!(hist.len() <= 20);
    }

    #[test]
    fn explicit_scheme_is_single_step() {
        let (y, hist) = picard_solve(0, &[1.0], PicardOptions::explicit(), |_, y| 0.5 * y).unwrap();
        assert_eq!(y[0], 1.5);
        assert!(hist.is_empty());
    }

    #[test]
    fn expanding_map_diverges() {
        let err = picard_solve(3, &[1.0], PicardOptions::default(), |_, y| 2.0 * y).unwrap_err();
        assert!(matches!(err, Error::SolverDiverged { node: 3, .. }));
    }

    #[test]
    fn non_finite_driver_is_reported() {
        let err = picard_solve(1, &[1.0, 2.0], PicardOptions::default(), |r, _| if r == 1 { f64::NAN } else { 0.0 })
            .unwrap_err();
        assert!(matches!(err, Error::DriverEvaluation(_)));
    }
}
