use serde::{Deserialize, Serialize};

use super::moments::exp_moment_of;
use crate::engine::{BrownianBundle, PathBundle};
use crate::generators::GeneratorSpec;
use crate::solvers::BsdeSolution;
use crate::{par, Error, Result};

pub const DEFAULT_LP: [f64; 5] = [1.25, 1.5, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpEstimate {
    pub p: f64,
    /// `E[ℰ_T^p]`.
    pub moment: f64,
    pub moment_se: f64,
    /// `E[ℰ_T^p]^{1/p}`.
    pub norm: f64,
    pub log_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub paths: usize,
    pub mean: f64,
    pub se: f64,
    pub log_mean: f64,
    pub lp: Vec<LpEstimate>,
    /// `E[exp(½ Σ|θ|²Δ)]`.
    pub novikov: f64,
    pub log_min: f64,
    pub log_max: f64,
    #[serde(skip)]
    pub log_samples: Vec<f64>,
}

/// Which part of the driver the integrand differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradPart {
    Full,
    F,
    G,
}

/// `θ_i = ∇_z(part)(t_i, X, Y_i, Z_i)` on nodes `0..n`, laid out `(path, step, component)`.
pub fn gradz_along(spec: &GeneratorSpec, solution: &BsdeSolution, paths: &PathBundle, part: GradPart) -> Result<Vec<f64>> {
    if !solution.same_bundle(paths) {
        return Err(Error::invalid("solution was computed on a different path bundle"));
    }
    let (d, n) = (paths.dim(), paths.nodes() - 1);
    let row = n * d;
    let mut theta = vec![0.0; paths.paths() * row];
    par::try_fill_chunks(&mut theta, row * par::CHUNK, |chunk, block| {
        for (k, out) in block.chunks_mut(row).enumerate() {
            let p = chunk * par::CHUNK + k;
            for i in 0..n {
                let (t, pre, y, z) = (paths.grid().time(i), paths.prefix(p, i), solution.y(p, i), solution.z(p, i));
                let o = &mut out[i * d..(i + 1) * d];
                match part {
                    GradPart::Full => spec.grad_z(t, &pre, y, z, o)?,
                    GradPart::F => spec.grad_z_f(t, &pre, y, z, o)?,
                    GradPart::G => spec.grad_z_g(t, &pre, y, z, o)?,
                }
            }
        }
        Ok::<(), Error>(())
    })?;
    Ok(theta)
}

/// Discrete `ℰ_T = exp(Σ θ_i·ΔW_i − ½ Σ |θ_i|²Δ_i)` per path, from
/// integrands laid out `(path, step, component)`.
pub fn stochastic_exponential(theta: &[f64], noise: &BrownianBundle, dts: &[f64], ps: &[f64]) -> Result<GirsanovReport> {
    let (np, n, d) = (noise.paths(), noise.steps(), noise.dim());
    if theta.len() != np * n * d || dts.len() != n {
        return Err(Error::invalid("integrand shape does not match the noise"));
    }
    let mut logs = vec![0.0; np];
    let mut quad = vec![0.0; np];
    for p in 0..np {
        let (mut s, mut q) = (0.0, 0.0);
        for i in 0..n {
            let th = &theta[(p * n + i) * d..(p * n + i + 1) * d];
            let dw = noise.increment(p, i);
            let sq: f64 = th.iter().map(|v| v * v).sum();
            s += th.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>() - 0.5 * sq * dts[i];
            q += 0.5 * sq * dts[i];
        }
        if !s.is_finite() {
            return Err(Error::DiagnosticsOverflow { path: p });
        }
        logs[p] = s;
        quad[p] = q;
    }
    let m1 = exp_moment_of(&logs, 1.0);
    let lp = ps
        .iter()
        .map(|&p| {
            let e = exp_moment_of(&logs, p);
            LpEstimate {
                p,
                moment: e.mean,
                moment_se: e.se,
                norm: (e.log_mean / p).exp(),
                log_moment: e.log_mean,
            }
        })
        .collect();
    Ok(GirsanovReport {
        paths: np,
        mean: m1.mean,
        se: m1.se,
        log_mean: m1.log_mean,
        lp,
        novikov: exp_moment_of(&quad, 1.0).mean,
        log_min: logs.iter().copied().fold(f64::INFINITY, f64::min),
        log_max: logs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        log_samples: logs,
    })
}
