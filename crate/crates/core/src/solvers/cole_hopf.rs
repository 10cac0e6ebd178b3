use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quadrature::{log_sum_exp, GaussHermite};
use super::solution::{BsdeSolution, SolverMethod};
use crate::engine::{fill_running_sup, path_rng, ModelSpec, PathBundle, PathPrefix, Scratch};
use crate::generators::{DriverForm, GeneratorSpec};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColeHopfOptions {
    /// Inner simulations per `(path, node)` when no quadrature applies.
    #[serde(default = "default_inner")]
    pub inner_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_points")]
    pub quadrature_points: usize,
    /// Use inner simulation even when quadrature applies.
    #[serde(default)]
    pub force_nested: bool,
}

fn default_inner() -> usize {
    2000
}

fn default_seed() -> u64 {
    0x5eed
}

fn default_points() -> usize {
    48
}

impl Default for ColeHopfOptions {
    fn default() -> Self {
        Self {
            inner_paths: default_inner(),
            seed: default_seed(),
            quadrature_points: default_points(),
            force_nested: false,
        }
    }
}

/// Markov terminal `x ↦ ξ(x) + h(x)` for scalar models, when both parts
/// expose one.
pub(crate) fn markov_terminal<'a>(spec: &'a GeneratorSpec, model: &ModelSpec) -> Option<impl Fn(f64) -> f64 + Sync + 'a> {
    if model.dim() != 1 {
        return None;
    }
    let x0 = model.x0();
    spec.xi.of_state(x0)?;
    spec.h.of_state(x0)?;
    Some(move |x: f64| spec.xi.of_state(&[x]).unwrap_or(f64::NAN) + spec.h.of_state(&[x]).unwrap_or(f64::NAN))
}

/// `true` when `X_T − X_t` is centred Gaussian with deterministic variance.
pub(crate) fn gaussian_increments(model: &ModelSpec) -> bool {
    model.is_additive() && model.drift().is_zero() && model.dim() == 1
}

/// Tail variances `v_i = Σ_{j≥i} σ(t_j)²Δ_j`.
pub(crate) fn tail_variance(model: &ModelSpec, paths: &PathBundle) -> Vec<f64> {
    let grid = paths.grid();
    let n = grid.steps();
    let mut v = vec![0.0; n + 1];
    let mut s = [0.0];
    for j in (0..n).rev() {
        model.sigma(grid.time(j), model.x0(), &mut s);
        v[j] = v[j + 1] + s[0] * s[0] * grid.dt(j);
    }
    v
}

pub(crate) fn bump(x: f64) -> f64 {
    1e-4 * (1.0 + x.abs())
}

/// Closed-form solution of the BSDE with driver `γ|z|²`:
/// `Y_t = (2γ)⁻¹ log E_t[exp(2γ(ξ + h))]`, `Z_t = σ ∂_x Y_t`.
///
/// Uses Gauss–Hermite quadrature when the terminal is a function of `X_T`
/// and the increments are driftless Gaussian, nested simulation otherwise.
pub fn solve_cole_hopf(
    spec: &GeneratorSpec,
    model: &ModelSpec,
    paths: &PathBundle,
    opts: &ColeHopfOptions,
) -> Result<BsdeSolution> {
    let gamma = match spec.form() {
        DriverForm::Quadratic(g) if g != 0.0 && g.is_finite() => g,
        other => {
            return Err(Error::invalid(format!(
                "Cole–Hopf needs a driver γ|z|² with γ ≠ 0, got {other:?}"
            )))
        }
    };
    if paths.dim() != model.dim() {
        return Err(Error::invalid("model and path dimensions differ"));
    }
    let c = 2.0 * gamma;
    match markov_terminal(spec, model) {
        Some(phi) if gaussian_increments(model) && !opts.force_nested => quadrature(&phi, c, model, paths, opts),
        _ => nested(spec, c, model, paths, opts),
    }
}

fn quadrature(
    phi: &(impl Fn(f64) -> f64 + Sync),
    c: f64,
    model: &ModelSpec,
    paths: &PathBundle,
    opts: &ColeHopfOptions,
) -> Result<BsdeSolution> {
    let gh = GaussHermite::new(opts.quadrature_points.max(2));
    let var = tail_variance(model, paths);
    let grid = paths.grid();
    let nodes = paths.nodes();
    let n = nodes - 1;
    let value = |i: usize, x: f64| -> f64 {
        if i == n {
            phi(x)
        } else {
            gh.log_expect_exp(x, var[i].sqrt(), |u| c * phi(u)) / c
        }
    };
    let mut y = vec![0.0; paths.paths() * nodes];
    let mut z = vec![0.0; paths.paths() * nodes];
    par::fill_chunks(&mut y, nodes * par::CHUNK, |chunk, block| {
        for (k, row) in block.chunks_mut(nodes).enumerate() {
            let p = chunk * par::CHUNK + k;
            for (i, out) in row.iter_mut().enumerate() {
                *out = value(i, paths.state(p, i)[0]);
            }
        }
    });
    par::fill_chunks(&mut z, nodes * par::CHUNK, |chunk, block| {
        let mut s = [0.0];
        for (k, row) in block.chunks_mut(nodes).enumerate() {
            let p = chunk * par::CHUNK + k;
            for i in 0..n {
                let x = paths.state(p, i)[0];
                let h = bump(x);
                model.sigma(grid.time(i), &[x], &mut s);
                row[i] = s[0] * (value(i, x + h) - value(i, x - h)) / (2.0 * h);
            }
            row[n] = row[n - 1];
        }
    });
    if y.iter().chain(&z).any(|v| !v.is_finite()) {
        return Err(Error::OracleOverflow("quadrature produced a non-finite value".into()));
    }
    BsdeSolution::from_parts(
        paths,
        y,
        z,
        vec![0.0; nodes],
        SolverMethod::ColeHopfQuadrature,
        None,
        None,
    )
}

struct NestedRow {
    y: Vec<f64>,
    z: Vec<f64>,
    se: Vec<f64>,
}

fn nested(spec: &GeneratorSpec, c: f64, model: &ModelSpec, paths: &PathBundle, opts: &ColeHopfOptions) -> Result<BsdeSolution> {
    let m = opts.inner_paths.max(2);
    let grid = paths.grid();
    let times = grid.nodes();
    let (d, nodes) = (paths.dim(), paths.nodes());
    let n = nodes - 1;
    let variants = 1 + 2 * d;
    let rows = par::map_ranges(paths.paths(), |range| -> Result<Vec<NestedRow>> {
        let mut scratch = Scratch::new(d);
        let mut buf = vec![0.0; nodes * d];
        let mut sup = vec![0.0; nodes];
        let mut dw = vec![0.0; n * d];
        let mut vals = vec![vec![0.0; m]; variants];
        let mut sig = vec![0.0; d * d];
        let mut out = Vec::with_capacity(range.len());
        for p in range {
            let mut row = NestedRow {
                y: vec![0.0; nodes],
                z: vec![0.0; nodes * d],
                se: vec![0.0; nodes],
            };
            let own = paths.path_states(p);
            row.y[n] = spec.terminal(&paths.prefix(p, n));
            for i in 0..n {
                let mut rng = path_rng(opts.seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15), p as u64);
                let x = paths.state(p, i);
                let hs: Vec<f64> = x.iter().map(|&v| bump(v)).collect();
                for s in 0..m {
                    for j in i * d..n * d {
                        let g: f64 = rng.sample(StandardNormal);
                        dw[j] = g * grid.dt(j / d).sqrt();
                    }
                    for (v, slot) in vals.iter_mut().enumerate() {
                        buf[..(i + 1) * d].copy_from_slice(&own[..(i + 1) * d]);
                        if v > 0 {
                            let a = (v - 1) / 2;
                            let sign = if v % 2 == 1 { 1.0 } else { -1.0 };
                            buf[i * d + a] += sign * hs[a];
                        }
                        for k in i..n {
                            let (done, rest) = buf.split_at_mut((k + 1) * d);
                            model.euler_step(grid.time(k), &done[k * d..], grid.dt(k), &dw[k * d..(k + 1) * d], &mut rest[..d], &mut scratch);
                        }
                        fill_running_sup(&buf, d, &mut sup);
                        slot[s] = c * spec.terminal(&PathPrefix::new(&buf, &sup, times, d, n));
                    }
                }
                let ys: Vec<f64> = vals.iter().map(|v| (log_sum_exp(v) - (m as f64).ln()) / c).collect();
                if ys.iter().any(|v| !v.is_finite()) {
                    return Err(Error::OracleOverflow(format!("inner expectation not finite on path {p}, node {i}")));
                }
                row.y[i] = ys[0];
                row.se[i] = log_mean_se(&vals[0]) / c.abs();
                model.sigma(grid.time(i), x, &mut sig);
                for j in 0..d {
                    row.z[i * d + j] = (0..d)
                        .map(|a| (ys[1 + 2 * a] - ys[2 + 2 * a]) / (2.0 * hs[a]) * sig[a * d + j])
                        .sum();
                }
            }
            let (head, tail) = row.z.split_at_mut(n * d);
            tail.copy_from_slice(&head[(n - 1) * d..]);
            out.push(row);
        }
        Ok(out)
    });
    let mut y = Vec::with_capacity(paths.paths() * nodes);
    let mut z = Vec::with_capacity(paths.paths() * nodes * d);
    let mut se = vec![0.0; nodes];
    for part in rows {
        for row in part? {
            y.extend(row.y);
            z.extend(row.z);
            for (a, b) in se.iter_mut().zip(row.se) {
                *a += b;
            }
        }
    }
    for s in &mut se {
        *s /= paths.paths() as f64;
    }
    BsdeSolution::from_parts(paths, y, z, se, SolverMethod::ColeHopfNested, None, None)
}

/// Delta-method standard error of `log mean exp(v)`.
fn log_mean_se(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (x - mx).exp()).collect();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt() / mean
}
