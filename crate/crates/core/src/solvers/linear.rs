use super::backward::{backward_regression, PicardOptions};
use super::cole_hopf::{bump, gaussian_increments, markov_terminal, tail_variance};
use super::lsmc::terminal_values;
use super::quadrature::GaussHermite;
use super::regression::Basis;
use super::solution::{BsdeSolution, SolverMethod};
use crate::engine::{BrownianBundle, ModelSpec, PathBundle};
use crate::generators::{DriverForm, GeneratorSpec};
use crate::{par, Error, Result};

/// Closed-form solution for the driver `a·y`: `Y_t = e^{a(T−t)} E_t[ξ + h]`.
///
/// `E_t` is Gauss–Hermite quadrature for Markov terminals of driftless
/// scalar additive models, and regression on `basis` otherwise.
pub fn solve_linear(
    spec: &GeneratorSpec,
    model: &ModelSpec,
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
) -> Result<BsdeSolution> {
    let a = match spec.form() {
        DriverForm::Zero => 0.0,
        DriverForm::LinearY(a) => a,
        other => return Err(Error::invalid(format!("linear oracle needs a driver a·y, got {other:?}"))),
    };
    let grid = paths.grid();
    let horizon = grid.horizon();
    let nodes = paths.nodes();
    let n = nodes - 1;
    let d = paths.dim();
    let (mut y, mut z, mut se, method) = match markov_terminal(spec, model).filter(|_| gaussian_increments(model)) {
        Some(phi) => {
            let gh = GaussHermite::new(48);
            let var = tail_variance(model, paths);
            let value = |i: usize, x: f64| if i == n { phi(x) } else { gh.expect(x, var[i].sqrt(), &phi) };
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
            (y, z, vec![0.0; nodes], SolverMethod::LinearQuadrature)
        }
        None => {
            let terminal = terminal_values(spec, paths)?;
            let out = backward_regression(paths, noise, basis, &terminal, None, PicardOptions::explicit(), |_, _, _, _| 0.0)?;
            (out.y, out.z, out.y_se, SolverMethod::LinearRegression)
        }
    };
    for p in 0..paths.paths() {
        for i in 0..nodes {
            let scale = (a * (horizon - grid.time(i.min(n - 1)))).exp();
            y[p * nodes + i] *= (a * (horizon - grid.time(i))).exp();
            for v in &mut z[(p * nodes + i) * d..(p * nodes + i + 1) * d] {
                *v *= scale;
            }
        }
    }
    for (i, s) in se.iter_mut().enumerate() {
        *s *= (a * (horizon - grid.time(i))).exp();
    }
    BsdeSolution::from_parts(paths, y, z, se, method, None, None)
}
