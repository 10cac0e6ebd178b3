use super::backward::{backward_regression, picard_solve, std_error, Backward};
use super::lsmc::LsmcOptions;
use super::regression::{Basis, Projector};
use super::solution::{BsdeSolution, SolverMethod};
use crate::engine::{evaluate_functional, BrownianBundle, ModelSpec, NoiseKind, PathBundle};
use crate::generators::{GeneratorSpec, Truncation};
use crate::{Error, Result};

/// Both stages of the additive construction and their sum.
#[derive(Debug, Clone)]
pub struct AdditiveStages {
    /// `(Y¹, Z¹)` for terminal `h` and driver `g`.
    pub stage1: BsdeSolution,
    /// `(Y², Z²)` for terminal `ξ`, solved under the original measure.
    pub stage2: BsdeSolution,
    pub combined: BsdeSolution,
}

fn truncated(tr: &Truncation, z: &[f64]) -> Vec<f64> {
    tr.truncate(z)
}

fn finish(paths: &PathBundle, out: Backward, method: SolverMethod, truncation: Option<f64>) -> Result<BsdeSolution> {
    let mut sol = BsdeSolution::from_parts(paths, out.y, out.z, out.y_se, method, truncation, Some(out.picard))?;
    sol.rank_deficient = out.rank_deficient;
    Ok(sol)
}

/// `∇_z g(t_i, X, Y¹, ρ_N(Z¹))` laid out `(path, node, component)` for nodes `< n`.
fn stage1_gradients(spec: &GeneratorSpec, paths: &PathBundle, stage1: &BsdeSolution, tr: &Truncation) -> Result<Vec<f64>> {
    let (np, d, n) = (paths.paths(), paths.dim(), paths.nodes() - 1);
    let mut theta = vec![0.0; np * n * d];
    for p in 0..np {
        for i in 0..n {
            let z1 = truncated(tr, stage1.z(p, i));
            let out = &mut theta[(p * n + i) * d..(p * n + i + 1) * d];
            spec.grad_z_g(paths.grid().time(i), &paths.prefix(p, i), stage1.y(p, i), &z1, out)?;
        }
    }
    Ok(theta)
}

fn combine(paths: &PathBundle, a: &BsdeSolution, b: &BsdeSolution, method: SolverMethod, truncation: f64) -> Result<BsdeSolution> {
    let y = a.y.iter().zip(&b.y).map(|(u, v)| u + v).collect();
    let z = a.z.iter().zip(&b.z).map(|(u, v)| u + v).collect();
    let se = a.y_se.iter().zip(&b.y_se).map(|(u, v)| u + v).collect();
    let picard = match (&a.picard, &b.picard) {
        (Some(x), Some(y)) => Some(x.merge(y)),
        _ => None,
    };
    let mut sol = BsdeSolution::from_parts(paths, y, z, se, method, Some(truncation), picard)?;
    sol.rank_deficient = a.rank_deficient.iter().chain(&b.rank_deficient).copied().collect();
    sol.rank_deficient.sort_unstable();
    sol.rank_deficient.dedup();
    Ok(sol)
}

/// Two-stage solution for additive noise.
///
/// Stage 1 solves `(h, g)`. Stage 2 solves terminal `ξ` with driver
/// `f(Y¹+y, Z¹+z) + g(Y¹+y, Z¹+z) − g(Y¹, Z¹) − z·θ` under the measure with
/// `dW^Q = dW − θ dt`, `θ = ∇_z g(Y¹, Z¹)`; under `P` the term `z·θ` is
/// added back. Both `z` arguments pass through `ρ_N` as a whole.
pub fn solve_additive_stages(
    spec: &GeneratorSpec,
    model: &ModelSpec,
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
    opts: &LsmcOptions,
) -> Result<AdditiveStages> {
    if !model.is_additive() {
        return Err(Error::invalid("the additive decomposition needs a state-independent diffusion"));
    }
    let tr = Truncation::new(opts.truncation)?;
    let grid = paths.grid();
    let n = paths.nodes() - 1;
    let h = evaluate_functional(spec.h.as_ref(), paths, n)?;
    let s1 = backward_regression(paths, noise, basis, &h, Some(&tr), opts.picard, |p, i, y, z| {
        spec.g.value(grid.time(i), &paths.prefix(p, i), y, z)
    })?;
    let stage1 = finish(paths, s1, SolverMethod::Lsmc, Some(opts.truncation))?;
    let xi = evaluate_functional(spec.xi.as_ref(), paths, n)?;
    let s2 = backward_regression(paths, noise, basis, &xi, None, opts.picard, |p, i, y, z| {
        stage2_driver(spec, paths, &stage1, &tr, p, i, y, z)
    })?;
    let stage2 = finish(paths, s2, SolverMethod::Lsmc, Some(opts.truncation))?;
    let theta = stage1_gradients(spec, paths, &stage1, &tr)?;
    let theta_sup = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let combined = combine(paths, &stage1, &stage2, SolverMethod::DecomposedAdditive, opts.truncation)?
        .with_note("stage1_y0", stage1.y0())
        .with_note("stage2_y0", stage2.y0())
        .with_note("stage1_residual", stage1.picard.as_ref().map_or(0.0, |s| s.terminal_residual))
        .with_note("stage2_residual", stage2.picard.as_ref().map_or(0.0, |s| s.terminal_residual))
        .with_note("theta_sup", theta_sup);
    Ok(AdditiveStages {
        stage1,
        stage2,
        combined,
    })
}

/// P-form stage-2 driver `F(Y¹+y, ρ(Z¹+z)) − g(Y¹, ρ(Z¹))`.
#[allow(clippy::too_many_arguments)]
fn stage2_driver(
    spec: &GeneratorSpec,
    paths: &PathBundle,
    stage1: &BsdeSolution,
    tr: &Truncation,
    p: usize,
    i: usize,
    y: f64,
    z: &[f64],
) -> f64 {
    let t = paths.grid().time(i);
    let pre = paths.prefix(p, i);
    let (y1, z1) = (stage1.y(p, i), stage1.z(p, i));
    let total: Vec<f64> = z1.iter().zip(z).map(|(a, b)| a + b).collect();
    let zt = truncated(tr, &total);
    spec.driver(t, &pre, y1 + y, &zt) - spec.g.value(t, &pre, y1, &truncated(tr, z1))
}

/// [`solve_additive_stages`] returning the combined solution.
pub fn solve_decomposed_additive(
    spec: &GeneratorSpec,
    model: &ModelSpec,
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
    opts: &LsmcOptions,
) -> Result<BsdeSolution> {
    Ok(solve_additive_stages(spec, model, paths, noise, basis, opts)?.combined)
}

/// Stage 2 of the additive construction written under `Q`: conditional
/// expectations are reweighted by the one-step likelihood ratio of
/// `dW^Q = dW − θ dt` and `Z²` is the `Q`-regression slope on `ΔW^Q`.
///
/// Weights are `1 + θΔW` on a Bernoulli tree and `exp(θΔW − θ²Δ/2)` for
/// Gaussian noise. Scalar noise only.
pub fn additive_stage2_under_q(
    spec: &GeneratorSpec,
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
    stage1: &BsdeSolution,
    opts: &LsmcOptions,
) -> Result<BsdeSolution> {
    if paths.dim() != 1 || !stage1.same_bundle(paths) {
        return Err(Error::invalid("Q-form stage 2 needs scalar noise and the stage-1 bundle"));
    }
    let tr = Truncation::new(opts.truncation)?;
    let theta = stage1_gradients(spec, paths, stage1, &tr)?;
    let grid = paths.grid();
    let (np, nodes) = (paths.paths(), paths.nodes());
    let n = nodes - 1;
    let mut y = vec![0.0; np * nodes];
    let mut z = vec![0.0; np * nodes];
    let mut se = vec![0.0; nodes];
    let mut histories = vec![Vec::new(); nodes];
    for (p, v) in evaluate_functional(spec.xi.as_ref(), paths, n)?.into_iter().enumerate() {
        y[p * nodes + n] = v;
    }
    for i in (0..n).rev() {
        let dt = grid.dt(i);
        let th: Vec<f64> = (0..np).map(|p| theta[p * n + i]).collect();
        let dw: Vec<f64> = (0..np).map(|p| noise.increment(p, i)[0]).collect();
        let weights: Vec<f64> = th
            .iter()
            .zip(&dw)
            .map(|(t, w)| match noise.kind() {
                NoiseKind::BernoulliTree => 1.0 + t * w,
                NoiseKind::Gaussian => (t * w - 0.5 * t * t * dt).exp(),
            })
            .collect();
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("likelihood ratio not positive at node {i}")));
        }
        let proj = Projector::fit_weighted(basis.design(paths, i), weights);
        let next: Vec<f64> = (0..np).map(|p| y[p * nodes + i + 1]).collect();
        let a = proj.project(&next);
        let dwq: Vec<f64> = dw.iter().zip(&th).map(|(w, t)| w - t * dt).collect();
        let num = proj.project(&next.iter().zip(&a).zip(&dwq).map(|((v, m), q)| (v - m) * q).collect::<Vec<_>>());
        let den = proj.project(&dwq.iter().map(|q| q * q).collect::<Vec<_>>());
        let zq: Vec<f64> = num.iter().zip(&den).map(|(u, v)| u / v).collect();
        se[i] = std_error(&next.iter().zip(&a).map(|(v, m)| v - m).collect::<Vec<_>>());
        let (yi, hist) = picard_solve(i, &a, opts.picard, |p, yv| {
            dt * (stage2_driver(spec, paths, stage1, &tr, p, i, yv, &zq[p..p + 1]) - zq[p] * th[p])
        })?;
        histories[i] = hist;
        for p in 0..np {
            y[p * nodes + i] = yi[p];
            z[p * nodes + i] = zq[p];
            if i + 1 == n {
                z[p * nodes + n] = zq[p];
            }
        }
    }
    BsdeSolution::from_parts(
        paths,
        y,
        z,
        se,
        SolverMethod::DecomposedAdditive,
        Some(opts.truncation),
        Some(super::backward::stats(histories)),
    )
}

/// Two-stage solution for state-dependent noise.
///
/// Stage 1 solves the `z`-free BSDE `R` with terminal `ξ + h` and driver
/// `F(R, 0)`, recording `S` from the `ΔW` regression. Stage 2 solves `U`
/// with terminal `0` and driver `F(U + R, ρ_N(V + S)) − F(R, 0)`. The output
/// is `(U + R, V + S)` with `sup |S|` and its 99.9% quantile attached as the notes `s_sup`
/// and `s_q999`.
pub fn solve_decomposed_malliavin(
    spec: &GeneratorSpec,
    model: &ModelSpec,
    paths: &PathBundle,
    noise: &BrownianBundle,
    basis: &dyn Basis,
    opts: &LsmcOptions,
) -> Result<BsdeSolution> {
    let tr = Truncation::new(opts.truncation)?;
    let grid = paths.grid();
    let (d, n) = (paths.dim(), paths.nodes() - 1);
    let zero = vec![0.0; d];
    let terminal = super::lsmc::terminal_values(spec, paths)?;
    let s1 = backward_regression(paths, noise, basis, &terminal, None, opts.picard, |p, i, y, _| {
        spec.driver(grid.time(i), &paths.prefix(p, i), y, &zero)
    })?;
    let stage1 = finish(paths, s1, SolverMethod::Lsmc, None)?;
    let zeros = vec![0.0; paths.paths()];
    let s2 = backward_regression(paths, noise, basis, &zeros, None, opts.picard, |p, i, u, v| {
        let t = grid.time(i);
        let pre = paths.prefix(p, i);
        let r = stage1.y(p, i);
        let total: Vec<f64> = stage1.z(p, i).iter().zip(v).map(|(a, b)| a + b).collect();
        spec.driver(t, &pre, u + r, &truncated(&tr, &total)) - spec.driver(t, &pre, r, &zero)
    })?;
    let stage2 = finish(paths, s2, SolverMethod::Lsmc, Some(opts.truncation))?;
    let mut s_abs: Vec<f64> = (0..paths.paths())
        .flat_map(|p| (0..n).map(move |i| (p, i)))
        .map(|(p, i)| crate::engine::norm(stage1.z(p, i)))
        .collect();
    s_abs.sort_by(f64::total_cmp);
    let s_sup = s_abs.last().copied().unwrap_or(0.0);
    let s_q999 = s_abs[((s_abs.len() as f64 * 0.999) as usize).min(s_abs.len() - 1)];
    let bound = (spec.constants.k_y * grid.horizon()).exp() * spec.constants.k_h * model.sigma_bound(grid.horizon());
    Ok(combine(paths, &stage1, &stage2, SolverMethod::DecomposedMalliavin, opts.truncation)?
        .with_note("s_sup", s_sup)
        .with_note("s_q999", s_q999)
        .with_note("s_reference_bound", bound)
        .with_note("stage1_y0", stage1.y0())
        .with_note("stage2_y0", stage2.y0()))
}
