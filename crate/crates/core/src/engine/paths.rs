use super::grid::TimeGrid;
use super::model::{ModelSpec, Scratch};
use super::noise::BrownianBundle;
use crate::{par, Error, Result};

/// Simulated trajectories on a grid.
///
/// States are laid out `(path, node, component)`, the running supremum
/// `sup_{j ≤ i} |X_{t_j}|` as `(path, node)` and the optional tangent process
/// `∇X` as `(path, node, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    states: Vec<f64>,
    running_sup: Vec<f64>,
    tangent: Option<Vec<f64>>,
    fingerprint: u64,
}

/// Read-only view of one path stopped at `node`.
#[derive(Debug, Clone, Copy)]
pub struct PathPrefix<'a> {
    states: &'a [f64],
    running_sup: &'a [f64],
    times: &'a [f64],
    dim: usize,
    node: usize,
}

impl<'a> PathPrefix<'a> {
    /// `states` holds at least `node + 1` rows of length `dim`.
    pub fn new(states: &'a [f64], running_sup: &'a [f64], times: &'a [f64], dim: usize, node: usize) -> Self {
        debug_assert!(states.len() >= (node + 1) * dim);
        Self {
            states,
            running_sup,
            times,
            dim,
            node,
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.times[self.node]
    }

    /// Current state `X_{t_node}`.
    pub fn current(&self) -> &'a [f64] {
        self.state(self.node)
    }

    /// `X_{t_j}`; adapted functionals only read `j ≤ node`.
    pub fn state(&self, j: usize) -> &'a [f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    /// `sup_{j ≤ node} |X_{t_j}|`.
    pub fn sup(&self) -> f64 {
        self.running_sup[self.node]
    }

    /// Whole stored trajectory, including nodes after `node`.
    pub fn raw_states(&self) -> &'a [f64] {
        self.states
    }

    pub fn at(&self, node: usize) -> Self {
        Self { node, ..*self }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn fill_running_sup(states: &[f64], dim: usize, out: &mut [f64]) {
    let mut sup = 0.0f64;
    for (i, o) in out.iter_mut().enumerate() {
        sup = sup.max(norm(&states[i * dim..(i + 1) * dim]));
        *o = sup;
    }
}

/// FNV-1a over the bit patterns; identifies a bundle within a run.
pub(crate) fn fingerprint(parts: &[&[f64]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for v in part.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

impl PathBundle {
    /// Assembles a bundle from a state tensor; the running sup is recomputed.
    pub fn from_states(grid: TimeGrid, dim: usize, paths: usize, states: Vec<f64>) -> Result<Self> {
        let nodes = grid.steps() + 1;
        if states.len() != paths * nodes * dim || dim == 0 || paths == 0 {
            return Err(Error::invalid(format!(
                "state tensor has {} entries, expected {paths}×{nodes}×{dim}",
                states.len()
            )));
        }
        let mut running_sup = vec![0.0; paths * nodes];
        for (p, sup) in running_sup.chunks_mut(nodes).enumerate() {
            fill_running_sup(&states[p * nodes * dim..(p + 1) * nodes * dim], dim, sup);
        }
        let fingerprint = fingerprint(&[&states]);
        Ok(Self {
            grid,
            dim,
            paths,
            states,
            running_sup,
            tangent: None,
            fingerprint,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn nodes(&self) -> usize {
        self.grid.steps() + 1
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn running_sup_tensor(&self) -> &[f64] {
        &self.running_sup
    }

    pub fn tangent_tensor(&self) -> Option<&[f64]> {
        self.tangent.as_deref()
    }

    pub fn has_tangent(&self) -> bool {
        self.tangent.is_some()
    }

    /// `X_{t_node}` of one path.
    pub fn state(&self, path: usize, node: usize) -> &[f64] {
        let start = (path * self.nodes() + node) * self.dim;
        &self.states[start..start + self.dim]
    }

    pub fn path_states(&self, path: usize) -> &[f64] {
        let row = self.nodes() * self.dim;
        &self.states[path * row..(path + 1) * row]
    }

    pub fn running_sup(&self, path: usize, node: usize) -> f64 {
        self.running_sup[path * self.nodes() + node]
    }

    /// `∇X_{t_node}` of one path, row-major `d×d`.
    pub fn tangent(&self, path: usize, node: usize) -> Option<&[f64]> {
        let dd = self.dim * self.dim;
        self.tangent.as_ref().map(|t| {
            let start = (path * self.nodes() + node) * dd;
            &t[start..start + dd]
        })
    }

    pub fn prefix(&self, path: usize, node: usize) -> PathPrefix<'_> {
        let n = self.nodes();
        PathPrefix::new(
            self.path_states(path),
            &self.running_sup[path * n..(path + 1) * n],
            self.grid.nodes(),
            self.dim,
            node,
        )
    }

    /// Keeps only the first `paths` trajectories.
    pub fn truncated(&self, paths: usize) -> Self {
        let paths = paths.min(self.paths);
        let n = self.nodes();
        let states = self.states[..paths * n * self.dim].to_vec();
        let fingerprint = fingerprint(&[&states]);
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            paths,
            running_sup: self.running_sup[..paths * n].to_vec(),
            tangent: self
                .tangent
                .as_ref()
                .map(|t| t[..paths * n * self.dim * self.dim].to_vec()),
            states,
            fingerprint,
        }
    }
}

/// Euler–Maruyama trajectories `X_{i+1} = X_i + b(X_i)Δ_i + σ_i ΔW_i`.
pub fn simulate_forward(model: &ModelSpec, noise: &BrownianBundle, grid: &TimeGrid) -> Result<PathBundle> {
    let d = model.dim();
    if noise.dim() != d {
        return Err(Error::invalid(format!(
            "noise dimension {} does not match model dimension {d}",
            noise.dim()
        )));
    }
    noise.check_grid(grid)?;
    let nodes = grid.steps() + 1;
    let row = nodes * d;
    let paths = noise.paths();
    let mut states = vec![0.0; paths * row];
    par::try_fill_chunks(&mut states, row * par::CHUNK, |chunk, block| {
        let mut scratch = Scratch::new(d);
        for (k, out) in block.chunks_mut(row).enumerate() {
            let path = chunk * par::CHUNK + k;
            out[..d].copy_from_slice(model.x0());
            for i in 0..grid.steps() {
                let (done, rest) = out.split_at_mut((i + 1) * d);
                let x = &done[i * d..];
                let next = &mut rest[..d];
                model.euler_step(grid.time(i), x, grid.dt(i), noise.increment(path, i), next, &mut scratch);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SimulationDiverged { path, node: i + 1 });
                }
            }
        }
        Ok(())
    })?;
    PathBundle::from_states(grid.clone(), d, paths, states)
}

/// Euler scheme of the variational equation
/// `d∇X = ∂b(X)∇X ds + Σ_j ∂σ_{·j}(X)∇X dW^j`, `∇X_0 = I`, along every path.
pub fn simulate_tangent(model: &ModelSpec, noise: &BrownianBundle, paths: &PathBundle) -> Result<PathBundle> {
    let d = model.dim();
    if paths.dim() != d || noise.dim() != d || noise.paths() != paths.paths() {
        return Err(Error::invalid("tangent inputs disagree in dimension or path count"));
    }
    let grid = paths.grid();
    noise.check_grid(grid)?;
    let nodes = paths.nodes();
    let dd = d * d;
    let row = nodes * dd;
    let mut tangent = vec![0.0; paths.paths() * row];
    par::try_fill_chunks(&mut tangent, row * par::CHUNK, |chunk, block| {
        let mut scratch = Scratch::new(d);
        let mut jb = vec![0.0; dd];
        let mut js = vec![0.0; dd * d];
        for (k, out) in block.chunks_mut(row).enumerate() {
            let path = chunk * par::CHUNK + k;
            out[..dd].fill(0.0);
            for a in 0..d {
                out[a * d + a] = 1.0;
            }
            for i in 0..grid.steps() {
                let x = paths.state(path, i);
                model.drift_jacobian(x, &mut jb, &mut scratch)?;
                model.sigma_jacobian(x, &mut js, &mut scratch)?;
                let dt = grid.dt(i);
                let dw = noise.increment(path, i);
                let (done, rest) = out.split_at_mut((i + 1) * dd);
                let cur = &done[i * dd..];
                let next = &mut rest[..dd];
                for a in 0..d {
                    for m in 0..d {
                        let mut v = cur[a * d + m];
                        for kk in 0..d {
                            let mut coef = jb[a * d + kk] * dt;
                            for j in 0..d {
                                coef += js[(a * d + j) * d + kk] * dw[j];
                            }
                            v += coef * cur[kk * d + m];
                        }
                        next[a * d + m] = v;
                    }
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SimulationDiverged { path, node: i + 1 });
                }
            }
        }
        Ok(())
    })?;
    let mut out = paths.clone();
    out.tangent = Some(tangent);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::engine::model::*;

    fn scalar(drift: Arc<dyn Drift>, sigma: f64, x0: f64) -> ModelSpec {
        ModelSpec::new(vec![x0], drift, Diffusion::TimeOnly(Arc::new(ConstantDiffusion { sigma }))).unwrap()
    }

    #[test]
    fn brownian_is_cumulative_sum() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let noise = BrownianBundle::sample(&grid, 1, 50, 1).unwrap();
        let paths = simulate_forward(&ModelSpec::brownian(), &noise, &grid).unwrap();
        for p in 0..50 {
            let mut acc = 0.0;
            assert_eq!(paths.state(p, 0)[0], 0.0);
            let mut sup: f64 = 0.0;
            for i in 0..20 {
                acc += noise.increment(p, i)[0];
                assert_eq!(paths.state(p, i + 1)[0], acc);
                sup = sup.max(acc.abs());
            }
            assert_eq!(paths.running_sup(p, 20), sup);
        }
    }

    #[test]
    fn linear_ode_decay() {
        let grid = TimeGrid::uniform(1.0, 1000).unwrap();
        let noise = BrownianBundle::sample(&grid, 1, 1, 0).unwrap();
        let paths = simulate_forward(&scalar(Arc::new(LinearDrift { beta: -1.0 }), 0.0, 1.0), &noise, &grid).unwrap();
        let xt = paths.state(0, 1000)[0];
        assert!((xt - (-1.0f64).exp()).abs() < 2e-3, "{xt}");
    }

    #[test]
    fn running_sup_monotone_and_starts_at_x0() {
        let grid = TimeGrid::uniform(2.0, 30).unwrap();
        let noise = BrownianBundle::sample(&grid, 2, 40, 9).unwrap();
        let m = ModelSpec::new(
            vec![0.5, -0.25],
            Arc::new(SineDrift { amp: 1.0, freq: 2.0 }),
            Diffusion::State(Arc::new(TanhDiffusion {
                base: 1.0,
                amp: 0.5,
                scale: 1.0,
            })),
        )
        .unwrap();
        let paths = simulate_forward(&m, &noise, &grid).unwrap();
        for p in 0..40 {
            assert_eq!(paths.state(p, 0), &[0.5, -0.25]);
            assert_eq!(paths.running_sup(p, 0), norm(&[0.5, -0.25]));
            for i in 0..30 {
                assert!(paths.running_sup(p, i + 1) >= paths.running_sup(p, i));
            }
        }
    }

    #[test]
    fn divergence_reports_path() {
        let grid = TimeGrid::uniform(1.0, 200).unwrap();
        let noise = BrownianBundle::sample(&grid, 1, 3, 0).unwrap();
        let m = scalar(Arc::new(LinearDrift { beta: 1e6 }), 1.0, 1.0);
        assert!(matches!(
            simulate_forward(&m, &noise, &grid),
            Err(Error::SimulationDiverged { path: 0, .. })
        ));
    }

    #[test]
    fn tangent_identity_for_constant_coefficients() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let noise = BrownianBundle::sample(&grid, 2, 5, 4).unwrap();
        let m = ModelSpec::new(
            vec![0.0, 1.0],
            Arc::new(ConstantDrift { c: 0.3 }),
            Diffusion::TimeOnly(Arc::new(ConstantDiffusion { sigma: 0.7 })),
        )
        .unwrap();
        let paths = simulate_forward(&m, &noise, &grid).unwrap();
        let paths = simulate_tangent(&m, &noise, &paths).unwrap();
        for p in 0..5 {
            for i in 0..=10 {
                assert_eq!(paths.tangent(p, i).unwrap(), &[1.0, 0.0, 0.0, 1.0]);
            }
        }
    }

    #[test]
    fn tangent_linear_growth() {
        let grid = TimeGrid::uniform(1.0, 1000).unwrap();
        let noise = BrownianBundle::sample(&grid, 1, 2, 4).unwrap();
        let m = scalar(Arc::new(LinearDrift { beta: 0.5 }), 1.0, 0.2);
        let paths = simulate_tangent(&m, &noise, &simulate_forward(&m, &noise, &grid).unwrap()).unwrap();
        let v = paths.tangent(1, 1000).unwrap()[0];
        assert!((v - 0.5f64.exp()).abs() < 1e-3, "{v}");
    }
}
