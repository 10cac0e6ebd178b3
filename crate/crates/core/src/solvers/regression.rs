use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::engine::PathBundle;
use crate::par;

/// Dense design matrix, row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Regression features at a node, built from the path prefix.
pub trait Basis: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn design(&self, paths: &PathBundle, node: usize) -> Design;
}

/// All monomials of total degree `≤ degree` in `(x_1, …, x_d[, sup_{s≤t}|X_s|])`.
#[derive(Debug, Clone)]
pub struct PolynomialBasis {
    degree: usize,
    include_sup: bool,
}

impl PolynomialBasis {
    pub fn new(degree: usize, include_sup: bool) -> Self {
        Self { degree, include_sup }
    }

    /// Cubic polynomials in the state and the running supremum.
    pub fn default_cubic() -> Self {
        Self::new(3, true)
    }

    fn exponents(&self, vars: usize) -> Vec<Vec<usize>> {
        fn rec(vars: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == vars {
                out.push(cur.clone());
                return;
            }
            for e in 0..=left {
                cur.push(e);
                rec(vars, left - e, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(vars, self.degree, &mut Vec::new(), &mut out);
        out.sort_by_key(|e| e.iter().sum::<usize>());
        out
    }
}

impl Basis for PolynomialBasis {
    fn name(&self) -> String {
        format!("poly{}{}", self.degree, if self.include_sup { "+sup" } else { "" })
    }

    fn design(&self, paths: &PathBundle, node: usize) -> Design {
        let d = paths.dim();
        let vars = d + usize::from(self.include_sup);
        let exps = self.exponents(vars);
        let cols = exps.len();
        let rows = paths.paths();
        let mut data = vec![0.0; rows * cols];
        par::fill_chunks(&mut data, cols * par::CHUNK, |chunk, block| {
            let mut v = vec![0.0; vars];
            for (k, row) in block.chunks_mut(cols).enumerate() {
                let p = chunk * par::CHUNK + k;
                v[..d].copy_from_slice(paths.state(p, node));
                if self.include_sup {
                    v[d] = paths.running_sup(p, node);
                }
                for (out, e) in row.iter_mut().zip(&exps) {
                    *out = e.iter().zip(&v).map(|(&k, &x)| x.powi(k as i32)).product();
                }
            }
        });
        Design { rows, cols, data }
    }
}

/// One-hot indicator of the exact state prefix `(X_{t_0}, …, X_{t_node})`.
///
/// On an enumerated Bernoulli tree this is the saturated basis: regression
/// reproduces conditional expectations exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrefixIndicatorBasis;

impl Basis for PrefixIndicatorBasis {
    fn name(&self) -> String {
        "prefix-indicator".into()
    }

    fn design(&self, paths: &PathBundle, node: usize) -> Design {
        use std::collections::HashMap;
        let d = paths.dim();
        let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
        let labels: Vec<usize> = (0..paths.paths())
            .map(|p| {
                let key: Vec<u64> = paths.path_states(p)[..(node + 1) * d]
                    .iter()
                    .map(|v| v.to_bits())
                    .collect();
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        let cols = ids.len();
        let rows = paths.paths();
        let mut data = vec![0.0; rows * cols];
        for (p, &l) in labels.iter().enumerate() {
            data[p * cols + l] = 1.0;
        }
        Design { rows, cols, data }
    }
}

/// Least-squares projector onto the column span of a design matrix.
///
/// Columns are normalised to unit RMS and the normal equations are
/// inverted through their eigen-decomposition; eigenvalues below
/// `10⁻¹¹ · λ_max` are dropped, which yields the minimum-norm solution in
/// the normalised coordinates and flags the fit as rank-deficient.
#[derive(Debug, Clone)]
pub struct Projector {
    design: Design,
    weights: Option<Vec<f64>>,
    /// `D⁻¹ G⁺ D⁻¹` in original coordinates.
    inverse: DMatrix<f64>,
    rank: usize,
}

const RANK_TOL: f64 = 1e-11;

impl Projector {
    pub fn fit(design: Design) -> Self {
        Self::fit_inner(design, None)
    }

    /// Weighted least squares, `min Σ_p w_p (t_p − φ_p·β)²`.
    pub fn fit_weighted(design: Design, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), design.rows);
        Self::fit_inner(design, Some(weights))
    }

    fn fit_inner(design: Design, weights: Option<Vec<f64>>) -> Self {
        let k = design.cols;
        let gram = gram(&design, weights.as_deref());
        let scale: Vec<f64> = (0..k)
            .map(|j| {
                let g = gram[j * k + j];
                if g > 0.0 {
                    g.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let diagonal = (0..k).all(|i| (0..k).all(|j| i == j || gram[i * k + j] == 0.0));
        let mut inverse = DMatrix::zeros(k, k);
        let mut rank = 0;
        if diagonal {
            for j in 0..k {
                let g = gram[j * k + j];
                if g > 0.0 {
                    inverse[(j, j)] = 1.0 / g;
                    rank += 1;
                }
            }
        } else {
            let normed = DMatrix::from_fn(k, k, |i, j| gram[i * k + j] / (scale[i] * scale[j]));
            let eig = SymmetricEigen::new(normed);
            let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            let mut pinv = DMatrix::zeros(k, k);
            for (idx, &l) in eig.eigenvalues.iter().enumerate() {
                if l > RANK_TOL * lmax {
                    rank += 1;
                    let v = eig.eigenvectors.column(idx);
                    pinv += (v * v.transpose()) / l;
                }
            }
            inverse = DMatrix::from_fn(k, k, |i, j| pinv[(i, j)] / (scale[i] * scale[j]));
        }
        Self {
            design,
            weights,
            inverse,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn features(&self) -> usize {
        self.design.cols
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank < self.design.cols
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn coefficients(&self, target: &[f64]) -> Vec<f64> {
        let k = self.design.cols;
        let rhs = cross(&self.design, self.weights.as_deref(), target);
        (0..k)
            .map(|i| (0..k).map(|j| self.inverse[(i, j)] * rhs[j]).sum())
            .collect()
    }

    /// Fitted values `Φβ̂` for `target`.
    pub fn project(&self, target: &[f64]) -> Vec<f64> {
        let beta = self.coefficients(target);
        let mut out = vec![0.0; self.design.rows];
        par::fill_chunks(&mut out, par::CHUNK, |chunk, block| {
            for (k, o) in block.iter_mut().enumerate() {
                let row = self.design.row(chunk * par::CHUNK + k);
                *o = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            }
        });
        out
    }
}

fn gram(design: &Design, weights: Option<&[f64]>) -> Vec<f64> {
    let k = design.cols;
    let partials = par::map_ranges(design.rows, |range| {
        let mut g = vec![0.0; k * k];
        let mut nz = Vec::with_capacity(k);
        for r in range {
            let row = design.row(r);
            let w = weights.map_or(1.0, |w| w[r]);
            nz.clear();
            nz.extend((0..k).filter(|&j| row[j] != 0.0));
            for (a, &i) in nz.iter().enumerate() {
                let wi = w * row[i];
                for &j in &nz[a..] {
                    g[i * k + j] += wi * row[j];
                }
            }
        }
        g
    });
    let mut g = vec![0.0; k * k];
    for part in partials {
        for (a, b) in g.iter_mut().zip(part) {
            *a += b;
        }
    }
    for i in 0..k {
        for j in 0..i {
            g[i * k + j] = g[j * k + i];
        }
    }
    g
}

fn cross(design: &Design, weights: Option<&[f64]>, target: &[f64]) -> Vec<f64> {
    let k = design.cols;
    let partials = par::map_ranges(design.rows, |range| {
        let mut b = vec![0.0; k];
        for r in range {
            let w = weights.map_or(1.0, |w| w[r]) * target[r];
            if w == 0.0 {
                continue;
            }
            for (o, x) in b.iter_mut().zip(design.row(r)) {
                *o += w * x;
            }
        }
        b
    });
    let mut b = vec![0.0; k];
    for part in partials {
        for (a, v) in b.iter_mut().zip(part) {
            *a += v;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate_forward, BrownianBundle, ModelSpec, TimeGrid};

    #[test]
    fn monomial_count() {
        assert_eq!(PolynomialBasis::new(3, true).exponents(2).len(), 10);
        assert_eq!(PolynomialBasis::new(3, false).exponents(1).len(), 4);
        assert_eq!(PolynomialBasis::new(2, true).exponents(3).len(), 10);
    }

    #[test]
    fn reproduces_polynomials_exactly() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let noise = BrownianBundle::sample(&grid, 1, 500, 1).unwrap();
        let paths = simulate_forward(&ModelSpec::brownian(), &noise, &grid).unwrap();
        let proj = Projector::fit(PolynomialBasis::new(3, true).design(&paths, 3));
        assert!(!proj.rank_deficient());
        let target: Vec<f64> = (0..500)
            .map(|p| {
                let x = paths.state(p, 3)[0];
                1.0 - 2.0 * x + 0.5 * x * x * x + paths.running_sup(p, 3)
            })
            .collect();
        let fit = proj.project(&target);
        for (a, b) in fit.iter().zip(&target) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_design_is_flagged_and_returns_mean() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let noise = BrownianBundle::sample(&grid, 1, 100, 1).unwrap();
        let paths = simulate_forward(&ModelSpec::brownian(), &noise, &grid).unwrap();
        let proj = Projector::fit(PolynomialBasis::new(3, true).design(&paths, 0));
        assert!(proj.rank_deficient());
        assert_eq!(proj.rank(), 1);
        let target: Vec<f64> = (0..100).map(|p| p as f64).collect();
        let fit = proj.project(&target);
        for v in fit {
            assert!((v - 49.5).abs() < 1e-9);
        }
    }

    #[test]
    fn indicator_basis_groups_prefixes() {
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let noise = BrownianBundle::bernoulli_tree(&grid).unwrap();
        let paths = simulate_forward(&ModelSpec::brownian(), &noise, &grid).unwrap();
        for node in 0..=3 {
            let d = PrefixIndicatorBasis.design(&paths, node);
            assert_eq!(d.cols, 1 << node);
            let proj = Projector::fit(d);
            assert!(!proj.rank_deficient());
        }
    }

    #[test]
    fn weighted_fit_matches_weighted_mean() {
        let design = Design {
            rows: 4,
            cols: 1,
            data: vec![1.0; 4],
        };
        let proj = Projector::fit_weighted(design, vec![1.0, 3.0, 0.0, 4.0]);
        let fit = proj.project(&[2.0, 1.0, 100.0, 0.5]);
        assert!((fit[0] - (2.0 + 3.0 + 2.0) / 8.0).abs() < 1e-15);
    }
}
