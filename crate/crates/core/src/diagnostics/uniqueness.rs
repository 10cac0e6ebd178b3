use serde::{Deserialize, Serialize};

use super::moments::ClassMembershipReport;
use crate::solvers::{BsdeSolution, SolverMethod};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessVerdict {
    pub method_a: SolverMethod,
    pub method_b: SolverMethod,
    pub mean_abs: Vec<f64>,
    pub max_abs: Vec<f64>,
    /// `sup_i mean_p |δY_{t_i}|`, the statistic compared to the budget.
    pub sup_mean: f64,
    pub sup_max: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub scheme_tol: f64,
    pub budget: f64,
    pub pass: bool,
    /// `mean_p Σ_i |δZ_{t_i}|²Δ_i`.
    pub dz_integrated: f64,
    #[serde(default)]
    pub classes: Vec<ClassMembershipReport>,
}

impl UniquenessVerdict {
    /// Attaches class-membership reports; the verdict then also requires
    /// every ladder entry to look finite.
    pub fn with_classes(mut self, classes: Vec<ClassMembershipReport>) -> Self {
        self.pass &= classes.iter().all(|c| c.all_finite_looking);
        self.classes = classes;
        self
    }
}

/// Compares two solutions on one bundle against
/// `3·(se_a + se_b) + scheme_tol`. Symmetric in its arguments.
pub fn uniqueness_probe(a: &BsdeSolution, b: &BsdeSolution, scheme_tol: f64) -> Result<UniquenessVerdict> {
    if a.grid() != b.grid() || a.paths() != b.paths() || a.dim() != b.dim() || a.bundle_fingerprint() != b.bundle_fingerprint() {
        return Err(Error::invalid("solutions live on different grids or path bundles"));
    }
    let (np, nodes) = (a.paths(), a.nodes());
    let mut mean_abs = vec![0.0; nodes];
    let mut max_abs = vec![0.0f64; nodes];
    let mut dz = 0.0;
    for p in 0..np {
        for i in 0..nodes {
            let dy = (a.y(p, i) - b.y(p, i)).abs();
            mean_abs[i] += dy;
            max_abs[i] = max_abs[i].max(dy);
            if i + 1 < nodes {
                let s: f64 = a.z(p, i).iter().zip(b.z(p, i)).map(|(u, v)| (u - v).powi(2)).sum();
                dz += s * a.grid().dt(i);
            }
        }
    }
    for m in &mut mean_abs {
        *m /= np as f64;
    }
    let (se_a, se_b) = (a.se(), b.se());
    let budget = 3.0 * (se_a + se_b) + scheme_tol;
    let sup_mean = mean_abs.iter().copied().fold(0.0, f64::max);
    Ok(UniquenessVerdict {
        method_a: a.method(),
        method_b: b.method(),
        sup_max: max_abs.iter().copied().fold(0.0, f64::max),
        mean_abs,
        max_abs,
        sup_mean,
        se_a,
        se_b,
        scheme_tol,
        budget,
        pass: sup_mean <= budget,
        dz_integrated: dz / np as f64,
        classes: Vec::new(),
    })
}
