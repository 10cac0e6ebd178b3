use serde::{Deserialize, Serialize};

use crate::solvers::BsdeSolution;
use crate::Result;

/// Monte-Carlo estimate of `E[e^{qV}]`, accumulated in the log domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub q: f64,
    pub samples: usize,
    pub log_mean: f64,
    /// `exp(log_mean)`; may be `inf` for unstable moments.
    pub mean: f64,
    pub se: f64,
}

impl MomentEstimate {
    pub fn finite(&self) -> bool {
        self.mean.is_finite()
    }
}

/// `E[e^{q·v}]` over samples `v`.
pub fn exp_moment_of(samples: &[f64], q: f64) -> MomentEstimate {
    let n = samples.len() as f64;
    let m = samples.iter().map(|v| q * v).fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = samples.iter().map(|v| (q * v - m).exp()).collect();
    let mean_s = scaled.iter().sum::<f64>() / n;
    let var_s = if samples.len() > 1 {
        scaled.iter().map(|w| (w - mean_s).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let log_mean = m + mean_s.ln();
    MomentEstimate {
        q,
        samples: samples.len(),
        log_mean,
        mean: log_mean.exp(),
        se: m.exp() * (var_s / n).sqrt(),
    }
}

/// `Y* = max_i |Y_{t_i}|` per path.
pub fn y_star(solution: &BsdeSolution) -> Vec<f64> {
    (0..solution.paths())
        .map(|p| solution.y_path(p).iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        .collect()
}

/// `E[e^{q·Y*}]`.
pub fn exp_moment(solution: &BsdeSolution, q: f64) -> Result<MomentEstimate> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(crate::Error::invalid(format!("moment order must be positive, got {q}")));
    }
    Ok(exp_moment_of(&y_star(solution), q))
}

/// Ladder exponent `q = 2p·K_z·(1+ε)/(p−1)`.
pub fn ladder_q(p: f64, k_z: f64, eps: f64) -> f64 {
    2.0 * p * k_z * (1.0 + eps) / (p - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub p: f64,
    pub eps: f64,
    pub q: f64,
    pub estimate: MomentEstimate,
    /// The same estimator on the first half of the paths.
    pub half: MomentEstimate,
    /// `|estimate − half| / estimate` in the log-stable form.
    pub drift: f64,
    pub finite_looking: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMembershipReport {
    pub k_z: f64,
    pub tolerance: f64,
    pub entries: Vec<ClassEntry>,
    pub all_finite_looking: bool,
}

/// Largest relative drift under sample doubling still called finite-looking.
pub const STABILITY_TOL: f64 = 0.2;

pub const DEFAULT_P_GRID: [f64; 3] = [1.5, 2.0, 4.0];
pub const DEFAULT_EPS_GRID: [f64; 3] = [0.1, 0.5, 1.0];

/// Exponential moments of `Y*` along the ladder; an entry is
/// "finite-looking" when the estimate moves by at most 20% between the
/// first half of the paths and all of them.
pub fn class_membership(solution: &BsdeSolution, k_z: f64, ps: &[f64], eps: &[f64]) -> Result<ClassMembershipReport> {
    if !(k_z > 0.0 && k_z.is_finite()) {
        return Err(crate::Error::invalid(format!("K_z must be positive, got {k_z}")));
    }
    if let Some(p) = ps.iter().find(|p| !(**p > 1.0)) {
        return Err(crate::Error::invalid(format!("ladder exponents must exceed 1, got {p}")));
    }
    let ys = y_star(solution);
    let half = &ys[..(ys.len() / 2).max(1)];
    let mut entries = Vec::with_capacity(ps.len() * eps.len());
    for &p in ps {
        for &e in eps {
            let q = ladder_q(p, k_z, e);
            let full = exp_moment_of(&ys, q);
            let h = exp_moment_of(half, q);
            let drift = (h.log_mean - full.log_mean).exp_m1().abs();
            entries.push(ClassEntry {
                p,
                eps: e,
                q,
                finite_looking: full.finite() && h.finite() && drift <= STABILITY_TOL,
                estimate: full,
                half: h,
                drift,
            });
        }
    }
    Ok(ClassMembershipReport {
        k_z,
        tolerance: STABILITY_TOL,
        all_finite_looking: entries.iter().all(|e| e.finite_looking),
        entries,
    })
}
