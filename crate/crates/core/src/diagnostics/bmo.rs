use serde::{Deserialize, Serialize};

use crate::engine::PathBundle;
use crate::solvers::{Basis, Projector};
use crate::{Error, Result};

/// Grid proxy of `‖∫θ dW‖_{BMO₂}`: stopping times restricted to grid
/// nodes, conditional expectations by regression. A lower-bound proxy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoEstimate {
    pub value: f64,
    /// `sup_p Ê_i[Σ_{j≥i}|θ_j|²Δ_j]^{1/2}` per node.
    pub per_node: Vec<f64>,
    pub proxy: bool,
}

pub fn bmo_estimate(theta: &[f64], paths: &PathBundle, basis: &dyn Basis) -> Result<BmoEstimate> {
    let (np, d, n) = (paths.paths(), paths.dim(), paths.nodes() - 1);
    if theta.len() != np * n * d {
        return Err(Error::invalid("integrand shape does not match the path bundle"));
    }
    let grid = paths.grid();
    let mut tail = vec![0.0; np];
    let mut per_node = vec![0.0; n];
    for i in (0..n).rev() {
        for (p, t) in tail.iter_mut().enumerate() {
            let th = &theta[(p * n + i) * d..(p * n + i + 1) * d];
            *t += th.iter().map(|v| v * v).sum::<f64>() * grid.dt(i);
        }
        let fitted = Projector::fit(basis.design(paths, i)).project(&tail);
        per_node[i] = fitted.iter().fold(0.0, |m: f64, v| m.max(v.max(0.0).sqrt()));
    }
    Ok(BmoEstimate {
        value: per_node.iter().copied().fold(0.0, f64::max),
        per_node,
        proxy: true,
    })
}

/// `φ(p) = (1 + p⁻² log((2p−1)/(2p−2)))^{1/2} − 1`, strictly decreasing on `(1, ∞)`.
pub fn phi(p: f64) -> f64 {
    let u = (1.0 / (2.0 * p - 2.0)).ln_1p() / (p * p);
    u / ((1.0 + u).sqrt() + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// BMO norm too large: `p*` pinned near 1.
    Lower,
    /// BMO norm below `φ(10⁶)`: `p*` capped at the bracket.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PStar {
    pub p: f64,
    pub saturation: Option<Saturation>,
}

const BRACKET: (f64, f64) = (1.0 + 1e-12, 1e6);

/// Exponents at or below this count as saturated near 1.
const SATURATION_P: f64 = 1.0 + 1e-6;

/// `p* = φ⁻¹(bmo)` by bisection on `(1, 10⁶)` to relative `10⁻¹⁰`.
pub fn pstar_from_bmo(bmo: f64) -> Result<PStar> {
    if !(bmo > 0.0) || bmo.is_nan() {
        return Err(Error::invalid(format!("BMO norm must be positive, got {bmo}")));
    }
    let (mut lo, mut hi) = BRACKET;
    if bmo >= phi(lo) {
        return Ok(PStar {
            p: lo,
            saturation: Some(Saturation::Lower),
        });
    }
    if bmo <= phi(hi) {
        return Ok(PStar {
            p: hi,
            saturation: Some(Saturation::Upper),
        });
    }
    while hi - lo > 1e-10 * lo {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > bmo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    Ok(PStar {
        p,
        saturation: (bmo >= phi(SATURATION_P)).then_some(Saturation::Lower),
    })
}
