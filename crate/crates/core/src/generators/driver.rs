use std::fmt;
use std::sync::Arc;

use crate::engine::PathPrefix;

/// Algebraic shape of a driver, used to pick closed-form oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriverForm {
    Zero,
    /// `f ≡ c`.
    Constant(f64),
    /// `f(y) = a·y`.
    LinearY(f64),
    /// `f(z) = γ|z|²`.
    Quadratic(f64),
    General,
}

impl DriverForm {
    pub fn combine(self, other: Self) -> Self {
        use DriverForm::*;
        match (self, other) {
            (Zero, x) | (x, Zero) => x,
            (Constant(a), Constant(b)) => Constant(a + b),
            (LinearY(a), LinearY(b)) => LinearY(a + b),
            (Quadratic(a), Quadratic(b)) => Quadratic(a + b),
            _ => General,
        }
    }
}

/// Driver term `(t, path prefix, y, z) ↦ R`, with `z` a `1×d` row.
///
/// Time-only drivers (`f`) ignore the path; path drivers (`g`) read it only
/// up to `path.node()`.
pub trait Driver: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn value(&self, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64]) -> f64;

    /// Writes `∇_z` into `out`; `false` when no analytic gradient exists.
    fn grad_z(&self, _t: f64, _path: &PathPrefix<'_>, _y: f64, _z: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn path_dependent(&self) -> bool {
        false
    }

    fn form(&self) -> DriverForm {
        DriverForm::General
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDriver;

impl Driver for ZeroDriver {
    fn name(&self) -> &str {
        "zero"
    }
    fn value(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, _z: &[f64]) -> f64 {
        0.0
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, _z: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn form(&self) -> DriverForm {
        DriverForm::Zero
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantDriver {
    pub c: f64,
}

impl Driver for ConstantDriver {
    fn name(&self) -> &str {
        "constant"
    }
    fn value(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, _z: &[f64]) -> f64 {
        self.c
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, _z: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn form(&self) -> DriverForm {
        DriverForm::Constant(self.c)
    }
}

/// `f(y) = a·y`.
#[derive(Debug, Clone, Copy)]
pub struct LinearYDriver {
    pub a: f64,
}

impl Driver for LinearYDriver {
    fn name(&self) -> &str {
        "linear_y"
    }
    fn value(&self, _t: f64, _p: &PathPrefix<'_>, y: f64, _z: &[f64]) -> f64 {
        self.a * y
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, _z: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn form(&self) -> DriverForm {
        DriverForm::LinearY(self.a)
    }
}

/// `γ|z|²`; `γ = ½` is the Cole–Hopf driver.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticDriver {
    pub gamma: f64,
}

impl Driver for QuadraticDriver {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn value(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, z: &[f64]) -> f64 {
        self.gamma * z.iter().map(|v| v * v).sum::<f64>()
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, z: &[f64], out: &mut [f64]) -> bool {
        for (o, v) in out.iter_mut().zip(z) {
            *o = 2.0 * self.gamma * v;
        }
        true
    }
    fn form(&self) -> DriverForm {
        DriverForm::Quadratic(self.gamma)
    }
}

/// `|z|²/2 + γ′ Σ_i cos(z_i)`: quadratic growth, indefinite Hessian
/// `1 − γ′cos(z_i)`, gradient Lipschitz with constant `1 + γ′`.
#[derive(Debug, Clone, Copy)]
pub struct NonConvexDriver {
    pub gamma_prime: f64,
}

impl Default for NonConvexDriver {
    fn default() -> Self {
        Self { gamma_prime: 2.0 }
    }
}

impl Driver for NonConvexDriver {
    fn name(&self) -> &str {
        "nonconvex"
    }
    fn value(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, z: &[f64]) -> f64 {
        z.iter().map(|v| 0.5 * v * v + self.gamma_prime * v.cos()).sum()
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, z: &[f64], out: &mut [f64]) -> bool {
        for (o, v) in out.iter_mut().zip(z) {
            *o = v - self.gamma_prime * v.sin();
        }
        true
    }
}

/// `scale · tanh(a_y·y + a_z·Σ z_i)`; bounded by `|scale|`.
#[derive(Debug, Clone, Copy)]
pub struct TanhDriver {
    pub scale: f64,
    pub a_y: f64,
    pub a_z: f64,
}

impl Driver for TanhDriver {
    fn name(&self) -> &str {
        "tanh"
    }
    fn value(&self, _t: f64, _p: &PathPrefix<'_>, y: f64, z: &[f64]) -> f64 {
        self.scale * (self.a_y * y + self.a_z * z.iter().sum::<f64>()).tanh()
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, y: f64, z: &[f64], out: &mut [f64]) -> bool {
        let th = (self.a_y * y + self.a_z * z.iter().sum::<f64>()).tanh();
        out.fill(self.scale * self.a_z * (1.0 - th * th));
        true
    }
}

/// `c · (sup_{s≤t}|X_s|)^p`, a path-dependent source term free of `y, z`.
#[derive(Debug, Clone, Copy)]
pub struct PathSupDriver {
    pub c: f64,
    pub power: f64,
}

impl Driver for PathSupDriver {
    fn name(&self) -> &str {
        "path_sup"
    }
    fn value(&self, _t: f64, p: &PathPrefix<'_>, _y: f64, _z: &[f64]) -> f64 {
        self.c * p.sup().powf(self.power)
    }
    fn grad_z(&self, _t: f64, _p: &PathPrefix<'_>, _y: f64, _z: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn path_dependent(&self) -> bool {
        true
    }
}

/// Pointwise sum of drivers.
#[derive(Debug, Clone)]
pub struct SumDriver {
    terms: Vec<Arc<dyn Driver>>,
    name: String,
}

impl SumDriver {
    pub fn new(terms: Vec<Arc<dyn Driver>>) -> Self {
        let name = terms.iter().map(|t| t.name()).collect::<Vec<_>>().join("+");
        Self { terms, name }
    }

    pub fn terms(&self) -> &[Arc<dyn Driver>] {
        &self.terms
    }
}

impl Driver for SumDriver {
    fn name(&self) -> &str {
        &self.name
    }
    fn value(&self, t: f64, p: &PathPrefix<'_>, y: f64, z: &[f64]) -> f64 {
        self.terms.iter().map(|d| d.value(t, p, y, z)).sum()
    }
    fn grad_z(&self, t: f64, p: &PathPrefix<'_>, y: f64, z: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        for d in &self.terms {
            if !d.grad_z(t, p, y, z, &mut buf) {
                return false;
            }
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        true
    }
    fn path_dependent(&self) -> bool {
        self.terms.iter().any(|d| d.path_dependent())
    }
    fn form(&self) -> DriverForm {
        self.terms
            .iter()
            .fold(DriverForm::Zero, |acc, d| acc.combine(d.form()))
    }
}
