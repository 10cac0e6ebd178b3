use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::driver::{Driver, DriverForm, ZeroDriver};
use crate::engine::{PathFunctional, PathPrefix, ZeroFunctional};
use crate::{Error, Result};

/// Structural constants declared alongside the BSDE data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Lipschitz constant of the driver in `y`.
    pub k_y: f64,
    /// Lipschitz constant of `∇_z` of the driver.
    pub k_z: f64,
    /// Path-Lipschitz constant of `g`.
    #[serde(default)]
    pub k_g: f64,
    /// Path-Lipschitz constant of `h`.
    #[serde(default)]
    pub k_h: f64,
    /// `sup |∇_z f(s,y,0)| + |∇_z g(x,y,0)|`.
    #[serde(default)]
    pub m_z: f64,
    /// Growth exponent of the local Lipschitz bounds, in `[0, 1)`; absent
    /// for globally Lipschitz `h` and `g`.
    #[serde(default)]
    pub r: Option<f64>,
    /// Uniform bound on `|f|`.
    #[serde(default)]
    pub c_f: Option<f64>,
    /// Bound on `|ξ|`.
    #[serde(default)]
    pub m_xi: Option<f64>,
}

impl Constants {
    pub fn new(k_y: f64, k_z: f64) -> Self {
        Self {
            k_y,
            k_z,
            k_g: 0.0,
            k_h: 0.0,
            m_z: 0.0,
            r: None,
            c_f: None,
            m_xi: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("k_y", Some(self.k_y)),
            ("k_z", Some(self.k_z)),
            ("k_g", Some(self.k_g)),
            ("k_h", Some(self.k_h)),
            ("m_z", Some(self.m_z)),
            ("c_f", self.c_f),
            ("m_xi", self.m_xi),
        ];
        for (field, v) in named {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::schema(field, format!("must be finite and nonnegative, got {v}")));
                }
            }
        }
        if let Some(r) = self.r {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::schema("r", format!("r must lie in [0,1), got {r}")));
            }
        }
        Ok(())
    }
}

/// BSDE data `(ξ, f, g, h)` with declared constants.
///
/// The full driver is `F = f + g`; `f` is the bounded time-only part and `g`
/// may read the path prefix. The terminal value is `ξ + h(X)`.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub f: Arc<dyn Driver>,
    pub g: Arc<dyn Driver>,
    pub h: Arc<dyn PathFunctional>,
    pub xi: Arc<dyn PathFunctional>,
    pub constants: Constants,
    fd_fallback: bool,
}

impl GeneratorSpec {
    pub fn new(
        f: Arc<dyn Driver>,
        g: Arc<dyn Driver>,
        h: Arc<dyn PathFunctional>,
        xi: Arc<dyn PathFunctional>,
        constants: Constants,
    ) -> Result<Self> {
        constants.validate()?;
        Ok(Self {
            f,
            g,
            h,
            xi,
            constants,
            fd_fallback: true,
        })
    }

    /// Path driver `g` with terminal `h`; `f = 0`, `ξ = 0`.
    pub fn path_only(g: Arc<dyn Driver>, h: Arc<dyn PathFunctional>, constants: Constants) -> Result<Self> {
        Self::new(Arc::new(ZeroDriver), g, h, Arc::new(ZeroFunctional), constants)
    }

    pub fn with_fd_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    pub fn form(&self) -> DriverForm {
        self.f.form().combine(self.g.form())
    }

    /// `f(t,y,z) + g(prefix,y,z)` without the finiteness check.
    #[inline]
    pub fn driver(&self, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64]) -> f64 {
        self.f.value(t, path, y, z) + self.g.value(t, path, y, z)
    }

    pub fn eval_driver(&self, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64]) -> Result<f64> {
        let v = self.driver(t, path, y, z);
        if !v.is_finite() {
            return Err(Error::DriverEvaluation(format!(
                "{} + {} is not finite at t={t}, y={y}, z={z:?}",
                self.f.name(),
                self.g.name()
            )));
        }
        Ok(v)
    }

    /// `ξ + h` on the stopped path.
    pub fn terminal(&self, path: &PathPrefix<'_>) -> f64 {
        self.xi.value(path) + self.h.value(path)
    }

    /// `∇_z (f + g)`.
    pub fn grad_z(&self, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        grad_z_of(&[self.f.as_ref(), self.g.as_ref()], self.fd_fallback, t, path, y, z, out)
    }

    /// `∇_z g` alone.
    pub fn grad_z_g(&self, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        grad_z_of(&[self.g.as_ref()], self.fd_fallback, t, path, y, z, out)
    }

    /// `∇_z f` alone.
    pub fn grad_z_f(&self, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        grad_z_of(&[self.f.as_ref()], self.fd_fallback, t, path, y, z, out)
    }
}

fn grad_z_of(
    terms: &[&dyn Driver],
    fd_fallback: bool,
    t: f64,
    path: &PathPrefix<'_>,
    y: f64,
    z: &[f64],
    out: &mut [f64],
) -> Result<()> {
    out.fill(0.0);
    let mut buf = vec![0.0; z.len()];
    for d in terms {
        if !d.grad_z(t, path, y, z, &mut buf) {
            if !fd_fallback {
                return Err(Error::CapabilityMissing(format!(
                    "driver `{}` has no analytic z-gradient and finite differences are disabled",
                    d.name()
                )));
            }
            fd_grad(*d, t, path, y, z, &mut buf);
        }
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += b;
        }
    }
    Ok(())
}

/// Central differences in each `z_k` with step `10⁻⁶(1 + |z_k|)`.
pub fn fd_grad(d: &dyn Driver, t: f64, path: &PathPrefix<'_>, y: f64, z: &[f64], out: &mut [f64]) {
    let mut zb = z.to_vec();
    for k in 0..z.len() {
        let h = 1e-6 * (1.0 + z[k].abs());
        zb[k] = z[k] + h;
        let up = d.value(t, path, y, &zb);
        zb[k] = z[k] - h;
        let down = d.value(t, path, y, &zb);
        zb[k] = z[k];
        out[k] = (up - down) / (2.0 * h);
    }
}
