use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Drift `b: R^d → R^d`.
pub trait Drift: Send + Sync + fmt::Debug {
    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Row-major Jacobian `∂b_a/∂x_k` at `a·d + k`; `false` when no analytic
    /// form is provided.
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Lipschitz constant `K_b`.
    fn lipschitz(&self) -> f64;

    fn is_zero(&self) -> bool {
        false
    }
}

/// Time-only diffusion `σ(s)` of the additive-noise model.
pub trait TimeDiffusion: Send + Sync + fmt::Debug {
    /// Row-major `d×d` matrix.
    fn eval(&self, t: f64, out: &mut [f64]);
    /// Bound of `|σ(s)|` on `[0, horizon]`.
    fn bound(&self, horizon: f64) -> f64;
}

/// State-dependent diffusion `σ(x)`.
pub trait StateDiffusion: Send + Sync + fmt::Debug {
    /// Row-major `d×d` matrix.
    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// `∂σ_{aj}/∂x_k` at `(a·d + j)·d + k`.
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// `|σ|_∞` in operator norm.
    fn bound(&self) -> f64;

    /// `K_σ`.
    fn lipschitz(&self) -> f64;
}

#[derive(Debug, Clone)]
pub enum Diffusion {
    /// Additive noise, `σ = σ(s)`.
    TimeOnly(Arc<dyn TimeDiffusion>),
    /// `σ = σ(x)`, bounded and Lipschitz.
    State(Arc<dyn StateDiffusion>),
}

/// Forward diffusion `dX = b(X) ds + σ dW`, `X_0 = x`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    x0: Vec<f64>,
    drift: Arc<dyn Drift>,
    diffusion: Diffusion,
    fd_fallback: bool,
}

/// Central-difference step for derivative fallbacks.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

impl ModelSpec {
    pub fn new(x0: Vec<f64>, drift: Arc<dyn Drift>, diffusion: Diffusion) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::invalid("initial point must have at least one component"));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial point must be finite"));
        }
        Ok(Self {
            x0,
            drift,
            diffusion,
            fd_fallback: true,
        })
    }

    /// Scalar Brownian motion started at 0.
    pub fn brownian() -> Self {
        Self::new(
            vec![0.0],
            Arc::new(ZeroDrift),
            Diffusion::TimeOnly(Arc::new(ConstantDiffusion { sigma: 1.0 })),
        )
        .expect("valid")
    }

    pub fn with_fd_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn drift(&self) -> &Arc<dyn Drift> {
        &self.drift
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn fd_fallback(&self) -> bool {
        self.fd_fallback
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.diffusion, Diffusion::TimeOnly(_))
    }

    pub fn sigma(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::TimeOnly(s) => s.eval(t, out),
            Diffusion::State(s) => s.eval(x, out),
        }
    }

    /// `|σ|_∞` reported by the diffusion.
    pub fn sigma_bound(&self, horizon: f64) -> f64 {
        match &self.diffusion {
            Diffusion::TimeOnly(s) => s.bound(horizon),
            Diffusion::State(s) => s.bound(),
        }
    }

    /// One Euler–Maruyama step `x + b(x)Δ + σ ΔW` written into `out`.
    pub(crate) fn euler_step(
        &self,
        t: f64,
        x: &[f64],
        dt: f64,
        dw: &[f64],
        out: &mut [f64],
        scratch: &mut Scratch,
    ) {
        let d = x.len();
        self.drift.eval(x, &mut scratch.b);
        self.sigma(t, x, &mut scratch.sigma);
        for a in 0..d {
            let mut v = x[a] + scratch.b[a] * dt;
            let row = &scratch.sigma[a * d..(a + 1) * d];
            for j in 0..d {
                v += row[j] * dw[j];
            }
            out[a] = v;
        }
    }

    pub(crate) fn drift_jacobian(&self, x: &[f64], out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
        if self.drift.jacobian(x, out) {
            return Ok(());
        }
        if !self.fd_fallback {
            return Err(Error::CapabilityMissing(
                "drift has no analytic Jacobian and finite differences are disabled".into(),
            ));
        }
        let d = x.len();
        let xb = &mut scratch.bump;
        xb.copy_from_slice(x);
        let (up, down) = (&mut scratch.up, &mut scratch.down);
        for k in 0..d {
            let h = fd_step(x[k]);
            xb[k] = x[k] + h;
            self.drift.eval(xb, up);
            xb[k] = x[k] - h;
            self.drift.eval(xb, down);
            xb[k] = x[k];
            for a in 0..d {
                out[a * d + k] = (up[a] - down[a]) / (2.0 * h);
            }
        }
        Ok(())
    }

    /// `∂σ_{aj}/∂x_k`; all zeros for additive noise.
    pub(crate) fn sigma_jacobian(&self, x: &[f64], out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
        let s = match &self.diffusion {
            Diffusion::TimeOnly(_) => {
                out.fill(0.0);
                return Ok(());
            }
            Diffusion::State(s) => s,
        };
        if s.jacobian(x, out) {
            return Ok(());
        }
        if !self.fd_fallback {
            return Err(Error::CapabilityMissing(
                "diffusion has no analytic Jacobian and finite differences are disabled".into(),
            ));
        }
        let d = x.len();
        let xb = &mut scratch.bump;
        xb.copy_from_slice(x);
        let (up, down) = (&mut scratch.sig_up, &mut scratch.sig_down);
        for k in 0..d {
            let h = fd_step(x[k]);
            xb[k] = x[k] + h;
            s.eval(xb, up);
            xb[k] = x[k] - h;
            s.eval(xb, down);
            xb[k] = x[k];
            for aj in 0..d * d {
                out[aj * d + k] = (up[aj] - down[aj]) / (2.0 * h);
            }
        }
        Ok(())
    }
}

/// Per-thread buffers for the step functions.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    bump: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
    sig_up: Vec<f64>,
    sig_down: Vec<f64>,
}

impl Scratch {
    pub fn new(d: usize) -> Self {
        Self {
            b: vec![0.0; d],
            sigma: vec![0.0; d * d],
            bump: vec![0.0; d],
            up: vec![0.0; d],
            down: vec![0.0; d],
            sig_up: vec![0.0; d * d],
            sig_down: vec![0.0; d * d],
        }
    }
}

fn write_diag(out: &mut [f64], d: usize, mut value: impl FnMut(usize) -> f64) {
    out.fill(0.0);
    for k in 0..d {
        out[k * d + k] = value(k);
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDrift;

impl Drift for ZeroDrift {
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `b(x) = c` in every component.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDrift {
    pub c: f64,
}

impl Drift for ConstantDrift {
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(self.c);
    }
    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        self.c == 0.0
    }
}

/// `b(x) = βx`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDrift {
    pub beta: f64,
}

impl Drift for LinearDrift {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.beta * v;
        }
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        write_diag(out, x.len(), |_| self.beta);
        true
    }
    fn lipschitz(&self) -> f64 {
        self.beta.abs()
    }
    fn is_zero(&self) -> bool {
        self.beta == 0.0
    }
}

/// `b(x)_k = amp · sin(freq · x_k)`; no analytic Jacobian, so it exercises
/// the finite-difference path.
#[derive(Debug, Clone, Copy)]
pub struct SineDrift {
    pub amp: f64,
    pub freq: f64,
}

impl Drift for SineDrift {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.amp * (self.freq * v).sin();
        }
    }
    fn lipschitz(&self) -> f64 {
        (self.amp * self.freq).abs()
    }
}

/// `σ(s) = σ·I`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDiffusion {
    pub sigma: f64,
}

impl TimeDiffusion for ConstantDiffusion {
    fn eval(&self, _t: f64, out: &mut [f64]) {
        let d = (out.len() as f64).sqrt() as usize;
        write_diag(out, d, |_| self.sigma);
    }
    fn bound(&self, _horizon: f64) -> f64 {
        self.sigma.abs()
    }
}

/// `σ(s) = (s0 + s1·s)·I`.
#[derive(Debug, Clone, Copy)]
pub struct TimeLinearDiffusion {
    pub s0: f64,
    pub s1: f64,
}

impl TimeDiffusion for TimeLinearDiffusion {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let d = (out.len() as f64).sqrt() as usize;
        write_diag(out, d, |_| self.s0 + self.s1 * t);
    }
    fn bound(&self, horizon: f64) -> f64 {
        self.s0.abs().max((self.s0 + self.s1 * horizon).abs())
    }
}

/// `σ(x) = σ·I` declared as state-dependent, i.e. the (F2) setting with a
/// constant coefficient.
#[derive(Debug, Clone, Copy)]
pub struct StateConstantDiffusion {
    pub sigma: f64,
}

impl StateDiffusion for StateConstantDiffusion {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        write_diag(out, x.len(), |_| self.sigma);
    }
    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn bound(&self) -> f64 {
        self.sigma.abs()
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

/// `σ(x) = diag(base + amp · tanh(scale · x_k))`.
#[derive(Debug, Clone, Copy)]
pub struct TanhDiffusion {
    pub base: f64,
    pub amp: f64,
    pub scale: f64,
}

impl StateDiffusion for TanhDiffusion {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        write_diag(out, x.len(), |k| self.base + self.amp * (self.scale * x[k]).tanh());
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        let d = x.len();
        out.fill(0.0);
        for k in 0..d {
            let th = (self.scale * x[k]).tanh();
            out[(k * d + k) * d + k] = self.amp * self.scale * (1.0 - th * th);
        }
        true
    }
    fn bound(&self) -> f64 {
        self.base.abs() + self.amp.abs()
    }
    fn lipschitz(&self) -> f64 {
        (self.amp * self.scale).abs()
    }
}
