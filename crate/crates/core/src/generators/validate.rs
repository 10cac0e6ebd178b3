use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spec::GeneratorSpec;
use crate::engine::{norm, PathPrefix, TimeGrid};
use crate::{Error, Result};

/// Which declared property a probe sample contradicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthCheck {
    /// `|F| ≤ |F(0,0)| + |∇_zF(0,0)|²/(4η) + K_y|y| + (K_z/2 + η)|z|²`.
    QuadraticGrowth,
    /// `|F(y,z) − F(y′,z)| ≤ K_y|y − y′|`.
    LipschitzY,
    /// `|∇_zF(z) − ∇_zF(z′)| ≤ K_z|z − z′|`.
    GradientLipschitz,
    /// `|f| ≤ C_f`.
    BoundedF,
    /// `|∇_z f(s,y,0)| + |∇_z g(x,y,0)| ≤ M_z`.
    GradientAtZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: GrowthCheck,
    pub t: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: GrowthCheck,
    pub samples: usize,
    pub violations: usize,
    /// `max(lhs − rhs)`; negative when every sample has room to spare.
    pub max_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub eta: f64,
    pub samples: usize,
    pub dim: usize,
    pub checks: Vec<CheckSummary>,
    /// First few offending samples per check.
    pub examples: Vec<Violation>,
}

impl GrowthReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn violations_of(&self, check: GrowthCheck) -> usize {
        self.checks
            .iter()
            .find(|c| c.check == check)
            .map_or(0, |c| c.violations)
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

/// Relative slack granted to every comparison for round-off.
const PROBE_TOL: f64 = 1e-7;
const KEEP_EXAMPLES: usize = 3;

struct Tally {
    summary: CheckSummary,
    examples: Vec<Violation>,
}

impl Tally {
    fn new(check: GrowthCheck) -> Self {
        Self {
            summary: CheckSummary {
                check,
                samples: 0,
                violations: 0,
                max_slack: f64::NEG_INFINITY,
            },
            examples: Vec::new(),
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, t: f64, y: f64, z: &[f64]) {
        self.summary.samples += 1;
        self.summary.max_slack = self.summary.max_slack.max(lhs - rhs);
        let bad = !lhs.is_finite() || lhs > rhs + PROBE_TOL * (1.0 + rhs.abs());
        if bad {
            self.summary.violations += 1;
            if self.examples.len() < KEEP_EXAMPLES {
                self.examples.push(Violation {
                    check: self.summary.check,
                    t,
                    y,
                    z: z.to_vec(),
                    lhs,
                    rhs,
                });
            }
        }
    }
}

/// Probes the declared constants of `spec` at random `(t, path, y, z)`
/// in dimension `dim`.
///
/// Times are uniform on `[0, 1]`, `y` is uniform on `[−10, 10]` and `|z|`
/// is log-uniform on `[10⁻², 10³]` so that quadratic-growth
/// misdeclarations surface at large `|z|`. Path prefixes are scaled
/// Gaussian walks on an 8-step grid.
pub fn validate_growth(spec: &GeneratorSpec, dim: usize, samples: usize, eta: f64, seed: u64) -> Result<GrowthReport> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let c = spec.constants;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 8;
    let grid = TimeGrid::uniform(1.0, steps)?;
    let mut states = vec![0.0; (steps + 1) * dim];
    let mut sup = vec![0.0; steps + 1];

    let mut growth = Tally::new(GrowthCheck::QuadraticGrowth);
    let mut lip_y = Tally::new(GrowthCheck::LipschitzY);
    let mut lip_grad = Tally::new(GrowthCheck::GradientLipschitz);
    let mut bounded = Tally::new(GrowthCheck::BoundedF);
    let mut at_zero = Tally::new(GrowthCheck::GradientAtZero);

    let zero = vec![0.0; dim];
    let (mut g0, mut g1, mut g2, mut gf, mut gg) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    for _ in 0..samples {
        let scale: f64 = rng.random_range(0.1..3.0);
        let mut running = 0.0f64;
        for (i, row) in states.chunks_mut(dim).enumerate() {
            for v in row.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v = scale * g;
            }
            running = running.max(norm(row));
            sup[i] = running;
        }
        let node = rng.random_range(0..=steps);
        let p = PathPrefix::new(&states, &sup, grid.nodes(), dim, node);
        let t: f64 = rng.random_range(0.0..1.0);
        let y: f64 = rng.random_range(-10.0..10.0);
        let radius = 10f64.powf(rng.random_range(-2.0..3.0));
        let mut z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let zn = norm(&z).max(1e-300);
        z.iter_mut().for_each(|v| *v *= radius / zn);

        let f_yz = spec.driver(t, &p, y, &z);
        let f_00 = spec.driver(t, &p, 0.0, &zero);
        spec.grad_z(t, &p, 0.0, &zero, &mut g0)?;
        let rhs = f_00.abs()
            + norm(&g0).powi(2) / (4.0 * eta)
            + c.k_y * y.abs()
            + (c.k_z / 2.0 + eta) * radius * radius;
        growth.record(f_yz.abs(), rhs, t, y, &z);

        let y2: f64 = rng.random_range(-10.0..10.0);
        let f_y2 = spec.driver(t, &p, y2, &z);
        lip_y.record((f_yz - f_y2).abs(), c.k_y * (y - y2).abs(), t, y, &z);

        let step = 10f64.powf(rng.random_range(-3.0..0.5));
        let z2: Vec<f64> = z
            .iter()
            .map(|v| v + step * rng.random_range(-1.0..1.0))
            .collect();
        spec.grad_z(t, &p, y, &z, &mut g1)?;
        spec.grad_z(t, &p, y, &z2, &mut g2)?;
        let dg: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = z.iter().zip(&z2).map(|(a, b)| a - b).collect();
        lip_grad.record(norm(&dg), c.k_z * norm(&dz), t, y, &z);

        if let Some(cf) = c.c_f {
            bounded.record(spec.f.value(t, &p, y, &z).abs(), cf, t, y, &z);
        }

        spec.grad_z_f(t, &p, y, &zero, &mut gf)?;
        spec.grad_z_g(t, &p, y, &zero, &mut gg)?;
        at_zero.record(norm(&gf) + norm(&gg), c.m_z, t, y, &zero);
    }

    let mut tallies = vec![growth, lip_y, lip_grad];
    if c.c_f.is_some() {
        tallies.push(bounded);
    }
    tallies.push(at_zero);
    let mut examples = Vec::new();
    let mut checks = Vec::new();
    for t in tallies {
        examples.extend(t.examples);
        checks.push(t.summary);
    }
    Ok(GrowthReport {
        eta,
        samples,
        dim,
        checks,
        examples,
    })
}
