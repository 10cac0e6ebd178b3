//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every export has a plain Rust twin so the numerics are tested natively.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qbsde::diagnostics::{phi, pstar_from_bmo};
use qbsde::engine::{
    simulate_forward, BrownianBundle, ConstantDiffusion, Diffusion, ModelSpec, StateValue, TanhDiffusion, TimeGrid,
    ZeroDrift, ZeroFunctional,
};
use qbsde::generators::{Constants, GeneratorSpec, QuadraticDriver, ZeroDriver};
use qbsde::solvers::{solve_cole_hopf, solve_lsmc, ColeHopfOptions, LsmcOptions, PolynomialBasis};

fn js(e: qbsde::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Sample paths of `dX = σ dW` (`state = false`) or `dX = (1 + ½tanh x) dW`,
/// flattened path-major with `steps + 1` values per path.
pub fn sample_paths(state: bool, sigma: f64, steps: usize, paths: usize, seed: u64) -> qbsde::Result<Vec<f64>> {
    let grid = TimeGrid::uniform(1.0, steps)?;
    let diffusion = if state {
        Diffusion::State(Arc::new(TanhDiffusion {
            base: sigma,
            amp: 0.5 * sigma,
            scale: 1.0,
        }))
    } else {
        Diffusion::TimeOnly(Arc::new(ConstantDiffusion { sigma }))
    };
    let model = ModelSpec::new(vec![0.0], Arc::new(ZeroDrift), diffusion)?;
    let noise = BrownianBundle::sample(&grid, 1, paths, seed)?;
    Ok(simulate_forward(&model, &noise, &grid)?.states().to_vec())
}

#[wasm_bindgen(js_name = samplePaths)]
pub fn sample_paths_js(state: bool, sigma: f64, steps: usize, paths: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    sample_paths(state, sigma, steps, paths, seed).map_err(js)
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub truncation: f64,
    pub exact_y0: f64,
    pub lsmc_y0: f64,
    pub lsmc_se: f64,
    pub times: Vec<f64>,
    pub lsmc_mean_y: Vec<f64>,
    pub exact_mean_y: Vec<f64>,
    /// Cross-path mean of `|Z_lsmc − Z_exact|` per node.
    pub mean_abs_dz: Vec<f64>,
    pub max_z: f64,
}

/// Regression solver against the Cole–Hopf closed form for `|z|²/2`, `ξ = X_T`,
/// exact `Y_0 = ½`, at truncation level `truncation`.
pub fn compare_cole_hopf(truncation: f64, steps: usize, paths: usize, seed: u64) -> qbsde::Result<Comparison> {
    let grid = TimeGrid::uniform(1.0, steps)?;
    let model = ModelSpec::brownian();
    let noise = BrownianBundle::sample(&grid, 1, paths, seed)?;
    let bundle = simulate_forward(&model, &noise, &grid)?;
    let spec = GeneratorSpec::new(
        Arc::new(ZeroDriver),
        Arc::new(QuadraticDriver { gamma: 0.5 }),
        Arc::new(ZeroFunctional),
        Arc::new(StateValue { coord: 0, scale: 1.0 }),
        Constants::new(0.0, 1.0),
    )?;
    let lsmc = solve_lsmc(&spec, &bundle, &noise, &PolynomialBasis::default_cubic(), &LsmcOptions::with_truncation(truncation))?;
    let exact = solve_cole_hopf(&spec, &model, &bundle, &ColeHopfOptions::default())?;
    let nodes = bundle.nodes();
    let mean_abs_dz = (0..nodes)
        .map(|i| (0..paths).map(|p| (lsmc.z(p, i)[0] - exact.z(p, i)[0]).abs()).sum::<f64>() / paths as f64)
        .collect();
    Ok(Comparison {
        truncation,
        exact_y0: exact.y0(),
        lsmc_y0: lsmc.y0(),
        lsmc_se: lsmc.se(),
        times: grid.nodes().to_vec(),
        lsmc_mean_y: (0..nodes).map(|i| lsmc.y_mean(i)).collect(),
        exact_mean_y: (0..nodes).map(|i| exact.y_mean(i)).collect(),
        mean_abs_dz,
        max_z: lsmc.z_tensor().iter().fold(0.0, |m, z| m.max(z.abs())),
    })
}

/// [`compare_cole_hopf`] serialized as JSON.
#[wasm_bindgen(js_name = compareColeHopf)]
pub fn compare_cole_hopf_js(truncation: f64, steps: usize, paths: usize, seed: u64) -> Result<String, JsError> {
    let c = compare_cole_hopf(truncation, steps, paths, seed).map_err(js)?;
    serde_json::to_string(&c).map_err(|e| JsError::new(&e.to_string()))
}

/// `φ` on `n` log-spaced points of `[p_min, p_max]`, interleaved `(p, φ(p))`.
pub fn phi_curve(p_min: f64, p_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (a, b) = (p_min.max(1.0 + 1e-9).ln(), p_max.ln());
    (0..n)
        .flat_map(|k| {
            let p = (a + (b - a) * k as f64 / (n - 1) as f64).exp();
            [p, phi(p)]
        })
        .collect()
}

#[wasm_bindgen(js_name = phiCurve)]
pub fn phi_curve_js(p_min: f64, p_max: f64, n: usize) -> Vec<f64> {
    phi_curve(p_min, p_max, n)
}

/// Reverse-Hölder exponent for a BMO norm; `NaN` on invalid input.
#[wasm_bindgen(js_name = pStar)]
pub fn p_star(bmo: f64) -> f64 {
    pstar_from_bmo(bmo).map(|p| p.p).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_start_at_origin() {
        let xs = sample_paths(true, 1.0, 8, 5, 1).unwrap();
        assert_eq!(xs.len(), 5 * 9);
        assert!(xs.chunks(9).all(|p| p[0] == 0.0));
    }

    #[test]
    fn comparison_recovers_half() {
        let c = compare_cole_hopf(16.0, 20, 4000, 3).unwrap();
        assert!((c.exact_y0 - 0.5).abs() < 1e-9);
        assert!((c.lsmc_y0 - 0.5).abs() < 0.03, "{}", c.lsmc_y0);
    }

    #[test]
    fn curve_inverts() {
        let c = phi_curve(1.01, 100.0, 7);
        for pair in c.chunks(2) {
            assert!((p_star(pair[1]) - pair[0]).abs() / pair[0] < 1e-8);
        }
    }
}
