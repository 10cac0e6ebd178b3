use std::sync::Arc;

use qbsde::engine::{
    simulate_forward, AbsState, BrownianBundle, ConstantFunctional, Diffusion, ModelSpec, PathBundle, PathFunctional,
    StateValue, SupPower, TanhDiffusion, TanhState, TimeGrid, ZeroDrift, ZeroFunctional,
};
use qbsde::generators::{
    ConstantDriver, Constants, Driver, GeneratorSpec, LinearYDriver, NonConvexDriver, QuadraticDriver, TanhDriver,
    ZeroDriver,
};
use qbsde::solvers::{
    additive_stage2_under_q, solve_additive_stages, solve_cole_hopf, solve_decomposed_additive,
    solve_decomposed_malliavin, solve_linear, solve_lsmc, solve_tree, BsdeSolution, ColeHopfOptions, LsmcOptions,
    PicardOptions, PolynomialBasis, PrefixIndicatorBasis,
};
use qbsde::Error;

fn spec(f: impl Driver + 'static, g: impl Driver + 'static, h: impl PathFunctional + 'static, xi: impl PathFunctional + 'static) -> GeneratorSpec {
    GeneratorSpec::new(Arc::new(f), Arc::new(g), Arc::new(h), Arc::new(xi), Constants::new(1.0, 3.0)).unwrap()
}

fn x_t() -> StateValue {
    StateValue { coord: 0, scale: 1.0 }
}

fn tree_bundle(steps: usize, horizon: f64) -> (TimeGrid, BrownianBundle, PathBundle) {
    let grid = TimeGrid::uniform(horizon, steps).unwrap();
    let noise = BrownianBundle::bernoulli_tree(&grid).unwrap();
    let paths = simulate_forward(&ModelSpec::brownian(), &noise, &grid).unwrap();
    (grid, noise, paths)
}

fn gaussian_bundle(model: &ModelSpec, steps: usize, paths: usize, seed: u64) -> (TimeGrid, BrownianBundle, PathBundle) {
    let grid = TimeGrid::uniform(1.0, steps).unwrap();
    let noise = BrownianBundle::sample(&grid, model.dim(), paths, seed).unwrap();
    let bundle = simulate_forward(model, &noise, &grid).unwrap();
    (grid, noise, bundle)
}

fn sup_diff(a: &BsdeSolution, b: &BsdeSolution) -> (f64, f64) {
    let mut dy: f64 = 0.0;
    let mut dz: f64 = 0.0;
    for p in 0..a.paths() {
        for i in 0..a.nodes() {
            dy = dy.max((a.y(p, i) - b.y(p, i)).abs());
            if i + 1 < a.nodes() {
                dz = dz.max((a.z(p, i)[0] - b.z(p, i)[0]).abs());
            }
        }
    }
    (dy, dz)
}

fn sup_mean_dy(a: &BsdeSolution, b: &BsdeSolution) -> f64 {
    (0..a.nodes())
        .map(|i| (0..a.paths()).map(|p| (a.y(p, i) - b.y(p, i)).abs()).sum::<f64>() / a.paths() as f64)
        .fold(0.0, f64::max)
}

#[test]
fn tree_martingale_has_zero_start() {
    let (grid, _, _) = tree_bundle(8, 1.0);
    let s = spec(ZeroDriver, ZeroDriver, ZeroFunctional, x_t());
    let t = solve_tree(&s, &ModelSpec::brownian(), &grid, None, PicardOptions::default()).unwrap();
    assert!(t.y0().abs() < 1e-14);
}

#[test]
fn tree_constant_driver_integrates() {
    let (grid, _, _) = tree_bundle(6, 1.0);
    let s = spec(ConstantDriver { c: 0.7 }, ZeroDriver, ZeroFunctional, ZeroFunctional);
    let t = solve_tree(&s, &ModelSpec::brownian(), &grid, None, PicardOptions::default()).unwrap();
    assert!((t.y0() - 0.7).abs() < 1e-13);
}

#[test]
fn tree_single_step_slope() {
    let (grid, _, _) = tree_bundle(1, 1.0);
    let s = spec(ZeroDriver, ZeroDriver, ZeroFunctional, x_t());
    let t = solve_tree(&s, &ModelSpec::brownian(), &grid, None, PicardOptions::default()).unwrap();
    assert_eq!(t.z0(), 1.0);
}

#[test]
fn tree_depth_limit() {
    let grid = TimeGrid::uniform(1.0, 23).unwrap();
    let s = spec(ZeroDriver, ZeroDriver, ZeroFunctional, x_t());
    let err = solve_tree(&s, &ModelSpec::brownian(), &grid, None, PicardOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ResourceLimit(_)));
}

#[test]
fn lsmc_matches_tree_with_saturated_basis() {
    let (grid, noise, paths) = tree_bundle(10, 1.0);
    let cases = [
        spec(ConstantDriver { c: 0.3 }, ZeroDriver, ZeroFunctional, TanhState { coord: 0, scale: 1.0 }),
        spec(LinearYDriver { a: 0.8 }, ZeroDriver, ZeroFunctional, x_t()),
        spec(TanhDriver { scale: 0.5, a_y: 1.0, a_z: 1.0 }, NonConvexDriver::default(), SupPower { power: 1.5, scale: 1.0 }, ZeroFunctional),
    ];
    for s in &cases {
        let opts = LsmcOptions::with_truncation(4.0);
        let lsmc = solve_lsmc(s, &paths, &noise, &PrefixIndicatorBasis, &opts).unwrap();
        let tree = solve_tree(s, &ModelSpec::brownian(), &grid, Some(4.0), opts.picard).unwrap();
        let (dy, dz) = sup_diff(&lsmc, &tree.to_solution(&paths).unwrap());
        assert!(dy <= 1e-10 && dz <= 1e-8, "{dy} {dz}");
        assert!(lsmc.rank_deficient_nodes().is_empty());
    }
}

#[test]
fn lsmc_zero_data_is_exactly_zero() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 10, 500, 3);
    let s = spec(ZeroDriver, ZeroDriver, ZeroFunctional, ZeroFunctional);
    let sol = solve_lsmc(&s, &paths, &noise, &PolynomialBasis::default_cubic(), &LsmcOptions::default()).unwrap();
    assert!(sol.y_tensor().iter().chain(sol.z_tensor()).all(|v| *v == 0.0));
}

#[test]
fn terminal_consistency_every_solver() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 8, 300, 9);
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, ZeroFunctional, TanhState { coord: 0, scale: 1.0 });
    let basis = PolynomialBasis::default_cubic();
    let opts = LsmcOptions::default();
    let sols = [
        solve_lsmc(&s, &paths, &noise, &basis, &opts).unwrap(),
        solve_cole_hopf(&s, &model, &paths, &ColeHopfOptions::default()).unwrap(),
        solve_decomposed_additive(&s, &model, &paths, &noise, &basis, &opts).unwrap(),
        solve_decomposed_malliavin(&s, &model, &paths, &noise, &basis, &opts).unwrap(),
    ];
    for sol in &sols {
        for p in 0..paths.paths() {
            assert_eq!(sol.y(p, 8), paths.state(p, 8)[0].tanh(), "{:?}", sol.method());
        }
    }
}

#[test]
fn cole_hopf_linear_terminal() {
    let model = ModelSpec::brownian();
    let (grid, _, paths) = gaussian_bundle(&model, 10, 200, 1);
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, ZeroFunctional, x_t());
    let sol = solve_cole_hopf(&s, &model, &paths, &ColeHopfOptions::default()).unwrap();
    assert!((sol.y0() - 0.5).abs() < 1e-12);
    for p in 0..paths.paths() {
        for i in 0..=10 {
            let exact = paths.state(p, i)[0] + 0.5 * (1.0 - grid.time(i));
            assert!((sol.y(p, i) - exact).abs() < 1e-11);
            assert!((sol.z(p, i)[0] - 1.0).abs() < 1e-7);
        }
    }
}

#[test]
fn cole_hopf_constant_and_bounded_terminals() {
    let model = ModelSpec::brownian();
    let (_, _, paths) = gaussian_bundle(&model, 6, 100, 2);
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, ZeroFunctional, ConstantFunctional { c: 1.25 });
    let sol = solve_cole_hopf(&s, &model, &paths, &ColeHopfOptions::default()).unwrap();
    assert!(sol.y_tensor().iter().all(|v| (v - 1.25).abs() < 1e-13));
    assert!(sol.z_tensor().iter().all(|v| v.abs() < 1e-8));
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, ZeroFunctional, TanhState { coord: 0, scale: 1.0 });
    let sol = solve_cole_hopf(&s, &model, &paths, &ColeHopfOptions::default()).unwrap();
    assert!((-1.0..=1.0).contains(&sol.y0()));
}

#[test]
fn cole_hopf_nested_agrees_with_quadrature() {
    let model = ModelSpec::brownian();
    let (_, _, paths) = gaussian_bundle(&model, 5, 20, 4);
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, ZeroFunctional, TanhState { coord: 0, scale: 1.0 });
    let quad = solve_cole_hopf(&s, &model, &paths, &ColeHopfOptions::default()).unwrap();
    let opts = ColeHopfOptions {
        inner_paths: 20_000,
        force_nested: true,
        ..ColeHopfOptions::default()
    };
    let nested = solve_cole_hopf(&s, &model, &paths, &opts).unwrap();
    for p in 0..paths.paths() {
        for i in 0..5 {
            let se = nested.y_se()[i].max(1e-4);
            assert!((quad.y(p, i) - nested.y(p, i)).abs() < 5.0 * se + 1e-3);
            assert!((quad.z(p, i)[0] - nested.z(p, i)[0]).abs() < 5e-2);
        }
    }
}

#[test]
fn cole_hopf_rejects_other_drivers() {
    let model = ModelSpec::brownian();
    let (_, _, paths) = gaussian_bundle(&model, 4, 10, 4);
    let s = spec(ZeroDriver, NonConvexDriver::default(), ZeroFunctional, x_t());
    assert!(matches!(solve_cole_hopf(&s, &model, &paths, &ColeHopfOptions::default()), Err(Error::InvalidArgument(_))));
}

#[test]
fn lsmc_quadratic_matches_cole_hopf() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 20, 20_000, 11);
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, ZeroFunctional, x_t());
    let sol = solve_lsmc(&s, &paths, &noise, &PolynomialBasis::default_cubic(), &LsmcOptions::default()).unwrap();
    assert!((sol.y0() - 0.5).abs() < (1e-2f64).max(3.0 * sol.se()));
}

#[test]
fn linear_closed_forms() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 10, 1000, 5);
    let basis = PolynomialBasis::default_cubic();
    let one = |a: f64| spec(LinearYDriver { a }, ZeroDriver, ZeroFunctional, ConstantFunctional { c: 1.0 });
    let up = solve_linear(&one(1.0), &model, &paths, &noise, &basis).unwrap();
    assert!((up.y0() - std::f64::consts::E).abs() < 1e-12);
    let down = solve_linear(&one(-1.0), &model, &paths, &noise, &basis).unwrap();
    assert!((down.y0() - (-1.0f64).exp()).abs() < 1e-12);
    let mart = solve_linear(&spec(ZeroDriver, ZeroDriver, ZeroFunctional, x_t()), &model, &paths, &noise, &basis).unwrap();
    assert!(mart.y0().abs() < 1e-12);
    // path-dependent terminal goes through regression
    let sup = spec(LinearYDriver { a: 0.5 }, ZeroDriver, ZeroFunctional, SupPower { power: 1.0, scale: 1.0 });
    let reg = solve_linear(&sup, &model, &paths, &noise, &basis).unwrap();
    let mean_sup: f64 = (0..1000).map(|p| paths.running_sup(p, 10)).sum::<f64>() / 1000.0;
    assert!((reg.y0() - 0.5f64.exp() * mean_sup).abs() < 1e-10);
}

#[test]
fn linear_oracle_checks_lsmc() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 20, 10_000, 6);
    let basis = PolynomialBasis::default_cubic();
    let s = spec(LinearYDriver { a: 0.7 }, ZeroDriver, ZeroFunctional, TanhState { coord: 0, scale: 2.0 });
    let exact = solve_linear(&s, &model, &paths, &noise, &basis).unwrap();
    let lsmc = solve_lsmc(&s, &paths, &noise, &basis, &LsmcOptions::default()).unwrap();
    assert!((exact.y0() - lsmc.y0()).abs() < 3.0 * lsmc.se() + 2e-2);
}

#[test]
fn additive_without_f_leaves_stage_two_empty() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 8, 2000, 7);
    let basis = PolynomialBasis::default_cubic();
    let s = spec(ZeroDriver, NonConvexDriver::default(), SupPower { power: 1.5, scale: 0.5 }, ZeroFunctional);
    let st = solve_additive_stages(&s, &model, &paths, &noise, &basis, &LsmcOptions::default()).unwrap();
    assert!(st.stage2.y_tensor().iter().chain(st.stage2.z_tensor()).all(|v| *v == 0.0));
    assert_eq!(st.combined.y_tensor(), st.stage1.y_tensor());
}

#[test]
fn additive_degenerate_split_is_plain_lsmc() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 8, 2000, 8);
    let basis = PolynomialBasis::default_cubic();
    let s = spec(TanhDriver { scale: 1.0, a_y: 0.5, a_z: 0.5 }, ZeroDriver, ZeroFunctional, TanhState { coord: 0, scale: 1.0 });
    let st = solve_additive_stages(&s, &model, &paths, &noise, &basis, &LsmcOptions::default()).unwrap();
    assert!(st.stage1.y_tensor().iter().all(|v| *v == 0.0));
    let plain = solve_lsmc(&s, &paths, &noise, &basis, &LsmcOptions::default()).unwrap();
    let (dy, _) = sup_diff(&st.combined, &plain);
    assert!(dy < 1e-12, "{dy}");
}

fn small_noise_model(sigma: f64) -> ModelSpec {
    ModelSpec::new(
        vec![0.0],
        Arc::new(ZeroDrift),
        Diffusion::TimeOnly(Arc::new(qbsde::engine::ConstantDiffusion { sigma })),
    )
    .unwrap()
}

#[test]
fn additive_agrees_with_monolithic() {
    let model = small_noise_model(1.0);
    let (_, noise, paths) = gaussian_bundle(&model, 20, 20_000, 12);
    let basis = PolynomialBasis::default_cubic();
    let s = spec(
        TanhDriver { scale: 0.5, a_y: 0.5, a_z: 0.5 },
        NonConvexDriver::default(),
        SupPower { power: 1.5, scale: 0.5 },
        TanhState { coord: 0, scale: 0.5 },
    );
    let opts = LsmcOptions::default();
    let a = solve_lsmc(&s, &paths, &noise, &basis, &opts).unwrap();
    let b = solve_decomposed_additive(&s, &model, &paths, &noise, &basis, &opts).unwrap();
    let gap = sup_mean_dy(&a, &b);
    assert!(gap <= 3.0 * (a.se() + b.se()) + 2e-2, "{gap}");
}

#[test]
fn measure_change_identity_on_tree() {
    let (_, noise, paths) = tree_bundle(3, 1.0);
    let s = spec(
        TanhDriver { scale: 0.5, a_y: 0.5, a_z: 0.5 },
        NonConvexDriver { gamma_prime: 0.3 },
        AbsState { coord: 0, scale: 0.5 },
        TanhState { coord: 0, scale: 0.5 },
    );
    let opts = LsmcOptions::default();
    let model = ModelSpec::brownian();
    let st = solve_additive_stages(&s, &model, &paths, &noise, &PrefixIndicatorBasis, &opts).unwrap();
    let q = additive_stage2_under_q(&s, &paths, &noise, &PrefixIndicatorBasis, &st.stage1, &opts).unwrap();
    let (dy, dz) = sup_diff(&st.stage2, &q);
    assert!(dy <= 1e-8 && dz <= 1e-8, "{dy} {dz}");
}

fn f2_model(base: f64, amp: f64) -> ModelSpec {
    ModelSpec::new(vec![0.0], Arc::new(ZeroDrift), Diffusion::State(Arc::new(TanhDiffusion { base, amp, scale: 1.0 }))).unwrap()
}

#[test]
fn malliavin_without_z_dependence_has_no_second_stage() {
    let model = f2_model(1.0, 0.5);
    let (_, noise, paths) = gaussian_bundle(&model, 10, 1000, 13);
    let s = spec(ConstantDriver { c: 0.4 }, ZeroDriver, ZeroFunctional, ZeroFunctional);
    let sol = solve_decomposed_malliavin(&s, &model, &paths, &noise, &PolynomialBasis::default_cubic(), &LsmcOptions::default()).unwrap();
    assert!((sol.y0() - 0.4).abs() < 1e-12);
    assert_eq!(sol.note("stage2_y0"), Some(0.0));
}

#[test]
fn malliavin_agrees_with_monolithic() {
    let model = f2_model(1.0, 0.5);
    let (_, noise, paths) = gaussian_bundle(&model, 20, 20_000, 14);
    let basis = PolynomialBasis::default_cubic();
    let s = spec(ZeroDriver, QuadraticDriver { gamma: 0.5 }, AbsState { coord: 0, scale: 1.0 }, ZeroFunctional);
    let opts = LsmcOptions::default();
    let a = solve_lsmc(&s, &paths, &noise, &basis, &opts).unwrap();
    let b = solve_decomposed_malliavin(&s, &model, &paths, &noise, &basis, &opts).unwrap();
    let gap = sup_mean_dy(&a, &b);
    assert!(gap <= 3.0 * (a.se() + b.se()) + 2e-2, "{gap}");
}

#[test]
fn malliavin_s_bound_is_stable() {
    let model = f2_model(1.0, 0.5);
    let basis = PolynomialBasis::default_cubic();
    let mut constants = Constants::new(0.0, 1.0);
    constants.k_h = 1.0;
    let s = GeneratorSpec::new(
        Arc::new(ZeroDriver),
        Arc::new(QuadraticDriver { gamma: 0.5 }),
        Arc::new(AbsState { coord: 0, scale: 1.0 }),
        Arc::new(ZeroFunctional),
        constants,
    )
    .unwrap();
    let sups: Vec<f64> = [5_000, 20_000]
        .iter()
        .map(|&n| {
            let (_, noise, paths) = gaussian_bundle(&model, 20, n, 15);
            let sol = solve_decomposed_malliavin(&s, &model, &paths, &noise, &basis, &LsmcOptions::default()).unwrap();
            assert_eq!(sol.note("s_reference_bound"), Some(1.5));
            assert!(sol.note("s_sup").unwrap().is_finite());
            sol.note("s_q999").unwrap()
        })
        .collect();
    assert!((sups[1] / sups[0] - 1.0).abs() < 0.1, "{sups:?}");
}

#[test]
fn picard_residuals_decrease_after_first_iteration() {
    let model = ModelSpec::brownian();
    let (_, noise, paths) = gaussian_bundle(&model, 10, 2000, 16);
    let s = spec(
        TanhDriver { scale: 1.0, a_y: 2.0, a_z: 0.5 },
        NonConvexDriver::default(),
        SupPower { power: 1.5, scale: 1.0 },
        ZeroFunctional,
    );
    let sol = solve_lsmc(&s, &paths, &noise, &PolynomialBasis::default_cubic(), &LsmcOptions::default()).unwrap();
    for h in &sol.picard().unwrap().histories[..10] {
        assert!(h.windows(2).skip(1).all(|w| w[1] <= w[0]), "{h:?}");
    }
}

#[test]
fn truncation_saturates_for_bounded_z() {
    let model = f2_model(1.0, 0.5);
    let (_, noise, paths) = gaussian_bundle(&model, 20, 10_000, 17);
    let s = spec(ZeroDriver, NonConvexDriver::default(), AbsState { coord: 0, scale: 1.0 }, ZeroFunctional);
    let basis = PolynomialBasis::default_cubic();
    let y0: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&n| {
            let sol = solve_lsmc(&s, &paths, &noise, &basis, &LsmcOptions::with_truncation(n)).unwrap();
            (sol.y0(), sol.se())
        })
        .collect();
    for w in y0.windows(2).skip(1) {
        assert!((w[1].0 - w[0].0).abs() <= 3.0 * w[1].1, "{y0:?}");
    }
}
