//! End-to-end acceptance suite over the shipped configs. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use qbsde::diagnostics::{exp_moment_of, phi, pstar_from_bmo, stochastic_exponential};
use qbsde::engine::{BrownianBundle, TimeGrid};
use qbsde::harness::{load_config, run_experiment, with_threads, ExperimentConfig, Registry, RunOutput};
use qbsde::Result;
use statrs::distribution::{ContinuousCDF, Normal};

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"));
    load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Runs every experiment into its own scratch directory and keeps the
/// artifact checksums for the determinism criterion.
struct Runs {
    root: tempfile::TempDir,
    registry: Registry,
    checksums: BTreeMap<String, (Option<usize>, BTreeMap<String, String>)>,
}

impl Runs {
    fn new() -> Self {
        Self {
            root: tempfile::tempdir().expect("scratch dir"),
            registry: Registry::builtin(),
            checksums: BTreeMap::new(),
        }
    }

    fn dir(&self, label: &str, threads: Option<usize>) -> PathBuf {
        self.root.path().join(format!("{label}-t{}", threads.unwrap_or(0)))
    }

    fn run(&mut self, label: &str, cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput> {
        let dir = self.dir(label, threads);
        let out = with_threads(threads, || run_experiment(cfg, &self.registry, Some(&dir)))??;
        let sums = out.record.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect();
        self.checksums.entry(label.to_string()).or_insert((threads, sums));
        Ok(out)
    }
}

type Criterion = Box<dyn FnOnce(&mut Runs) -> Result<Outcome>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn failed_stages(out: &RunOutput) -> Option<String> {
    let failed: Vec<String> = out
        .record
        .stages
        .iter()
        .filter(|s| !s.ok)
        .map(|s| format!("{}: {}", s.id, s.error.as_deref().unwrap_or("")))
        .collect();
    (!failed.is_empty()).then(|| failed.join("; "))
}

fn sup_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tree_oracle(runs: &mut Runs) -> Result<Outcome> {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    for name in ["tree-oracle-constant", "tree-oracle-linear"] {
        let out = runs.run(name, &config(name), None)?;
        if let Some(f) = failed_stages(&out) {
            return Ok(check(false, f));
        }
        let (tree, lsmc) = (&out.solutions["tree"], &out.solutions["lsmc"]);
        worst.0 = worst.0.max(sup_abs_diff(tree.y_tensor(), lsmc.y_tensor()));
        worst.1 = worst.1.max(sup_abs_diff(tree.z_tensor(), lsmc.z_tensor()));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(check(
        worst.0 <= 1e-10 && worst.1 <= 1e-8 && secs < 10.0,
        format!("sup|dY| = {:.2e} (<= 1e-10), sup|dZ| = {:.2e} (<= 1e-8), {secs:.2} s (< 10 s)", worst.0, worst.1),
    ))
}

fn cole_hopf(runs: &mut Runs) -> Result<Outcome> {
    let cfg = config("cole-hopf-check");
    let out = runs.run("cole-hopf-check", &cfg, Some(1))?;
    if let Some(f) = failed_stages(&out) {
        return Ok(check(false, f));
    }
    let secs: f64 = out
        .record
        .stages
        .iter()
        .filter(|s| s.id == "simulate" || s.id == "solve:lsmc")
        .map(|s| s.seconds)
        .sum();
    let lsmc = &out.solutions["lsmc"];
    let tol = (3.0 * lsmc.se()).max(1e-2);
    let dy = (lsmc.y0() - 0.5).abs();
    let mut worst_z = 0.0f64;
    for i in 1..lsmc.nodes() - 1 {
        let m = (0..lsmc.paths()).map(|p| (lsmc.z(p, i)[0] - 1.0).abs()).sum::<f64>() / lsmc.paths() as f64;
        worst_z = worst_z.max(m);
    }
    let verdict = out.record.summary.diagnostics.uniqueness.iter().all(|u| u.pass);
    Ok(check(
        dy <= tol && worst_z <= 5e-2 && secs < 60.0 && verdict,
        format!(
            "Y0 = {:.5} (|Y0-0.5| = {dy:.2e} <= {tol:.2e}), max interior mean|Z-1| = {worst_z:.2e} (<= 5e-2), \
             {} paths single-threaded in {secs:.1} s (< 60 s), LSMC~Cole-Hopf verdict pass={verdict}",
            lsmc.y0(),
            lsmc.paths()
        ),
    ))
}

fn normalization() -> Result<Outcome> {
    let grid = TimeGrid::uniform(1.0, 20)?;
    let noise = BrownianBundle::sample(&grid, 1, 100_000, 99)?;
    let theta = vec![1.0; noise.as_slice().len()];
    let dts: Vec<f64> = grid.dts().collect();
    let rep = stochastic_exponential(&theta, &noise, &dts, &[2.0])?;
    let second = &rep.lp[0];
    let e = std::f64::consts::E;
    Ok(check(
        (rep.mean - 1.0).abs() <= 3.0 * rep.se && (second.moment - e).abs() <= 3.0 * second.moment_se,
        format!(
            "mean = {:.5} +- {:.1e}, second moment = {:.5} +- {:.1e} (e = {e:.5})",
            rep.mean, rep.se, second.moment, second.moment_se
        ),
    ))
}

fn pstar_round_trip() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for p in [1.01, 1.5, 2.0, 5.0, 100.0] {
        let back = pstar_from_bmo(phi(p))?.p;
        worst = worst.max((back - p).abs() / p);
    }
    // The printed formula evaluated directly, without the cancellation-free rewrite.
    let p = 2.0f64;
    let direct = (1.0 + (1.0 + 1.0 / (2.0 * (p - 1.0))).ln() / (p * p)).sqrt() - 1.0;
    let at2 = phi(2.0);
    Ok(check(
        worst <= 1e-8 && (at2 - 0.04946).abs() <= 1e-5 && (at2 - direct).abs() <= 1e-12,
        format!("max relative round-trip error {worst:.1e} (<= 1e-8), phi(2) = {at2:.6} (direct {direct:.6})"),
    ))
}

fn paths_override(cfg: &ExperimentConfig, paths: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.sampling.paths = Some(paths);
    c
}

fn z_growth_f1(runs: &mut Runs) -> Result<Outcome> {
    let cfg = config("zgrowth-f1");
    let full = runs.run("zgrowth-f1", &cfg, None)?;
    let quarter = runs.run("zgrowth-f1-quarter", &paths_override(&cfg, 25_000), None)?;
    for o in [&full, &quarter] {
        if let Some(f) = failed_stages(o) {
            return Ok(check(false, f));
        }
    }
    let (a, b) = (&full.record.summary.diagnostics.z_growth[0], &quarter.record.summary.diagnostics.z_growth[0]);
    let across_n = a.stability.as_ref().map_or(f64::INFINITY, |s| s.max_delta);
    let across_p = (a.report.max - b.report.max).abs() / b.report.max;
    let finite = [&a.report, &b.report]
        .iter()
        .all(|r| r.max_ratio.iter().chain(&r.mean_ratio).chain(&r.q999_ratio).all(|v| v.is_finite()));
    Ok(check(
        across_n <= 0.2 && across_p <= 0.2 && finite,
        format!(
            "max ratio {:.4} at 1e5 paths, {:.4} at 2.5e4; change across N = {across_n:.3} (<= 0.2), across paths = {across_p:.3} (<= 0.2), finite = {finite}",
            a.report.max, b.report.max
        ),
    ))
}

fn bounded_z_f2(runs: &mut Runs) -> Result<Outcome> {
    let cfg = config("bounded-z-f2");
    let quarter = runs.run("bounded-z-f2-quarter", &paths_override(&cfg, 25_000), None)?;
    let full = runs.run("bounded-z-f2", &cfg, None)?;
    for o in [&full, &quarter] {
        if let Some(f) = failed_stages(o) {
            return Ok(check(false, f));
        }
    }
    let (a, b) = (&full.record.summary.diagnostics.z_growth[0], &quarter.record.summary.diagnostics.z_growth[0]);
    let across_n = a.stability.as_ref().map_or(f64::INFINITY, |s| s.z_q999_delta);
    let across_p = (a.report.z_q999 - b.report.z_q999).abs() / b.report.z_q999;
    let (n16, n32) = (&full.solutions["n16"], &full.solutions["n32"]);
    let dy0 = (n16.y0() - n32.y0()).abs();
    let se = n16.se().max(n32.se());
    Ok(check(
        across_n <= 0.1 && across_p <= 0.1 && dy0 <= 3.0 * se,
        format!(
            "q999|Z| = {:.4} (x4 paths change {across_p:.4} <= 0.1, across N {across_n:.4} <= 0.1), |Y0(16)-Y0(32)| = {dy0:.2e} <= 3se = {:.2e}",
            a.report.z_q999,
            3.0 * se
        ),
    ))
}

fn uniqueness(runs: &mut Runs) -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for name in ["uniqueness-f1", "uniqueness-f2"] {
        let out = runs.run(name, &config(name), None)?;
        if let Some(f) = failed_stages(&out) {
            return Ok(check(false, f));
        }
        let u = &out.record.summary.diagnostics.uniqueness[0];
        let finite = !u.verdict.classes.is_empty() && u.verdict.classes.iter().all(|c| c.all_finite_looking);
        let ok = u.verdict.sup_mean <= u.verdict.budget && finite;
        pass &= ok;
        detail.push(format!(
            "{} vs {}: sup mean|dY| = {:.2e} <= {:.2e}, classes finite-looking = {finite}",
            u.a, u.b, u.verdict.sup_mean, u.verdict.budget
        ));
    }
    Ok(check(pass, detail.join("; ")))
}

fn tangent(runs: &mut Runs) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for name in ["tangent-f1", "tangent-f2"] {
        let out = runs.run(name, &config(name), None)?;
        if let Some(f) = failed_stages(&out) {
            return Ok(check(false, f));
        }
        let t = out.record.summary.diagnostics.tangent_check.as_ref().expect("tangent check requested");
        worst = worst.max(t.report.per_node.iter().copied().fold(0.0, f64::max));
    }
    Ok(check(worst <= 1e-3, format!("max relative error over nodes and models {worst:.2e} (<= 1e-3)")))
}

fn exp_moment() -> Result<Outcome> {
    let grid = TimeGrid::uniform(1.0, 1)?;
    let noise = BrownianBundle::sample(&grid, 1, 100_000, 2718)?;
    let samples: Vec<f64> = noise.as_slice().iter().map(|w| w.abs()).collect();
    let est = exp_moment_of(&samples, 1.0);
    let oracle = 2.0 * 0.5f64.exp() * Normal::standard().cdf(1.0);
    let ladder: Vec<f64> = [0.25, 0.5, 1.0, 1.5, 2.0].iter().map(|&q| exp_moment_of(&samples, q).mean).collect();
    let monotone = ladder.windows(2).all(|w| w[0] < w[1]);
    Ok(check(
        (est.mean - oracle).abs() <= 3.0 * est.se && monotone,
        format!("estimate {:.5} +- {:.1e} vs {oracle:.5}, monotone in q = {monotone}", est.mean, est.se),
    ))
}

fn determinism(runs: &mut Runs) -> Result<Outcome> {
    let labels: Vec<(String, Option<usize>)> = runs.checksums.iter().map(|(k, (t, _))| (k.clone(), *t)).collect();
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (label, threads) in labels {
        let cfg = match label.strip_suffix("-quarter") {
            Some(base) => paths_override(&config(base), 25_000),
            None => config(&label),
        };
        let other = if threads == Some(1) { Some(4) } else { Some(1) };
        let again = runs.run(&format!("{label}-rerun"), &cfg, other)?;
        let first = &runs.checksums[&label].1;
        let second: BTreeMap<String, String> = again.record.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect();
        files += first.len();
        if first != &second || first.is_empty() {
            mismatched.push(label);
        }
    }
    Ok(check(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{files} artifacts byte-identical across thread counts")
        } else {
            format!("artifacts differ for {}", mismatched.join(", "))
        },
    ))
}

fn main() -> ExitCode {
    let mut runs = Runs::new();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("tree-oracle equivalence", Box::new(tree_oracle)),
        ("Cole-Hopf quadratic check", Box::new(cole_hopf)),
        ("stochastic-exponential normalization", Box::new(|_| normalization())),
        ("p* round trip", Box::new(|_| pstar_round_trip())),
        ("Z-growth signature, additive noise", Box::new(z_growth_f1)),
        ("bounded-Z signature, state-dependent noise", Box::new(bounded_z_f2)),
        ("uniqueness probes", Box::new(uniqueness)),
        ("tangent vs bump", Box::new(tangent)),
        ("exponential-moment estimator", Box::new(|_| exp_moment())),
        ("determinism", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f(&mut runs).unwrap_or_else(|e| check(false, format!("error: {e}")));
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        failures += usize::from(!outcome.pass);
        println!("{tag} [{:>2}] {name}: {} ({:.1} s)", k + 1, outcome.detail, start.elapsed().as_secs_f64());
    }
    if failures == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
