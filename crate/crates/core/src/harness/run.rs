use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BasisConfig, BasisKind, ExperimentConfig, Mode, SolverConfig, SolverKind};
use super::registry::Registry;
use crate::diagnostics::{
    bmo_estimate, class_membership, exp_moment, gradz_along, growth_stability, pstar_from_bmo, stochastic_exponential,
    tangent_vs_bump, uniqueness_probe, z_growth_report, BmoEstimate, ClassMembershipReport, GirsanovReport, GradPart,
    GrowthStability, MomentEstimate, PStar, Saturation, TangentCheck, UniquenessVerdict, ZGrowthReport,
};
use crate::engine::tensor_io::{write_atomic, write_tensor, TensorHeader};
use crate::engine::{simulate_forward, simulate_tangent, BrownianBundle, Diffusion, ModelSpec, NoiseKind, PathBundle, TimeGrid};
use crate::generators::{validate_growth, GeneratorSpec, GrowthReport};
use crate::solvers::{
    solve_cole_hopf, solve_decomposed_additive, solve_decomposed_malliavin, solve_linear, solve_lsmc, solve_tree, Basis,
    BsdeSolution, LsmcOptions, PolynomialBasis, PrefixIndicatorBasis, SolverMethod,
};
use crate::{Error, Result};

/// Model, generator and grid assembled from a config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: ModelSpec,
    pub spec: GeneratorSpec,
    pub grid: TimeGrid,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig, registry: &Registry) -> Result<Self> {
        let m = &cfg.model;
        let diffusion = match m.mode {
            Mode::F1 => Diffusion::TimeOnly(registry.time_diffusion(&m.sigma.name, &m.sigma.params)?),
            Mode::F2 => Diffusion::State(registry.state_diffusion(&m.sigma.name, &m.sigma.params)?),
        };
        let model = ModelSpec::new(m.x0.clone(), registry.drift(&m.drift.name, &m.drift.params)?, diffusion)?
            .with_fd_fallback(m.fd_fallback);
        let g = &cfg.generator;
        let spec = GeneratorSpec::new(
            registry.driver(&g.f.name, &g.f.params)?,
            registry.driver(&g.g.name, &g.g.params)?,
            registry.functional(&g.h.name, &g.h.params)?,
            registry.functional(&g.xi.name, &g.xi.params)?,
            g.constants,
        )?
        .with_fd_fallback(m.fd_fallback);
        let grid = TimeGrid::uniform(cfg.grid.horizon, cfg.grid.steps)?;
        Ok(Self { model, spec, grid })
    }

    /// Noise and forward paths (with tangent when `tangent`).
    pub fn simulate(&self, cfg: &ExperimentConfig) -> Result<(BrownianBundle, PathBundle)> {
        let noise = match cfg.sampling.noise {
            NoiseKind::Gaussian => BrownianBundle::sample(&self.grid, self.model.dim(), cfg.paths(), cfg.sampling.seed)?,
            NoiseKind::BernoulliTree => BrownianBundle::bernoulli_tree(&self.grid)?,
        };
        let paths = simulate_forward(&self.model, &noise, &self.grid)?;
        let paths = if cfg.sampling.tangent {
            simulate_tangent(&self.model, &noise, &paths)?
        } else {
            paths
        };
        Ok((noise, paths))
    }
}

pub fn make_basis(cfg: &BasisConfig) -> Box<dyn Basis> {
    match cfg.kind {
        BasisKind::Polynomial => Box::new(PolynomialBasis::new(cfg.degree, cfg.include_sup)),
        BasisKind::PrefixIndicator => Box::new(PrefixIndicatorBasis),
    }
}

/// Runs one configured solver on a simulated bundle.
pub fn run_solver(sc: &SolverConfig, problem: &Problem, noise: &BrownianBundle, paths: &PathBundle) -> Result<BsdeSolution> {
    let basis = make_basis(&sc.basis);
    let opts = LsmcOptions {
        truncation: sc.truncation,
        picard: sc.picard,
    };
    let (spec, model) = (&problem.spec, &problem.model);
    match sc.method {
        SolverKind::Lsmc => solve_lsmc(spec, paths, noise, basis.as_ref(), &opts),
        SolverKind::Tree => solve_tree(spec, model, &problem.grid, Some(sc.truncation), sc.picard)?.to_solution(paths),
        SolverKind::ColeHopf => solve_cole_hopf(spec, model, paths, &sc.cole_hopf),
        SolverKind::Linear => solve_linear(spec, model, paths, noise, basis.as_ref()),
        SolverKind::Additive => solve_decomposed_additive(spec, model, paths, noise, basis.as_ref(), &opts),
        SolverKind::Malliavin => solve_decomposed_malliavin(spec, model, paths, noise, basis.as_ref(), &opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub id: String,
    pub ok: bool,
    #[serde(default)]
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub id: String,
    pub method: SolverMethod,
    pub y0: f64,
    pub se: f64,
    pub truncation: Option<f64>,
    pub picard_iterations: Option<usize>,
    pub picard_residual: Option<f64>,
    pub rank_deficient_nodes: Vec<usize>,
    pub notes: BTreeMap<String, f64>,
    /// Cross-path mean of `Y` per node.
    pub y_mean: Vec<f64>,
    /// Standard error of `Y` per node.
    pub y_se: Vec<f64>,
}

impl SolutionSummary {
    fn of(id: &str, s: &BsdeSolution) -> Self {
        Self {
            id: id.to_string(),
            method: s.method(),
            y0: s.y0(),
            se: s.se(),
            truncation: s.truncation(),
            picard_iterations: s.picard().map(|p| p.max_iterations),
            picard_residual: s.picard().map(|p| p.terminal_residual),
            rank_deficient_nodes: s.rank_deficient_nodes().to_vec(),
            notes: s.notes().clone(),
            y_mean: (0..s.nodes()).map(|i| s.y_mean(i)).collect(),
            y_se: s.y_se().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZGrowthEntry {
    pub solver: String,
    pub report: ZGrowthReport,
    pub compare: Vec<String>,
    pub stability: Option<GrowthStability>,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentEntry {
    pub solver: String,
    pub estimate: MomentEstimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovEntry {
    pub solver: String,
    pub part: GradPart,
    pub report: GirsanovReport,
    /// `|E ℰ_T − 1| ≤ 3·se`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoEntry {
    pub solver: String,
    pub part: GradPart,
    pub estimate: BmoEstimate,
    pub pstar: PStar,
    /// `p*` not pinned at the lower end of its bracket.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMembershipEntry {
    pub solver: String,
    pub report: ClassMembershipReport,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessEntry {
    pub a: String,
    pub b: String,
    pub verdict: UniquenessVerdict,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthValidationEntry {
    pub report: GrowthReport,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentEntry {
    pub report: TangentCheck,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub z_growth: Vec<ZGrowthEntry>,
    pub exp_moment: Vec<ExpMomentEntry>,
    pub girsanov: Vec<GirsanovEntry>,
    pub bmo: Vec<BmoEntry>,
    pub class_membership: Vec<ClassMembershipEntry>,
    pub uniqueness: Vec<UniquenessEntry>,
    pub growth_validation: Option<GrowthValidationEntry>,
    pub tangent_check: Option<TangentEntry>,
}

impl DiagnosticsSummary {
    /// Every computed diagnostic passed. Missing entries are the caller's
    /// concern; see [`RunRecord::complete`].
    pub fn pass(&self) -> bool {
        self.z_growth.iter().all(|e| e.pass)
            && self.exp_moment.iter().all(|e| e.pass)
            && self.girsanov.iter().all(|e| e.pass)
            && self.bmo.iter().all(|e| e.pass)
            && self.class_membership.iter().all(|e| e.pass)
            && self.uniqueness.iter().all(|e| e.pass)
            && self.growth_validation.as_ref().is_none_or(|e| e.pass)
            && self.tangent_check.as_ref().is_none_or(|e| e.pass)
    }
}

/// Deterministic outcome of a run: no timings, no absolute paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub solutions: Vec<SolutionSummary>,
    pub diagnostics: DiagnosticsSummary,
    /// Every stage succeeded.
    pub complete: bool,
    /// `complete` and every requested diagnostic passed.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub summary: RunSummary,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl RunRecord {
    pub fn failed_stages(&self) -> Vec<String> {
        self.stages.iter().filter(|s| !s.ok).map(|s| s.id.clone()).collect()
    }

    pub fn complete(&self) -> bool {
        !self.stages.is_empty() && self.stages.iter().all(|s| s.ok)
    }

    pub fn pass(&self) -> bool {
        self.summary.pass
    }

    /// Reads `run_record.json` from a run directory.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(RUN_RECORD);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: format!("{}: {e}", path.display()),
        })
    }
}

pub const RUN_RECORD: &str = "run_record.json";
pub const SUMMARY: &str = "summary.json";

/// Everything a run produced, kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub problem: Problem,
    pub noise: Option<BrownianBundle>,
    pub paths: Option<PathBundle>,
    pub solutions: BTreeMap<String, BsdeSolution>,
}

struct Stages(Vec<StageRecord>);

impl Stages {
    /// Times `f`; a failure is recorded and yields `None`.
    fn run<T>(&mut self, id: impl Into<String>, f: impl FnOnce() -> Result<T>) -> Option<T> {
        let start = Instant::now();
        let out = f();
        let (ok, error) = match &out {
            Ok(_) => (true, None),
            Err(e) => (false, Some(e.to_string())),
        };
        self.0.push(StageRecord {
            id: id.into(),
            ok,
            error,
            seconds: start.elapsed().as_secs_f64(),
        });
        out.ok()
    }
}

fn solution<'a>(solutions: &'a BTreeMap<String, BsdeSolution>, id: &str) -> Result<&'a BsdeSolution> {
    solutions
        .get(id)
        .ok_or_else(|| Error::invalid(format!("solver `{id}` produced no solution")))
}

fn basis_for(cfg: &ExperimentConfig, id: &str) -> Box<dyn Basis> {
    let b = cfg.solvers.iter().find(|s| s.id == id).map(|s| s.basis).unwrap_or_default();
    make_basis(&b)
}

/// Simulates, solves and evaluates every diagnostic of `cfg` without
/// touching the filesystem. Stage failures are recorded, not returned;
/// only an unbuildable problem is an error.
pub fn run_in_memory(cfg: &ExperimentConfig, registry: &Registry) -> Result<RunOutput> {
    let problem = Problem::build(cfg, registry)?;
    let mut stages = Stages(Vec::new());
    let mut diagnostics = DiagnosticsSummary::default();
    let mut solutions = BTreeMap::new();
    let simulated = stages.run("simulate", || problem.simulate(cfg));
    if let Some((noise, paths)) = &simulated {
        for sc in &cfg.solvers {
            if let Some(s) = stages.run(format!("solve:{}", sc.id), || run_solver(sc, &problem, noise, paths)) {
                solutions.insert(sc.id.clone(), s);
            }
        }
        evaluate(cfg, &problem, noise, paths, &solutions, &mut stages, &mut diagnostics);
    }
    let complete = stages.0.iter().all(|s| s.ok);
    let summary = RunSummary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.sampling.seed,
        paths: cfg.paths(),
        steps: cfg.grid.steps,
        solutions: cfg
            .solvers
            .iter()
            .filter_map(|sc| solutions.get(&sc.id).map(|s| SolutionSummary::of(&sc.id, s)))
            .collect(),
        pass: complete && diagnostics.pass(),
        diagnostics,
        complete,
    };
    let (noise, paths) = simulated.unzip();
    Ok(RunOutput {
        record: RunRecord {
            config: cfg.clone(),
            summary,
            stages: stages.0,
            artifacts: Vec::new(),
        },
        problem,
        noise,
        paths,
        solutions,
    })
}

fn evaluate(
    cfg: &ExperimentConfig,
    problem: &Problem,
    noise: &BrownianBundle,
    paths: &PathBundle,
    solutions: &BTreeMap<String, BsdeSolution>,
    stages: &mut Stages,
    out: &mut DiagnosticsSummary,
) {
    let d = &cfg.diagnostics;
    let dts: Vec<f64> = problem.grid.dts().collect();
    let k_z = problem.spec.constants.k_z;
    for (k, zc) in d.z_growth.iter().enumerate() {
        let entry = stages.run(format!("diag:z_growth[{k}]:{}", zc.solver), || {
            let report = z_growth_report(solution(solutions, &zc.solver)?, paths, zc.r)?;
            let variants = zc
                .compare
                .iter()
                .map(|id| z_growth_report(solution(solutions, id)?, paths, zc.r))
                .collect::<Result<Vec<_>>>()?;
            let stability = (!variants.is_empty()).then(|| growth_stability(&report, &variants));
            let pass = report.max.is_finite()
                && match (&stability, zc.tolerance) {
                    (Some(s), Some(tol)) => s.max_delta <= tol,
                    _ => true,
                };
            Ok(ZGrowthEntry {
                solver: zc.solver.clone(),
                report,
                compare: zc.compare.clone(),
                stability,
                tolerance: zc.tolerance,
                pass,
            })
        });
        out.z_growth.extend(entry);
    }
    for (k, ec) in d.exp_moment.iter().enumerate() {
        let entry = stages.run(format!("diag:exp_moment[{k}]:{}", ec.solver), || {
            let estimate = exp_moment(solution(solutions, &ec.solver)?, ec.q)?;
            Ok(ExpMomentEntry {
                solver: ec.solver.clone(),
                pass: estimate.finite(),
                estimate,
            })
        });
        out.exp_moment.extend(entry);
    }
    for (k, gc) in d.girsanov.iter().enumerate() {
        let entry = stages.run(format!("diag:girsanov[{k}]:{}", gc.solver), || {
            let theta = gradz_along(&problem.spec, solution(solutions, &gc.solver)?, paths, gc.part)?;
            let report = stochastic_exponential(&theta, noise, &dts, &gc.p)?;
            Ok(GirsanovEntry {
                solver: gc.solver.clone(),
                part: gc.part,
                pass: (report.mean - 1.0).abs() <= 3.0 * report.se,
                report,
            })
        });
        out.girsanov.extend(entry);
    }
    for (k, bc) in d.bmo.iter().enumerate() {
        let entry = stages.run(format!("diag:bmo[{k}]:{}", bc.solver), || {
            let theta = gradz_along(&problem.spec, solution(solutions, &bc.solver)?, paths, bc.part)?;
            let estimate = bmo_estimate(&theta, paths, basis_for(cfg, &bc.solver).as_ref())?;
            let pstar = pstar_from_bmo(estimate.value)?;
            Ok(BmoEntry {
                solver: bc.solver.clone(),
                part: bc.part,
                pass: pstar.saturation != Some(Saturation::Lower),
                estimate,
                pstar,
            })
        });
        out.bmo.extend(entry);
    }
    for (k, cc) in d.class_membership.iter().enumerate() {
        let entry = stages.run(format!("diag:class_membership[{k}]:{}", cc.solver), || {
            let report = class_membership(solution(solutions, &cc.solver)?, k_z, &cc.p, &cc.eps)?;
            Ok(ClassMembershipEntry {
                solver: cc.solver.clone(),
                pass: report.all_finite_looking,
                report,
            })
        });
        out.class_membership.extend(entry);
    }
    for (k, uc) in d.uniqueness.iter().enumerate() {
        let entry = stages.run(format!("diag:uniqueness[{k}]:{}~{}", uc.a, uc.b), || {
            let (a, b) = (solution(solutions, &uc.a)?, solution(solutions, &uc.b)?);
            let mut verdict = uniqueness_probe(a, b, uc.scheme_tol)?;
            if uc.classes {
                verdict = verdict.with_classes(vec![
                    class_membership(a, k_z, &uc.p, &uc.eps)?,
                    class_membership(b, k_z, &uc.p, &uc.eps)?,
                ]);
            }
            Ok(UniquenessEntry {
                a: uc.a.clone(),
                b: uc.b.clone(),
                pass: verdict.pass,
                verdict,
            })
        });
        out.uniqueness.extend(entry);
    }
    if let Some(gv) = d.growth_validation {
        out.growth_validation = stages.run("diag:growth_validation", || {
            let report = validate_growth(&problem.spec, problem.model.dim(), gv.samples, gv.eta, gv.seed)?;
            Ok(GrowthValidationEntry {
                pass: report.violations() == 0,
                report,
            })
        });
    }
    if let Some(tc) = d.tangent_check {
        out.tangent_check = stages.run("diag:tangent_check", || {
            let report = tangent_vs_bump(&problem.model, noise, paths, tc.bump)?;
            Ok(TangentEntry {
                pass: report.max_rel_error <= tc.tolerance,
                tolerance: tc.tolerance,
                report,
            })
        });
    }
}

fn artifact(dir: &Path, file: &Path) -> Result<ArtifactRecord> {
    let bytes = std::fs::read(file)?;
    let rel = file.strip_prefix(dir).unwrap_or(file);
    Ok(ArtifactRecord {
        path: rel.to_string_lossy().replace('\\', "/"),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Writes a tensor under `root/sub`, recording paths relative to `root`.
fn tensor(root: &Path, sub: &str, stem: &str, header: TensorHeader, data: &[f64], into: &mut Vec<ArtifactRecord>) -> Result<()> {
    let (bin, json) = write_tensor(&root.join(sub), stem, &header, data)?;
    into.push(artifact(root, &bin)?);
    into.push(artifact(root, &json)?);
    Ok(())
}

/// Writes the config, tensors, `summary.json` and `run_record.json` under `dir`.
pub fn write_run(output: &mut RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let cfg = &output.record.config;
    let grid = output.problem.grid.nodes();
    let seed = Some(cfg.sampling.seed);
    let mut artifacts = Vec::new();
    let config_file = dir.join("config.json");
    write_atomic(&config_file, serde_json::to_string_pretty(cfg)?.as_bytes())?;
    artifacts.push(artifact(dir, &config_file)?);
    if let (Some(noise), Some(paths)) = (&output.noise, &output.paths) {
        let (np, d, nodes) = (paths.paths(), paths.dim(), paths.nodes());
        tensor(dir, "", "increments", TensorHeader::new("increments", noise.shape().to_vec(), seed, grid), noise.as_slice(), &mut artifacts)?;
        tensor(dir, "", "states", TensorHeader::new("states", vec![np, nodes, d], seed, grid), paths.states(), &mut artifacts)?;
        if let Some(t) = paths.tangent_tensor() {
            tensor(dir, "", "tangent", TensorHeader::new("tangent", vec![np, nodes, d, d], seed, grid), t, &mut artifacts)?;
        }
        for sc in &cfg.solvers {
            if let Some(s) = output.solutions.get(&sc.id) {
                tensor(dir, "solutions", &format!("{}_y", sc.id), TensorHeader::new("y", vec![np, nodes], seed, grid), s.y_tensor(), &mut artifacts)?;
                tensor(dir, "solutions", &format!("{}_z", sc.id), TensorHeader::new("z", vec![np, nodes, d], seed, grid), s.z_tensor(), &mut artifacts)?;
            }
        }
    }
    let summary_file = dir.join(SUMMARY);
    write_atomic(&summary_file, serde_json::to_string_pretty(&output.record.summary)?.as_bytes())?;
    artifacts.push(artifact(dir, &summary_file)?);
    output.record.artifacts = artifacts;
    write_atomic(&dir.join(RUN_RECORD), serde_json::to_string_pretty(&output.record)?.as_bytes())?;
    Ok(())
}

/// [`run_in_memory`] followed by [`write_run`] when `out` is given.
pub fn run_experiment(cfg: &ExperimentConfig, registry: &Registry, out: Option<&Path>) -> Result<RunOutput> {
    let mut output = run_in_memory(cfg, registry)?;
    if let Some(dir) = out {
        write_run(&mut output, dir)?;
    }
    Ok(output)
}

/// Runs `f` on a pool of `threads` workers; `None` keeps the global pool.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("thread count must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))
            .map(|pool| pool.install(f)),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}
