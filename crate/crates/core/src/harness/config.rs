use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::registry::{Params, Registry};
use crate::diagnostics::{GradPart, DEFAULT_EPS_GRID, DEFAULT_LP, DEFAULT_P_GRID};
use crate::engine::NoiseKind;
use crate::generators::Constants;
use crate::solvers::{ColeHopfOptions, PicardOptions};
use crate::{Error, Result};

/// A registry reference: component name plus numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub name: String,
    #[serde(default)]
    pub params: Params,
}

impl Component {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            params: Params::new(),
        }
    }
}

fn zero() -> Component {
    Component::named("zero")
}

fn unit_sigma() -> Component {
    Component::named("constant")
}

/// Diffusion mode: `F1` is additive noise `σ(s)`, `F2` is `σ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    F1,
    F2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "f1")]
    pub mode: Mode,
    #[serde(default = "origin")]
    pub x0: Vec<f64>,
    #[serde(default = "zero")]
    pub drift: Component,
    #[serde(default = "unit_sigma")]
    pub sigma: Component,
    #[serde(default = "yes")]
    pub fd_fallback: bool,
}

fn f1() -> Mode {
    Mode::F1
}

fn origin() -> Vec<f64> {
    vec![0.0]
}

fn yes() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::F1,
            x0: origin(),
            drift: zero(),
            sigma: unit_sigma(),
            fd_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default = "zero")]
    pub f: Component,
    #[serde(default = "zero")]
    pub g: Component,
    #[serde(default = "zero")]
    pub h: Component,
    #[serde(default = "zero")]
    pub xi: Component,
    #[serde(default = "no_constants")]
    pub constants: Constants,
}

fn no_constants() -> Constants {
    Constants::new(0.0, 0.0)
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            f: zero(),
            g: zero(),
            h: zero(),
            xi: zero(),
            constants: no_constants(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default = "ten")]
    pub steps: usize,
}

fn unit() -> f64 {
    1.0
}

fn ten() -> usize {
    10
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { horizon: 1.0, steps: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Required for Gaussian noise; a Bernoulli tree always has `2^steps`.
    #[serde(default)]
    pub paths: Option<usize>,
    pub seed: u64,
    #[serde(default = "gaussian")]
    pub noise: NoiseKind,
    #[serde(default)]
    pub tangent: bool,
}

fn gaussian() -> NoiseKind {
    NoiseKind::Gaussian
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lsmc,
    Tree,
    ColeHopf,
    Linear,
    Additive,
    Malliavin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Polynomial,
    PrefixIndicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "polynomial")]
    pub kind: BasisKind,
    #[serde(default = "three")]
    pub degree: usize,
    #[serde(default = "yes")]
    pub include_sup: bool,
}

fn polynomial() -> BasisKind {
    BasisKind::Polynomial
}

fn three() -> usize {
    3
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            kind: BasisKind::Polynomial,
            degree: 3,
            include_sup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub id: String,
    pub method: SolverKind,
    #[serde(default = "sixteen")]
    pub truncation: f64,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub picard: PicardOptions,
    #[serde(default)]
    pub cole_hopf: ColeHopfOptions,
}

fn sixteen() -> f64 {
    16.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGrowthConfig {
    pub solver: String,
    #[serde(default)]
    pub r: f64,
    /// Solvers on the same bundle compared against `solver`.
    #[serde(default)]
    pub compare: Vec<String>,
    /// Largest relative change of the max ratio across `compare`.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpMomentConfig {
    pub solver: String,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    pub solver: String,
    #[serde(default = "full")]
    pub part: GradPart,
    #[serde(default = "lp_grid")]
    pub p: Vec<f64>,
}

fn full() -> GradPart {
    GradPart::Full
}

fn lp_grid() -> Vec<f64> {
    DEFAULT_LP.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmoConfig {
    pub solver: String,
    #[serde(default = "full")]
    pub part: GradPart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub solver: String,
    #[serde(default = "p_grid")]
    pub p: Vec<f64>,
    #[serde(default = "eps_grid")]
    pub eps: Vec<f64>,
}

fn p_grid() -> Vec<f64> {
    DEFAULT_P_GRID.to_vec()
}

fn eps_grid() -> Vec<f64> {
    DEFAULT_EPS_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    pub a: String,
    pub b: String,
    #[serde(default = "scheme_tol")]
    pub scheme_tol: f64,
    /// Attach class-membership reports of both solutions; the verdict
    /// then also requires every ladder entry to look finite.
    #[serde(default)]
    pub classes: bool,
    #[serde(default = "p_grid")]
    pub p: Vec<f64>,
    #[serde(default = "eps_grid")]
    pub eps: Vec<f64>,
}

fn scheme_tol() -> f64 {
    2e-2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthValidationConfig {
    #[serde(default = "samples")]
    pub samples: usize,
    #[serde(default = "eta")]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
}

fn samples() -> usize {
    10_000
}

fn eta() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangentCheckConfig {
    #[serde(default = "bump")]
    pub bump: f64,
    #[serde(default = "milli")]
    pub tolerance: f64,
}

fn bump() -> f64 {
    1e-5
}

fn milli() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default)]
    pub z_growth: Vec<ZGrowthConfig>,
    #[serde(default)]
    pub exp_moment: Vec<ExpMomentConfig>,
    #[serde(default)]
    pub girsanov: Vec<GirsanovConfig>,
    #[serde(default)]
    pub bmo: Vec<BmoConfig>,
    #[serde(default)]
    pub class_membership: Vec<ClassConfig>,
    #[serde(default)]
    pub uniqueness: Vec<UniquenessConfig>,
    #[serde(default)]
    pub growth_validation: Option<GrowthValidationConfig>,
    #[serde(default)]
    pub tangent_check: Option<TangentCheckConfig>,
}

impl DiagnosticsConfig {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "experiment")]
    pub name: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub solvers: Vec<SolverConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn experiment() -> String {
    "experiment".into()
}

/// Reads, validates and materialises a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?, &Registry::builtin())
}

/// [`load_config`] on a string with an explicit registry.
pub fn parse_config(text: &str, registry: &Registry) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        Error::schema(if field == "." { "<root>".to_string() } else { field }, e.into_inner().to_string())
    })?;
    cfg.materialize(registry)
}

/// Prefixes the field of a schema error with its location in the config.
fn within<T>(at: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Schema { field, message } => Error::schema(format!("{at}.{field}"), message),
        other => other,
    })
}

impl ExperimentConfig {
    /// Validates against `registry` and writes every defaulted
    /// component parameter into the config.
    pub fn materialize(mut self, registry: &Registry) -> Result<Self> {
        let m = &mut self.model;
        m.drift.params = within("model.drift.params", registry.drift_params(&m.drift.name, &m.drift.params))?;
        m.sigma.params = within(
            "model.sigma.params",
            match m.mode {
                Mode::F1 => registry.time_diffusion_params(&m.sigma.name, &m.sigma.params),
                Mode::F2 => registry.state_diffusion_params(&m.sigma.name, &m.sigma.params),
            },
        )?;
        if m.x0.is_empty() || m.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema("model.x0", "must be a non-empty vector of finite reals"));
        }
        let g = &mut self.generator;
        for (at, c) in [("generator.f.params", &mut g.f), ("generator.g.params", &mut g.g)] {
            c.params = within(at, registry.driver_params(&c.name, &c.params))?;
        }
        for (at, c) in [("generator.h.params", &mut g.h), ("generator.xi.params", &mut g.xi)] {
            c.params = within(at, registry.functional_params(&c.name, &c.params))?;
        }
        within("generator.constants", g.constants.validate())?;
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return Err(Error::schema("grid.horizon", format!("must be positive, got {}", self.grid.horizon)));
        }
        if self.grid.steps == 0 {
            return Err(Error::schema("grid.steps", "must be at least 1"));
        }
        match self.sampling.noise {
            NoiseKind::Gaussian => match self.sampling.paths {
                Some(p) if p > 0 => {}
                _ => return Err(Error::schema("sampling.paths", "Gaussian sampling needs a positive path count")),
            },
            NoiseKind::BernoulliTree => {
                if self.model.x0.len() != 1 {
                    return Err(Error::schema("sampling.noise", "the Bernoulli tree drives scalar models only"));
                }
                if self.grid.steps > crate::engine::MAX_TREE_DEPTH {
                    return Err(Error::ResourceLimit(format!(
                        "tree depth {} exceeds {}",
                        self.grid.steps,
                        crate::engine::MAX_TREE_DEPTH
                    )));
                }
                let expect = 1usize << self.grid.steps;
                match self.sampling.paths {
                    None => self.sampling.paths = Some(expect),
                    Some(p) if p == expect => {}
                    Some(p) => {
                        return Err(Error::schema(
                            "sampling.paths",
                            format!("a tree of depth {} has {expect} paths, got {p}", self.grid.steps),
                        ))
                    }
                }
            }
        }
        let mut ids = BTreeSet::new();
        for (k, s) in self.solvers.iter().enumerate() {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::schema(format!("solvers[{k}].id"), format!("duplicate solver id `{}`", s.id)));
            }
            if s.truncation.is_nan() || s.truncation <= 1.0 {
                return Err(Error::schema(format!("solvers[{k}].truncation"), "truncation level must exceed 1"));
            }
            if s.method == SolverKind::Additive && self.model.mode != Mode::F1 {
                return Err(Error::schema(format!("solvers[{k}].method"), "the additive decomposition needs mode F1"));
            }
            if s.method == SolverKind::Tree && self.sampling.noise != NoiseKind::BernoulliTree {
                return Err(Error::schema(format!("solvers[{k}].method"), "the tree solver needs sampling.noise = bernoulli_tree"));
            }
        }
        let known = |field: String, id: &str| -> Result<()> {
            if ids.contains(id) {
                Ok(())
            } else {
                Err(Error::UnknownRegistryName {
                    kind: "solver id",
                    name: format!("{id} (in {field})"),
                    available: ids.iter().map(|s| s.to_string()).collect(),
                })
            }
        };
        let d = &self.diagnostics;
        for (k, z) in d.z_growth.iter().enumerate() {
            known(format!("diagnostics.z_growth[{k}]"), &z.solver)?;
            for c in &z.compare {
                known(format!("diagnostics.z_growth[{k}].compare"), c)?;
            }
            if !(0.0..1.0).contains(&z.r) {
                return Err(Error::schema(format!("diagnostics.z_growth[{k}].r"), "r must lie in [0,1)"));
            }
        }
        for (k, e) in d.exp_moment.iter().enumerate() {
            known(format!("diagnostics.exp_moment[{k}]"), &e.solver)?;
            if !(e.q > 0.0) {
                return Err(Error::schema(format!("diagnostics.exp_moment[{k}].q"), "must be positive"));
            }
        }
        for (k, e) in d.girsanov.iter().enumerate() {
            known(format!("diagnostics.girsanov[{k}]"), &e.solver)?;
        }
        for (k, e) in d.bmo.iter().enumerate() {
            known(format!("diagnostics.bmo[{k}]"), &e.solver)?;
        }
        let kz = self.generator.constants.k_z;
        let ladder = |field: String, p: &[f64]| -> Result<()> {
            if !(kz > 0.0) {
                return Err(Error::schema("generator.constants.k_z", "class membership needs K_z > 0"));
            }
            if p.iter().any(|v| !(*v > 1.0)) {
                return Err(Error::schema(field, "ladder exponents must exceed 1"));
            }
            Ok(())
        };
        for (k, e) in d.class_membership.iter().enumerate() {
            known(format!("diagnostics.class_membership[{k}]"), &e.solver)?;
            ladder(format!("diagnostics.class_membership[{k}].p"), &e.p)?;
        }
        for (k, u) in d.uniqueness.iter().enumerate() {
            known(format!("diagnostics.uniqueness[{k}].a"), &u.a)?;
            known(format!("diagnostics.uniqueness[{k}].b"), &u.b)?;
            if u.classes {
                ladder(format!("diagnostics.uniqueness[{k}].p"), &u.p)?;
            }
        }
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sampling.seed = seed;
        self
    }

    /// Canonical (sorted-key, compact) JSON.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn grid_nodes(&self) -> Result<Vec<f64>> {
        Ok(crate::engine::TimeGrid::uniform(self.grid.horizon, self.grid.steps)?.nodes().to_vec())
    }

    pub fn paths(&self) -> usize {
        self.sampling.paths.unwrap_or(1 << self.grid.steps)
    }
}
