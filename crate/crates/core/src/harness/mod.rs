//! Config-driven experiments: the component registry, JSON configs,
//! staged runs with artifacts, and reports.

mod config;
mod registry;
mod report;
mod run;

pub use config::{
    load_config, parse_config, BasisConfig, BasisKind, BmoConfig, ClassConfig, Component, DiagnosticsConfig,
    ExpMomentConfig, ExperimentConfig, GeneratorConfig, GirsanovConfig, GridConfig, GrowthValidationConfig, Mode,
    ModelConfig, SamplingConfig, SolverConfig, SolverKind, TangentCheckConfig, UniquenessConfig, ZGrowthConfig,
};
pub use registry::{EntryInfo, Kind, Params, Registry};
pub use run::{
    make_basis, run_experiment, run_in_memory, run_solver, with_threads, write_run, ArtifactRecord, BmoEntry,
    ClassMembershipEntry, DiagnosticsSummary, ExpMomentEntry, GirsanovEntry, GrowthValidationEntry, Problem, RunOutput,
    RunRecord, RunSummary, SolutionSummary, StageRecord, TangentEntry, UniquenessEntry, ZGrowthEntry, RUN_RECORD, SUMMARY,
};
pub use report::{emit_report, Format, Report, StageStatus, UniquenessSection, Z_GROWTH_HEADER};
