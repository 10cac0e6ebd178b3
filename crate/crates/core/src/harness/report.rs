use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{DiagnosticsSummary, RunRecord, SolutionSummary, UniquenessEntry};
use crate::engine::tensor_io::write_atomic;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
#[cfg_attr(feature = "cli", derive(clap::ValueEnum))]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Header of the per-node `Z`-growth curves.
pub const Z_GROWTH_HEADER: [&str; 4] = ["t", "mean_ratio", "q999_ratio", "max_ratio"];

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessSection<'a> {
    /// Every requested probe passed; `true` when none was requested.
    pub pass: bool,
    pub probes: &'a [UniquenessEntry],
}

#[derive(Debug, Clone, Serialize)]
pub struct StageStatus<'a> {
    pub id: &'a str,
    pub ok: bool,
    pub error: Option<&'a str>,
}

/// JSON report layout; timings are left out so reruns compare equal.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub name: &'a str,
    pub config_hash: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub pass: bool,
    pub uniqueness: UniquenessSection<'a>,
    pub solutions: &'a [SolutionSummary],
    pub diagnostics: &'a DiagnosticsSummary,
    pub stages: Vec<StageStatus<'a>>,
}

impl<'a> Report<'a> {
    /// Fails with [`Error::ReportIncomplete`] unless every stage succeeded.
    pub fn new(record: &'a RunRecord) -> Result<Self> {
        if record.stages.is_empty() {
            return Err(Error::ReportIncomplete {
                missing: vec!["simulate".into()],
            });
        }
        let failed = record.failed_stages();
        if !failed.is_empty() {
            return Err(Error::ReportIncomplete { missing: failed });
        }
        let s = &record.summary;
        Ok(Self {
            name: &s.name,
            config_hash: &s.config_hash,
            version: &s.version,
            seed: s.seed,
            paths: s.paths,
            steps: s.steps,
            pass: s.pass,
            uniqueness: UniquenessSection {
                pass: s.diagnostics.uniqueness.iter().all(|u| u.pass),
                probes: &s.diagnostics.uniqueness,
            },
            solutions: &s.solutions,
            diagnostics: &s.diagnostics,
            stages: record
                .stages
                .iter()
                .map(|st| StageStatus {
                    id: &st.id,
                    ok: st.ok,
                    error: st.error.as_deref(),
                })
                .collect(),
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// File-name safe version of a solver id.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `report.json`, or the CSV curves, under `dir`; returns the files.
///
/// CSV output is one `z_growth_<solver>.csv` per growth diagnostic, one
/// `y_<solver>.csv` per solution (`t,mean_y,se_y`) and one
/// `uniqueness_<a>_<b>.csv` per probe (`t,mean_abs_dy,max_abs_dy`).
pub fn emit_report(record: &RunRecord, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    let report = Report::new(record)?;
    std::fs::create_dir_all(dir)?;
    let times = record.config.grid_nodes()?;
    let mut files = Vec::new();
    match format {
        Format::Json => {
            let path = dir.join("report.json");
            write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            files.push(path);
        }
        Format::Csv => {
            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            for e in &report.diagnostics.z_growth {
                let n = seen.entry(e.solver.clone()).or_default();
                let stem = match *n {
                    0 => format!("z_growth_{}", slug(&e.solver)),
                    k => format!("z_growth_{}_{k}", slug(&e.solver)),
                };
                *n += 1;
                let path = dir.join(format!("{stem}.csv"));
                let r = &e.report;
                write_csv(
                    &path,
                    &Z_GROWTH_HEADER,
                    (0..r.times.len()).map(|i| vec![r.times[i], r.mean_ratio[i], r.q999_ratio[i], r.max_ratio[i]]),
                )?;
                files.push(path);
            }
            for s in report.solutions {
                let path = dir.join(format!("y_{}.csv", slug(&s.id)));
                let rows = s.y_mean.iter().zip(&s.y_se).zip(&times).map(|((m, se), t)| vec![*t, *m, *se]);
                write_csv(&path, &["t", "mean_y", "se_y"], rows)?;
                files.push(path);
            }
            for u in report.uniqueness.probes {
                let path = dir.join(format!("uniqueness_{}_{}.csv", slug(&u.a), slug(&u.b)));
                let v = &u.verdict;
                let rows = (0..v.mean_abs.len()).map(|i| vec![times[i], v.mean_abs[i], v.max_abs[i]]);
                write_csv(&path, &["t", "mean_abs_dy", "max_abs_dy"], rows)?;
                files.push(path);
            }
        }
    }
    Ok(files)
}
