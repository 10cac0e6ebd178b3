use serde::{Deserialize, Serialize};

use crate::engine::{norm, PathBundle};
use crate::solvers::BsdeSolution;
use crate::{Error, Result};

/// Per-node distribution of `|Z_t| / (1 + sup_{s≤t}|X_s|^r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZGrowthReport {
    pub r: f64,
    pub times: Vec<f64>,
    pub mean_ratio: Vec<f64>,
    pub q999_ratio: Vec<f64>,
    pub max_ratio: Vec<f64>,
    /// Max over nodes of the per-node maxima.
    pub max: f64,
    /// Max over nodes of the per-node 99.9% quantiles.
    pub q999: f64,
    /// 99.9% quantile of `|Z_t|` itself, pooled over nodes.
    pub z_q999: f64,
}

/// Nearest-rank quantile of a sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn z_growth_report(solution: &BsdeSolution, paths: &PathBundle, r: f64) -> Result<ZGrowthReport> {
    if !solution.same_bundle(paths) {
        return Err(Error::invalid("solution was computed on a different path bundle"));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("growth exponent must be nonnegative, got {r}")));
    }
    let n = paths.nodes() - 1;
    let np = paths.paths();
    let mut report = ZGrowthReport {
        r,
        times: paths.grid().nodes()[..n].to_vec(),
        mean_ratio: Vec::with_capacity(n),
        q999_ratio: Vec::with_capacity(n),
        max_ratio: Vec::with_capacity(n),
        max: 0.0,
        q999: 0.0,
        z_q999: 0.0,
    };
    let mut pooled = Vec::with_capacity(np * n);
    for i in 0..n {
        let mut ratios: Vec<f64> = (0..np)
            .map(|p| {
                let z = norm(solution.z(p, i));
                pooled.push(z);
                z / (1.0 + paths.running_sup(p, i).powf(r))
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        report.mean_ratio.push(ratios.iter().sum::<f64>() / np as f64);
        report.q999_ratio.push(quantile_sorted(&ratios, 0.999));
        report.max_ratio.push(*ratios.last().unwrap_or(&0.0));
    }
    pooled.sort_by(f64::total_cmp);
    report.z_q999 = quantile_sorted(&pooled, 0.999);
    report.max = report.max_ratio.iter().copied().fold(0.0, f64::max);
    report.q999 = report.q999_ratio.iter().copied().fold(0.0, f64::max);
    if report.max.is_nan() {
        return Err(Error::invalid("ratio is not finite"));
    }
    Ok(report)
}

/// Relative change `|a − b| / |a|`, zero when both vanish.
pub fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs()
    }
}

/// Spread of a report statistic across solution variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthStability {
    /// Largest `|v − base| / base` over variants for the overall max ratio.
    pub max_delta: f64,
    pub q999_delta: f64,
    pub z_q999_delta: f64,
}

pub fn growth_stability(base: &ZGrowthReport, variants: &[ZGrowthReport]) -> GrowthStability {
    let worst = |f: fn(&ZGrowthReport) -> f64| {
        variants
            .iter()
            .map(|v| relative_change(f(base), f(v)))
            .fold(0.0, f64::max)
    };
    GrowthStability {
        max_delta: worst(|r| r.max),
        q999_delta: worst(|r| r.q999),
        z_q999_delta: worst(|r| r.z_q999),
    }
}
