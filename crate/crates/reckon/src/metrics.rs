//! Aggregate statistics over per-site target counts, baseline
//! normalization, scores, and the policy ranking.

use std::collections::HashMap;

use crate::model::{FunctionTable, ProgramModel};
use crate::policies::{PolicyId, TargetSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no per-site values to aggregate")]
    EmptyInput,
    #[error("baseline must be positive, got {0}")]
    BadBaseline(i64),
}

/// Aggregates over per-site counts. The standard deviation uses the
/// population form (divide by n); the 90th percentile is the value at
/// ascending rank ceil(0.9 n), so 90% of the values are less than or equal
/// to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStats {
    pub sum: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub avg: f64,
    pub sd: f64,
    pub p90: f64,
}

impl AggregateStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let sum: f64 = sorted.iter().sum();
        let avg = sum / n as f64;
        let sd = (sorted.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / n as f64).sqrt();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            sum,
            min: sorted[0],
            max: sorted[n - 1],
            median,
            avg,
            sd,
            p90: sorted[rank - 1],
        })
    }

    fn scaled(&self, f: f64) -> Self {
        Self {
            sum: self.sum * f,
            min: self.min * f,
            max: self.max * f,
            median: self.median * f,
            avg: self.avg * f,
            sd: self.sd * f,
            p90: self.p90 * f,
        }
    }
}

/// Per-site counts that feed `ctr`: the sizes of the applicable target
/// sets, in callsite order.
pub fn per_site_counts(sets: &[TargetSet]) -> Vec<f64> {
    sets.iter()
        .filter(|s| !s.skipped)
        .map(|s| s.targets.len() as f64)
        .collect()
}

/// Calltarget reduction: aggregates of per-callsite legitimate target
/// counts. The optimum equals the callsite count (one target each).
pub fn ctr(sets: &[TargetSet]) -> Result<AggregateStats, MetricsError> {
    AggregateStats::from_values(&per_site_counts(sets))
}

/// Per-function legitimate return-target counts: callsites whose allowed
/// set contains the function, plus its direct callers.
pub fn return_target_counts(model: &ProgramModel, sets: &[TargetSet]) -> Vec<(String, usize)> {
    let ft = FunctionTable::new(model);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for id in ft.ids() {
        counts.insert(ft.reference(id), 0);
    }
    for set in sets.iter().filter(|s| !s.skipped) {
        for t in &set.targets {
            if let Some(c) = counts.get_mut(t.as_str()) {
                *c += 1;
            }
        }
    }
    for dc in &model.direct_calls {
        if let Some(id) = ft.resolve_ref(&dc.to) {
            *counts.get_mut(ft.reference(id)).expect("indexed") += 1;
        }
    }
    ft.ids()
        .map(|id| {
            let r = ft.reference(id);
            (r.to_string(), counts[r])
        })
        .collect()
}

/// Return-target reduction over every function in the model.
pub fn rtr(model: &ProgramModel, sets: &[TargetSet]) -> Result<AggregateStats, MetricsError> {
    let values: Vec<f64> = return_target_counts(model, sets)
        .iter()
        .map(|(_, c)| *c as f64)
        .collect();
    AggregateStats::from_values(&values)
}

/// Forward gadget availability: how many allowed targets across all
/// callsites carry a gadget annotation. Zero means every gadget is fenced
/// off by the policy.
pub fn fcga(sets: &[TargetSet], model: &ProgramModel) -> usize {
    let ft = FunctionTable::new(model);
    sets.iter()
        .filter(|s| !s.skipped)
        .map(|s| {
            s.targets
                .iter()
                .filter(|t| {
                    ft.resolve_ref(t)
                        .map(|id| ft.member(id).has_gadgets())
                        .unwrap_or(false)
                })
                .count()
        })
        .sum()
}

/// Backward gadget availability: legitimate return targets of
/// gadget-annotated functions.
pub fn bcga(sets: &[TargetSet], model: &ProgramModel) -> usize {
    let ft = FunctionTable::new(model);
    return_target_counts(model, sets)
        .iter()
        .filter(|(r, _)| {
            ft.resolve_ref(r)
                .map(|id| ft.member(id).has_gadgets())
                .unwrap_or(false)
        })
        .map(|(_, c)| *c)
        .sum()
}

/// Callsite damping: total runtime-check cost, `k` per check. The optimum
/// is one check per protected site.
pub fn csd(checks_per_callsite: &[u64], k: f64) -> f64 {
    checks_per_callsite.iter().map(|&c| c as f64 * k).sum()
}

/// Return-site damping, same shape as `csd`.
pub fn rsd(checks_per_return_site: &[u64], k: f64) -> f64 {
    csd(checks_per_return_site, k)
}

/// Scales every per-site value to percent of baseline before aggregation;
/// all aggregates here are positively homogeneous, so scaling the stats is
/// exact.
pub fn normalize(stats: &AggregateStats, baseline: usize) -> Result<AggregateStats, MetricsError> {
    if baseline == 0 {
        return Err(MetricsError::BadBaseline(0));
    }
    Ok(stats.scaled(100.0 / baseline as f64))
}

/// One policy's metric bundle, ready for ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: PolicyId,
    pub ctr: AggregateStats,
    pub normalized: AggregateStats,
    pub baseline_used: usize,
    pub rtr: Option<AggregateStats>,
    pub fcga: Option<usize>,
    pub bcga: Option<usize>,
    pub csd: Option<f64>,
    pub rsd: Option<f64>,
}

/// Ascending by normalized average (smaller is stronger); ties break by
/// normalized 90th percentile, then policy name.
pub fn rank_policies(reports: &[MetricsReport]) -> Vec<PolicyId> {
    let mut order: Vec<&MetricsReport> = reports.iter().collect();
    order.sort_by(|a, b| {
        a.normalized
            .avg
            .partial_cmp(&b.normalized.avg)
            .expect("finite averages")
            .then(
                a.normalized
                    .p90
                    .partial_cmp(&b.normalized.p90)
                    .expect("finite percentiles"),
            )
            .then_with(|| a.policy.as_str().cmp(b.policy.as_str()))
    });
    order.iter().map(|r| r.policy).collect()
}

/// The two score bars of a report: raw average and 90th percentile targets
/// per callsite. The optimal score is one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub avg: f64,
    pub p90: f64,
}

pub fn score(report: &MetricsReport) -> Score {
    Score {
        avg: report.ctr.avg,
        p90: report.ctr.p90,
    }
}
