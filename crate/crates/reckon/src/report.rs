//! Deterministic rendering of assessment results as fixed-width tables,
//! RFC-4180 CSV, or sorted-key JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde_json::json;

use crate::gadgets::ControllableRow;
use crate::metrics::{normalize, per_site_counts, rank_policies, AggregateStats, MetricsReport};
use crate::policies::{Assessor, PolicyFilter, PolicyId, TargetSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_row(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_field(f))
        .collect::<Vec<_>>()
        .join(",")
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

/// One policy's block of an assessment report.
#[derive(Debug, Clone)]
pub struct PolicyBlock {
    pub policy: PolicyId,
    pub baseline_all: usize,
    pub baseline_virtual: usize,
    pub sets: Vec<TargetSet>,
    pub aggregates: Option<AggregateStats>,
}

#[derive(Debug, Clone)]
pub struct AssessReport {
    pub program: String,
    pub blocks: Vec<PolicyBlock>,
}

pub fn build_assess(
    assessor: &Assessor,
    policies: &[PolicyId],
    filter: &PolicyFilter,
) -> AssessReport {
    // Policies evaluate independently over the shared immutable context;
    // collection preserves the requested order.
    let blocks = policies
        .par_iter()
        .map(|&policy| {
            let sets = assessor.assess(policy, filter);
            let counts = per_site_counts(&sets);
            let aggregates = AggregateStats::from_values(&counts).ok();
            PolicyBlock {
                policy,
                baseline_all: assessor.baseline_all(),
                baseline_virtual: assessor.baseline_virtual(),
                sets,
                aggregates,
            }
        })
        .collect();
    AssessReport {
        program: assessor.model().program.clone(),
        blocks,
    }
}

pub fn render_assess(
    report: &AssessReport,
    model: &crate::model::ProgramModel,
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Table => render_assess_table(report, model),
        ReportFormat::Csv => render_assess_csv(report, model),
        ReportFormat::Json => render_assess_json(report, model),
    }
}

fn callsite_meta<'m>(model: &'m crate::model::ProgramModel, id: &str) -> (&'m str, usize) {
    model
        .callsites
        .iter()
        .find(|c| c.id == id)
        .map(|c| (c.location.as_str(), c.provided_arg_types.len()))
        .unwrap_or(("", 0))
}

fn render_assess_table(report: &AssessReport, model: &crate::model::ProgramModel) -> String {
    let mut out = String::new();
    for b in &report.blocks {
        let _ = writeln!(out, "== policy: {} ==", b.policy);
        let _ = writeln!(out, "{:<24}{:>12}", "Baseline all func.", b.baseline_all);
        let _ = writeln!(
            out,
            "{:<24}{:>12}",
            "Baseline virtual func.", b.baseline_virtual
        );
        let _ = writeln!(
            out,
            "{:<12}{:<28}{:>8}{:>10}",
            "callsite", "location", "params", "targets"
        );
        for s in &b.sets {
            let (loc, params) = callsite_meta(model, &s.callsite_id);
            if s.skipped {
                let _ = writeln!(
                    out,
                    "{:<12}{:<28}{:>8}{:>10}",
                    s.callsite_id, loc, params, "skipped"
                );
            } else {
                let _ = writeln!(
                    out,
                    "{:<12}{:<28}{:>8}{:>10}",
                    s.callsite_id,
                    loc,
                    params,
                    s.targets.len()
                );
            }
        }
        match &b.aggregates {
            Some(a) => {
                let _ = writeln!(out, "{:<12}{:>10}", "Min", num(a.min));
                let _ = writeln!(out, "{:<12}{:>10}", "90p", num(a.p90));
                let _ = writeln!(out, "{:<12}{:>10}", "Max", num(a.max));
                let _ = writeln!(out, "{:<12}{:>10}", "Median", num(a.median));
                let _ = writeln!(out, "{:<12}{:>10}", "Avg", num(a.avg));
            }
            None => {
                let _ = writeln!(out, "no applicable callsites");
            }
        }
    }
    out
}

fn render_assess_csv(report: &AssessReport, model: &crate::model::ProgramModel) -> String {
    let mut rows = vec![csv_row(&[
        "policy".into(),
        "callsite_id".into(),
        "location".into(),
        "param_count".into(),
        "target_count".into(),
    ])];
    for b in &report.blocks {
        let policy = b.policy.to_string();
        for s in b.sets.iter().filter(|s| !s.skipped) {
            let (loc, params) = callsite_meta(model, &s.callsite_id);
            rows.push(csv_row(&[
                policy.clone(),
                s.callsite_id.clone(),
                loc.to_string(),
                params.to_string(),
                s.targets.len().to_string(),
            ]));
        }
        let mut agg_row = |name: &str, value: String| {
            rows.push(csv_row(&[
                policy.clone(),
                name.to_string(),
                String::new(),
                String::new(),
                value,
            ]));
        };
        agg_row("baseline_all", b.baseline_all.to_string());
        agg_row("baseline_virtual", b.baseline_virtual.to_string());
        if let Some(a) = &b.aggregates {
            agg_row("min", num(a.min));
            agg_row("p90", num(a.p90));
            agg_row("max", num(a.max));
            agg_row("median", num(a.median));
            agg_row("avg", num(a.avg));
        }
    }
    rows.join("\n") + "\n"
}

fn render_assess_json(report: &AssessReport, model: &crate::model::ProgramModel) -> String {
    let policies: Vec<serde_json::Value> = report
        .blocks
        .iter()
        .map(|b| {
            let callsites: Vec<serde_json::Value> = b
                .sets
                .iter()
                .map(|s| {
                    let (loc, params) = callsite_meta(model, &s.callsite_id);
                    json!({
                        "id": s.callsite_id,
                        "location": loc,
                        "paramCount": params,
                        "skipped": s.skipped,
                        "targetCount": s.targets.len(),
                        "targets": s.targets.iter().collect::<Vec<_>>(),
                    })
                })
                .collect();
            json!({
                "policy": b.policy.to_string(),
                "baselineAll": b.baseline_all,
                "baselineVirtual": b.baseline_virtual,
                "callsites": callsites,
                "aggregates": b.aggregates.as_ref().map(|a| json!({
                    "min": a.min,
                    "p90": a.p90,
                    "max": a.max,
                    "median": a.median,
                    "avg": a.avg,
                    "sum": a.sum,
                    "sd": a.sd,
                })),
            })
        })
        .collect();
    let doc = json!({ "program": report.program, "policies": policies });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

#[derive(Debug, Clone)]
pub struct RankRow {
    pub policy: PolicyId,
    pub baseline: usize,
    pub normalized: AggregateStats,
}

#[derive(Debug, Clone)]
pub struct RankReport {
    pub rows: Vec<RankRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum RankError {
    #[error("no applicable callsites to rank")]
    NoApplicableCallsites,
}

/// Runs all eight policies, normalizes each against its applicable
/// baseline, and orders ascending by normalized average.
pub fn build_rank(assessor: &Assessor) -> Result<RankReport, RankError> {
    let mut reports = Vec::new();
    let mut baselines: BTreeMap<PolicyId, usize> = BTreeMap::new();
    for &policy in &PolicyId::ALL {
        let sets = assessor.assess(policy, &PolicyFilter::default());
        let counts = per_site_counts(&sets);
        let baseline = if policy.virtual_only() {
            assessor.baseline_virtual()
        } else {
            assessor.baseline_all()
        };
        let Ok(ctr_stats) = AggregateStats::from_values(&counts) else {
            continue;
        };
        let Ok(normalized) = normalize(&ctr_stats, baseline) else {
            continue;
        };
        baselines.insert(policy, baseline);
        reports.push(MetricsReport {
            policy,
            ctr: ctr_stats,
            normalized,
            baseline_used: baseline,
            rtr: None,
            fcga: None,
            bcga: None,
            csd: None,
            rsd: None,
        });
    }
    if reports.is_empty() {
        return Err(RankError::NoApplicableCallsites);
    }
    let order = rank_policies(&reports);
    let rows = order
        .into_iter()
        .map(|p| {
            let r = reports.iter().find(|r| r.policy == p).expect("ranked");
            RankRow {
                policy: p,
                baseline: baselines[&p],
                normalized: r.normalized,
            }
        })
        .collect();
    Ok(RankReport { rows })
}

pub fn render_rank(report: &RankReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:<6}{:<24}{:>10}{:>10}{:>10}{:>12}",
                "rank", "policy", "avg", "sd", "90p", "baseline"
            );
            for (i, r) in report.rows.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:<6}{:<24}{:>10}{:>10}{:>10}{:>12}",
                    i + 1,
                    r.policy.to_string(),
                    num(r.normalized.avg),
                    num(r.normalized.sd),
                    num(r.normalized.p90),
                    r.baseline
                );
            }
            out
        }
        ReportFormat::Csv => {
            let mut rows = vec![csv_row(&[
                "rank".into(),
                "policy".into(),
                "avg".into(),
                "sd".into(),
                "p90".into(),
                "baseline".into(),
            ])];
            for (i, r) in report.rows.iter().enumerate() {
                rows.push(csv_row(&[
                    (i + 1).to_string(),
                    r.policy.to_string(),
                    num(r.normalized.avg),
                    num(r.normalized.sd),
                    num(r.normalized.p90),
                    r.baseline.to_string(),
                ]));
            }
            rows.join("\n") + "\n"
        }
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = report
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    json!({
                        "rank": i + 1,
                        "policy": r.policy.to_string(),
                        "avg": r.normalized.avg,
                        "sd": r.normalized.sd,
                        "p90": r.normalized.p90,
                        "baseline": r.baseline,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&json!({ "ranking": rows })).expect("serializes") + "\n"
        }
    }
}

pub fn render_gadgets(rows: &[ControllableRow], format: ReportFormat) -> String {
    let policy_headers: Vec<String> = PolicyId::ALL.iter().map(|p| p.to_string()).collect();
    match format {
        ReportFormat::Table => {
            let mut out = String::new();
            let _ = write!(
                out,
                "{:<12}{:<28}{:>4}{:>12}{:>10}",
                "callsite", "location", "#", "base-virt", "base-all"
            );
            for h in &policy_headers {
                let _ = write!(out, "{h:>22}");
            }
            out.push('\n');
            for r in rows {
                let _ = write!(
                    out,
                    "{:<12}{:<28}{:>4}{:>12}{:>10}",
                    r.callsite_id, r.location, r.param_count, r.baseline_virtual, r.baseline_all
                );
                for c in r.counts {
                    let _ = write!(out, "{c:>22}");
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Csv => {
            let mut header = vec![
                "callsite_id".to_string(),
                "location".to_string(),
                "param_count".to_string(),
                "baseline_virtual".to_string(),
                "baseline_all".to_string(),
            ];
            header.extend(policy_headers.iter().cloned());
            let mut out_rows = vec![csv_row(&header)];
            for r in rows {
                let mut fields = vec![
                    r.callsite_id.clone(),
                    r.location.clone(),
                    r.param_count.to_string(),
                    r.baseline_virtual.to_string(),
                    r.baseline_all.to_string(),
                ];
                fields.extend(r.counts.iter().map(|c| c.to_string()));
                out_rows.push(csv_row(&fields));
            }
            out_rows.join("\n") + "\n"
        }
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let counts: BTreeMap<String, usize> = PolicyId::ALL
                        .iter()
                        .zip(r.counts.iter())
                        .map(|(p, c)| (p.to_string(), *c))
                        .collect();
                    json!({
                        "callsite": r.callsite_id,
                        "location": r.location,
                        "paramCount": r.param_count,
                        "baselineVirtual": r.baseline_virtual,
                        "baselineAll": r.baseline_all,
                        "targets": counts,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&json!({ "rows": rows })).expect("serializes") + "\n"
        }
    }
}
