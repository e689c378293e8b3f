//! COOP gadget sets and the controllable-callsite attack-surface workflow.
//!
//! Gadget classification is an input annotation on virtual members, not an
//! analysis: the model file states which members act as which gadget kind,
//! and this module collects them, intersects them with policy target sets,
//! and ranks attacker-controllable callsites.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::model::{validate, Clause, FunctionTable, ProgramModel, Violation};
use crate::policies::{PolicyId, TargetSet};

/// The ten COOP gadget kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GadgetKind {
    MainLoop,
    Arith,
    Write,
    Read,
    Invoke,
    WriteCond,
    MainLoopArg,
    WriteStackArg,
    MoveSp,
    LoadR64,
}

impl GadgetKind {
    pub const ALL: [GadgetKind; 10] = [
        GadgetKind::MainLoop,
        GadgetKind::Arith,
        GadgetKind::Write,
        GadgetKind::Read,
        GadgetKind::Invoke,
        GadgetKind::WriteCond,
        GadgetKind::MainLoopArg,
        GadgetKind::WriteStackArg,
        GadgetKind::MoveSp,
        GadgetKind::LoadR64,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GadgetKind::MainLoop => "ML-G",
            GadgetKind::Arith => "ARITH-G",
            GadgetKind::Write => "W-G",
            GadgetKind::Read => "R-G",
            GadgetKind::Invoke => "INV-G",
            GadgetKind::WriteCond => "W-COND-G",
            GadgetKind::MainLoopArg => "ML-ARG-G",
            GadgetKind::WriteStackArg => "W-SA-G",
            GadgetKind::MoveSp => "MOVE-SP-G",
            GadgetKind::LoadR64 => "LOAD-R64-G",
        }
    }
}

impl fmt::Display for GadgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GadgetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GadgetKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown gadget kind: {s}"))
    }
}

/// One gadget annotation on a member. The start address is carried as
/// metadata and never enters any computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GadgetAnnotation {
    pub kind: GadgetKind,
    pub start_address: Option<u64>,
    pub usable: bool,
}

impl GadgetAnnotation {
    pub fn new(kind: GadgetKind) -> Self {
        Self {
            kind,
            start_address: None,
            usable: true,
        }
    }
}

/// A gadget record tied to a concrete function.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GadgetRecord {
    pub function: String,
    pub kind: GadgetKind,
    pub start_address: Option<u64>,
    pub usable: bool,
}

/// All gadget-annotated virtual functions of a program.
#[derive(Debug, Clone, Default)]
pub struct GadgetSet {
    pub records: Vec<GadgetRecord>,
}

impl GadgetSet {
    /// Function references of the annotated members, deduplicated.
    pub fn members(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.records.iter().map(|r| r.function.as_str()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn records_for<'a>(&'a self, function: &'a str) -> impl Iterator<Item = &'a GadgetRecord> {
        self.records.iter().filter(move |r| r.function == function)
    }
}

/// Collects every annotated virtual member. Annotations on non-virtual
/// members (or free functions) are rejected: COOP gadgets are whole virtual
/// functions reached through corrupted object dispatches.
pub fn build_gadget_set(model: &ProgramModel) -> Result<GadgetSet, Vec<Violation>> {
    let pre = validate(model);
    if !pre.is_empty() {
        return Err(pre);
    }
    let table = FunctionTable::new(model);
    let mut violations = Vec::new();
    let mut records = Vec::new();
    for id in table.ids() {
        let m = table.member(id);
        if m.gadgets.is_empty() {
            continue;
        }
        if !m.is_virtual {
            violations.push(Violation::new(
                Clause::Gadget,
                table.reference(id),
                "gadget annotation on a non-virtual function",
            ));
            continue;
        }
        for g in &m.gadgets {
            records.push(GadgetRecord {
                function: table.reference(id).to_string(),
                kind: g.kind,
                start_address: g.start_address,
                usable: g.usable,
            });
        }
    }
    if violations.is_empty() {
        Ok(GadgetSet { records })
    } else {
        Err(violations)
    }
}

/// Per callsite, the gadget records whose function sits inside the allowed
/// target set. A gadget absent from every allowed set is not available.
pub fn available_gadgets(
    sets: &[TargetSet],
    gs: &GadgetSet,
) -> BTreeMap<String, Vec<GadgetRecord>> {
    let mut out = BTreeMap::new();
    for set in sets {
        let mut hits: Vec<GadgetRecord> = set
            .targets
            .iter()
            .flat_map(|t| gs.records_for(t).cloned())
            .collect();
        hits.sort();
        out.insert(set.callsite_id.clone(), hits);
    }
    out
}

/// One row of the controllable-callsite ranking table.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllableRow {
    pub callsite_id: String,
    pub location: String,
    pub param_count: usize,
    pub baseline_virtual: usize,
    pub baseline_all: usize,
    /// Allowed-target counts in the canonical eight-policy order.
    pub counts: [usize; 8],
}

/// Ranks attacker-controllable callsites by their residual target count
/// under `rank_policy`. A callsite qualifies only if its ranking-policy
/// target set contains at least one usable dispatcher (ML-G) gadget.
pub fn rank_controllable_callsites(
    model: &ProgramModel,
    per_policy: &BTreeMap<PolicyId, Vec<TargetSet>>,
    gs: &GadgetSet,
    rank_policy: PolicyId,
) -> Vec<ControllableRow> {
    let ranking_sets = match per_policy.get(&rank_policy) {
        Some(s) => s,
        None => return Vec::new(),
    };
    let mut rows = Vec::new();
    for cs in &model.callsites {
        if !cs.controllable {
            continue;
        }
        let Some(rset) = ranking_sets.iter().find(|s| s.callsite_id == cs.id) else {
            continue;
        };
        if rset.skipped {
            continue;
        }
        let has_dispatcher = rset.targets.iter().any(|t| {
            gs.records_for(t)
                .any(|r| r.kind == GadgetKind::MainLoop && r.usable)
        });
        if !has_dispatcher {
            continue;
        }
        let mut counts = [0usize; 8];
        let mut baseline_all = 0;
        let mut baseline_virtual = 0;
        for (i, p) in PolicyId::ALL.iter().enumerate() {
            if let Some(set) = per_policy
                .get(p)
                .and_then(|sets| sets.iter().find(|s| s.callsite_id == cs.id))
            {
                counts[i] = set.targets.len();
                baseline_all = set.baseline_all;
                baseline_virtual = set.baseline_virtual;
            }
        }
        rows.push(ControllableRow {
            callsite_id: cs.id.clone(),
            location: cs.location.clone(),
            param_count: cs.provided_arg_types.len(),
            baseline_virtual,
            baseline_all,
            counts,
        });
    }
    let rank_idx = PolicyId::ALL
        .iter()
        .position(|p| *p == rank_policy)
        .expect("rank policy is canonical");
    rows.sort_by_key(|r| r.counts[rank_idx]);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassDef, ClassHierarchy, FunctionSignature, Member};

    fn tiny_model(virtual_member: bool) -> ProgramModel {
        let member = Member {
            owning_class: "X".into(),
            name: "m".into(),
            is_virtual: virtual_member,
            is_pure_virtual: false,
            signature: FunctionSignature::new(vec![], "void"),
            gadgets: vec![GadgetAnnotation::new(GadgetKind::MainLoop)],
        };
        ProgramModel {
            program: "t".into(),
            hierarchy: ClassHierarchy::new(vec![ClassDef {
                name: "X".into(),
                shared_bases: vec![],
                replicated_bases: vec![],
                members: vec![member],
            }])
            .unwrap(),
            free_functions: vec![],
            callsites: vec![],
            direct_calls: vec![],
        }
    }

    #[test]
    fn ten_kinds_with_stable_spelling() {
        assert_eq!(GadgetKind::ALL.len(), 10);
        for k in GadgetKind::ALL {
            assert_eq!(k.as_str().parse::<GadgetKind>().unwrap(), k);
        }
    }

    #[test]
    fn gadget_on_virtual_member_is_collected() {
        let gs = build_gadget_set(&tiny_model(true)).unwrap();
        assert_eq!(gs.members(), vec!["X::m"]);
        assert!(gs.records[0].usable);
    }

    #[test]
    fn gadget_on_non_virtual_member_is_rejected() {
        let err = build_gadget_set(&tiny_model(false)).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].clause, Clause::Gadget);
    }

    #[test]
    fn unannotated_model_yields_empty_set() {
        let mut m = tiny_model(true);
        m.hierarchy = ClassHierarchy::new(vec![ClassDef {
            name: "X".into(),
            shared_bases: vec![],
            replicated_bases: vec![],
            members: vec![Member {
                owning_class: "X".into(),
                name: "m".into(),
                is_virtual: true,
                is_pure_virtual: false,
                signature: FunctionSignature::new(vec![], "void"),
                gadgets: vec![],
            }],
        }])
        .unwrap();
        assert!(build_gadget_set(&m).unwrap().is_empty());
    }
}
