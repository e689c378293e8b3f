//! The eight static CFI policies, each mapping a callsite to its legitimate
//! calltarget set, plus composable target filters.
//!
//! The first three policies (bin types, safe src types, src types) apply to
//! every indirect callsite and may admit non-virtual targets. The remaining
//! five are defined for virtual dispatches only; on function-pointer
//! callsites they produce an empty, skip-flagged set rather than an error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::model::{
    all_functions, all_virtual_functions, is_pointer_type, Callsite, CallsiteKind, FuncId,
    FunctionTable, ProgramModel,
};
use crate::vtables::{build_vtables, dispatch_slot, DispatchSlot, VTableHierarchy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyId {
    BinTypes,
    SafeSrcTypes,
    SrcTypes,
    StrictSrcTypes,
    AllVtables,
    VtableHierarchy,
    SubHierarchy,
    StrictSubHierarchy,
}

impl PolicyId {
    /// Canonical order used by every report.
    pub const ALL: [PolicyId; 8] = [
        PolicyId::BinTypes,
        PolicyId::SafeSrcTypes,
        PolicyId::SrcTypes,
        PolicyId::StrictSrcTypes,
        PolicyId::AllVtables,
        PolicyId::VtableHierarchy,
        PolicyId::SubHierarchy,
        PolicyId::StrictSubHierarchy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyId::BinTypes => "bin-types",
            PolicyId::SafeSrcTypes => "safe-src-types",
            PolicyId::SrcTypes => "src-types",
            PolicyId::StrictSrcTypes => "strict-src-types",
            PolicyId::AllVtables => "all-vtables",
            PolicyId::VtableHierarchy => "vtable-hierarchy",
            PolicyId::SubHierarchy => "sub-hierarchy",
            PolicyId::StrictSubHierarchy => "strict-sub-hierarchy",
        }
    }

    /// Whether the policy is defined only for virtual dispatches.
    pub fn virtual_only(&self) -> bool {
        !matches!(
            self,
            PolicyId::BinTypes | PolicyId::SafeSrcTypes | PolicyId::SrcTypes
        )
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyId::ALL
            .iter()
            .find(|p| p.as_str() == s)
            .copied()
            .ok_or_else(|| {
                let valid: Vec<&str> = PolicyId::ALL.iter().map(|p| p.as_str()).collect();
                format!("unknown policy {s:?}; valid policies: {}", valid.join(", "))
            })
    }
}

/// Target predicates composed by intersection. `whole_hierarchy` is the
/// exception: it swaps the legitimate set for every hierarchy member that
/// passes the remaining predicates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyFilter {
    pub virtual_targets_only: bool,
    pub gadget_targets_only: bool,
    pub max_params: Option<usize>,
    pub whole_hierarchy: bool,
}

/// The legitimate calltargets of one callsite under one policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    pub callsite_id: String,
    pub policy: PolicyId,
    pub targets: BTreeSet<String>,
    pub baseline_all: usize,
    pub baseline_virtual: usize,
    /// Set when the callsite kind does not fit the policy; such sets carry
    /// no targets and are excluded from aggregation.
    pub skipped: bool,
}

/// Shared analysis state: the model, its function table, and the built
/// vtable hierarchy. Policy evaluation is pure against this context.
pub struct Assessor<'m> {
    model: &'m ProgramModel,
    ft: FunctionTable<'m>,
    vth: VTableHierarchy,
    baseline_all: usize,
    baseline_virtual: usize,
}

impl<'m> Assessor<'m> {
    pub fn new(model: &'m ProgramModel) -> Self {
        let ft = FunctionTable::new(model);
        let vth = build_vtables(model, &ft);
        let baseline_all = all_functions(model).len();
        let baseline_virtual = all_virtual_functions(model).len();
        Self {
            model,
            ft,
            vth,
            baseline_all,
            baseline_virtual,
        }
    }

    pub fn model(&self) -> &'m ProgramModel {
        self.model
    }

    pub fn function_table(&self) -> &FunctionTable<'m> {
        &self.ft
    }

    pub fn vtable_hierarchy(&self) -> &VTableHierarchy {
        &self.vth
    }

    pub fn baseline_all(&self) -> usize {
        self.baseline_all
    }

    pub fn baseline_virtual(&self) -> usize {
        self.baseline_virtual
    }

    fn make_set(&self, cs: &Callsite, policy: PolicyId, ids: BTreeSet<FuncId>) -> TargetSet {
        TargetSet {
            callsite_id: cs.id.clone(),
            policy,
            targets: ids
                .into_iter()
                .map(|id| self.ft.reference(id).to_string())
                .collect(),
            baseline_all: self.baseline_all,
            baseline_virtual: self.baseline_virtual,
            skipped: false,
        }
    }

    fn skipped_set(&self, cs: &Callsite, policy: PolicyId) -> TargetSet {
        TargetSet {
            callsite_id: cs.id.clone(),
            policy,
            targets: BTreeSet::new(),
            baseline_all: self.baseline_all,
            baseline_virtual: self.baseline_virtual,
            skipped: true,
        }
    }

    /// Every distinct function appearing as a vtable entry, across all
    /// islands.
    fn vtable_entry_members(&self) -> BTreeSet<FuncId> {
        self.vth
            .tables
            .iter()
            .flat_map(|t| t.entries.iter().map(|e| e.resolved))
            .collect()
    }

    fn dispatch(&self, cs: &Callsite) -> Option<DispatchSlot> {
        let receiver = cs.static_receiver_type.as_deref()?;
        let member = cs.member_name.as_deref()?;
        dispatch_slot(
            self.model,
            &self.ft,
            &self.vth,
            receiver,
            member,
            &cs.provided_arg_types,
        )
    }

    /// Parameter-count matching on binary-level information: every vtable
    /// entry, plus non-virtual functions consuming at most the provided
    /// argument count (capped at six). A non-void callsite excludes
    /// void-returning targets.
    pub fn targets_bin_types(&self, cs: &Callsite) -> TargetSet {
        let mut ids = self.vtable_entry_members();
        for id in self.ft.ids() {
            let m = self.ft.member(id);
            if !m.is_virtual
                && m.signature.param_count <= cs.provided_arg_types.len()
                && m.signature.param_count <= 6
            {
                ids.insert(id);
            }
        }
        if cs.return_used {
            ids.retain(|id| !self.ft.member(*id).signature.is_void_return());
        }
        self.make_set(cs, PolicyId::BinTypes, ids)
    }

    /// Source-level type matching with interchangeable pointer types.
    pub fn targets_safe_src_types(&self, cs: &Callsite) -> TargetSet {
        let ids = self.match_signature(cs, |a, b| {
            a == b || (is_pointer_type(a) && is_pointer_type(b))
        });
        self.make_set(cs, PolicyId::SafeSrcTypes, ids)
    }

    /// Source-level type matching with exact pointer types.
    pub fn targets_src_types(&self, cs: &Callsite) -> TargetSet {
        let ids = self.match_signature(cs, |a, b| a == b);
        self.make_set(cs, PolicyId::SrcTypes, ids)
    }

    fn match_signature(
        &self,
        cs: &Callsite,
        type_match: impl Fn(&str, &str) -> bool,
    ) -> BTreeSet<FuncId> {
        self.ft
            .ids()
            .filter(|&id| {
                let sig = &self.ft.member(id).signature;
                sig.param_types.len() == cs.provided_arg_types.len()
                    && sig
                        .param_types
                        .iter()
                        .zip(cs.provided_arg_types.iter())
                        .all(|(p, a)| type_match(p, a))
            })
            .collect()
    }

    /// Signature hash including the bare member name; virtual targets only,
    /// return type excluded.
    pub fn targets_strict_src_types(&self, cs: &Callsite) -> TargetSet {
        let Some(member) = cs.member_name.as_deref() else {
            return self.skipped_set(cs, PolicyId::StrictSrcTypes);
        };
        let ids = self
            .ft
            .ids()
            .filter(|&id| {
                let m = self.ft.member(id);
                m.is_virtual && m.name == member && m.signature.param_types == cs.provided_arg_types
            })
            .collect();
        self.make_set(cs, PolicyId::StrictSrcTypes, ids)
    }

    /// Every function reachable through any vtable entry in the program.
    pub fn targets_all_vtables(&self, cs: &Callsite) -> TargetSet {
        self.make_set(cs, PolicyId::AllVtables, self.vtable_entry_members())
    }

    /// Slot-index matching across the island containing the dispatch:
    /// every table entry at the callsite's index, pure entries skipped.
    pub fn targets_vtable_hierarchy(&self, cs: &Callsite) -> TargetSet {
        let Some(d) = self.dispatch(cs) else {
            return self.skipped_set(cs, PolicyId::VtableHierarchy);
        };
        let island = self.vth.island_of(d.table);
        let ids = self
            .vth
            .tables_in_island(island)
            .filter_map(|(_, t)| t.entry_at(d.index))
            .filter(|e| !e.is_pure)
            .map(|e| e.resolved)
            .collect();
        self.make_set(cs, PolicyId::VtableHierarchy, ids)
    }

    /// Class sub-hierarchy rooted at the static receiver type: the
    /// dispatch-slot resolutions across every table owned by a class in
    /// that slice.
    pub fn targets_sub_hierarchy(&self, cs: &Callsite) -> TargetSet {
        let (Some(d), Some(receiver)) = (self.dispatch(cs), cs.static_receiver_type.as_deref())
        else {
            return self.skipped_set(cs, PolicyId::SubHierarchy);
        };
        let Ok(slice) = self.model.hierarchy.slice_rooted_at(receiver) else {
            return self.skipped_set(cs, PolicyId::SubHierarchy);
        };
        let mut ids: BTreeSet<FuncId> = BTreeSet::new();
        for class in slice.classes() {
            for table in self.vth.vtable_set(&class.name) {
                if let Some(e) = table.slot(&d.declaring_class, d.index) {
                    if !e.is_pure {
                        ids.insert(e.resolved);
                    }
                }
            }
        }
        // The dispatch table itself is always legitimate, even when the
        // slot only materializes in an ancestor's table.
        if let Some(e) = self.vth.tables[d.table].slot(&d.declaring_class, d.index) {
            if !e.is_pure {
                ids.insert(e.resolved);
            }
        }
        self.make_set(cs, PolicyId::SubHierarchy, ids)
    }

    /// The exact table the dispatch consults, then its primary-lineage
    /// descent: the strictest table-aware policy.
    pub fn targets_strict_sub_hierarchy(&self, cs: &Callsite) -> TargetSet {
        let Some(d) = self.dispatch(cs) else {
            return self.skipped_set(cs, PolicyId::StrictSubHierarchy);
        };
        let mut ids: BTreeSet<FuncId> = BTreeSet::new();
        for t in self.vth.strict_sub_hierarchy(d.table) {
            if let Some(e) = self.vth.tables[t].slot(&d.declaring_class, d.index) {
                if !e.is_pure {
                    ids.insert(e.resolved);
                }
            }
        }
        self.make_set(cs, PolicyId::StrictSubHierarchy, ids)
    }

    pub fn targets(&self, policy: PolicyId, cs: &Callsite) -> TargetSet {
        if policy.virtual_only() && cs.kind != CallsiteKind::VirtualDispatch {
            return self.skipped_set(cs, policy);
        }
        match policy {
            PolicyId::BinTypes => self.targets_bin_types(cs),
            PolicyId::SafeSrcTypes => self.targets_safe_src_types(cs),
            PolicyId::SrcTypes => self.targets_src_types(cs),
            PolicyId::StrictSrcTypes => self.targets_strict_src_types(cs),
            PolicyId::AllVtables => self.targets_all_vtables(cs),
            PolicyId::VtableHierarchy => self.targets_vtable_hierarchy(cs),
            PolicyId::SubHierarchy => self.targets_sub_hierarchy(cs),
            PolicyId::StrictSubHierarchy => self.targets_strict_sub_hierarchy(cs),
        }
    }

    fn passes_filter(&self, id: FuncId, filter: &PolicyFilter) -> bool {
        let m = self.ft.member(id);
        if filter.virtual_targets_only && !m.is_virtual {
            return false;
        }
        if filter.gadget_targets_only && m.gadgets.is_empty() {
            return false;
        }
        if let Some(maxp) = filter.max_params {
            if m.signature.param_count > maxp {
                return false;
            }
        }
        true
    }

    /// Runs `policy` over every callsite, intersecting each target set with
    /// the filter predicates. Kind-mismatched callsites come back skipped.
    pub fn assess(&self, policy: PolicyId, filter: &PolicyFilter) -> Vec<TargetSet> {
        self.model
            .callsites
            .iter()
            .map(|cs| {
                if policy.virtual_only() && cs.kind != CallsiteKind::VirtualDispatch {
                    return self.skipped_set(cs, policy);
                }
                if filter.whole_hierarchy {
                    let ids: BTreeSet<FuncId> = self
                        .ft
                        .ids()
                        .filter(|&id| !self.ft.member(id).is_free_function())
                        .filter(|&id| self.passes_filter(id, filter))
                        .collect();
                    return self.make_set(cs, policy, ids);
                }
                let mut set = self.targets(policy, cs);
                if !set.skipped {
                    set.targets.retain(|r| {
                        self.ft
                            .resolve_ref(r)
                            .map(|id| self.passes_filter(id, filter))
                            .unwrap_or(false)
                    });
                }
                set
            })
            .collect()
    }

    /// All eight policies in canonical order, unfiltered.
    pub fn assess_all(&self) -> BTreeMap<PolicyId, Vec<TargetSet>> {
        PolicyId::ALL
            .iter()
            .map(|&p| (p, self.assess(p, &PolicyFilter::default())))
            .collect()
    }
}
