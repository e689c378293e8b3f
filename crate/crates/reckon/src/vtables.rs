//! Virtual table construction and the table hierarchy derived from it.
//!
//! The layout is a simplified Itanium-like model: no thunks and no
//! offset/RTTI slots, one slot per virtual member in declaration order of
//! the introducing class. A derived class's primary table extends the
//! primary table of its first virtual-class base; each additional direct
//! virtual-class base contributes one secondary table. Shared (virtual)
//! bases contribute their slots once through the extension chain instead of
//! spawning construction tables.
//!
//! Within the hierarchy each table has at most one *primary* child: the
//! first table (in construction order) that extends it. Later extenders are
//! attached as secondary children. The strict sub-hierarchy policy descends
//! through primary edges only, which is what separates it from the plain
//! sub-hierarchy policy.

use std::collections::{BTreeSet, HashMap};

use crate::model::{
    is_virtual_class, ClassHierarchy, FuncId, FunctionTable, ModelError, ProgramModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Parent and child owners are linked by virtual inheritance.
    Shared,
    /// Parent and child owners are linked by non-virtual inheritance.
    Replicated,
}

/// One slot of a virtual table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VTableEntry {
    pub index: usize,
    /// The class that introduced this slot; stable across all tables that
    /// carry it.
    pub declaring_class: String,
    pub resolved: FuncId,
    pub is_pure: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VTable {
    pub owning_class: String,
    /// `None` for the primary table, or the direct base this secondary
    /// table serves.
    pub base_selector: Option<String>,
    /// Least-derived class of this table's extension lineage.
    pub root_type: String,
    pub entries: Vec<VTableEntry>,
    pub parent: Option<usize>,
    pub parent_edge: Option<EdgeKind>,
}

impl VTable {
    pub fn entry_at(&self, index: usize) -> Option<&VTableEntry> {
        self.entries.get(index)
    }

    /// The slot introduced by `declaring_class` at `index`, if this table
    /// carries it.
    pub fn slot(&self, declaring_class: &str, index: usize) -> Option<&VTableEntry> {
        self.entries
            .get(index)
            .filter(|e| e.declaring_class == declaring_class)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VTableHierarchy {
    pub tables: Vec<VTable>,
    by_class: HashMap<String, Vec<usize>>,
    /// Children of each table in construction order; the first child is the
    /// primary one.
    children: Vec<Vec<usize>>,
    island_of: Vec<usize>,
    island_count: usize,
}

impl VTableHierarchy {
    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// All tables owned by `class`, primary first.
    pub fn vtable_set(&self, class: &str) -> Vec<&VTable> {
        self.by_class
            .get(class)
            .map(|ids| ids.iter().map(|&i| &self.tables[i]).collect())
            .unwrap_or_default()
    }

    pub fn table_ids_of(&self, class: &str) -> &[usize] {
        self.by_class
            .get(class)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn children_of(&self, table: usize) -> &[usize] {
        &self.children[table]
    }

    pub fn island_of(&self, table: usize) -> usize {
        self.island_of[table]
    }

    pub fn island_count(&self) -> usize {
        self.island_count
    }

    pub fn tables_in_island(&self, island: usize) -> impl Iterator<Item = (usize, &VTable)> {
        self.tables
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.island_of[*i] == island)
    }

    /// `root` plus every table reachable downward from it.
    pub fn sub_hierarchy(&self, root: usize) -> Vec<usize> {
        self.descend(root, false)
    }

    /// `root` plus the primary-lineage descent below it.
    pub fn strict_sub_hierarchy(&self, root: usize) -> Vec<usize> {
        self.descend(root, true)
    }

    fn descend(&self, root: usize, primary_only: bool) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        let mut seen = vec![false; self.tables.len()];
        while let Some(t) = stack.pop() {
            if seen[t] {
                continue;
            }
            seen[t] = true;
            out.push(t);
            let kids = &self.children[t];
            if primary_only {
                if let Some(&first) = kids.first() {
                    stack.push(first);
                }
            } else {
                stack.extend(kids.iter().copied());
            }
        }
        out.sort();
        out
    }
}

/// Builds every vtable of the hierarchy. Requires a validated model.
pub fn build_vtables(model: &ProgramModel, ft: &FunctionTable) -> VTableHierarchy {
    let h = &model.hierarchy;
    let order = topo_order(h);

    // Function ids of class members, addressed by (class, member index).
    let mut member_ids: HashMap<(&str, usize), FuncId> = HashMap::new();
    for id in ft.ids() {
        let m = ft.member(id);
        if m.is_free_function() {
            continue;
        }
        if let Some(class) = h.get(&m.owning_class) {
            if let Some(pos) = class.members.iter().position(|cm| std::ptr::eq(cm, m)) {
                member_ids.insert((m.owning_class.as_str(), pos), id);
            }
        }
    }

    let mut vth = VTableHierarchy::default();
    let mut primary_of: HashMap<String, usize> = HashMap::new();

    for &ci in &order {
        let class = &h.classes()[ci];
        if !is_virtual_class(h, &class.name) {
            continue;
        }
        let own_virtuals: Vec<(usize, FuncId)> = class
            .members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_virtual)
            .map(|(i, _)| (i, member_ids[&(class.name.as_str(), i)]))
            .collect();

        // Direct bases that own tables, replicated before shared.
        let mut vbases: Vec<(&String, EdgeKind)> = Vec::new();
        for b in &class.replicated_bases {
            if primary_of.contains_key(b) {
                vbases.push((b, EdgeKind::Replicated));
            }
        }
        for b in &class.shared_bases {
            if primary_of.contains_key(b) {
                vbases.push((b, EdgeKind::Shared));
            }
        }

        let apply_overrides = |entries: &mut Vec<VTableEntry>| {
            for e in entries.iter_mut() {
                let prev = ft.member(e.resolved);
                for &(mi, fid) in &own_virtuals {
                    let m = &class.members[mi];
                    if m.name == prev.name && m.signature.param_types == prev.signature.param_types
                    {
                        e.resolved = fid;
                        e.is_pure = m.is_pure_virtual;
                    }
                }
            }
        };

        let mut class_tables = Vec::new();
        match vbases.split_first() {
            None => {
                let mut entries = Vec::new();
                for &(mi, fid) in &own_virtuals {
                    entries.push(VTableEntry {
                        index: entries.len(),
                        declaring_class: class.name.clone(),
                        resolved: fid,
                        is_pure: class.members[mi].is_pure_virtual,
                    });
                }
                class_tables.push(VTable {
                    owning_class: class.name.clone(),
                    base_selector: None,
                    root_type: class.name.clone(),
                    entries,
                    parent: None,
                    parent_edge: None,
                });
            }
            Some((&(first, first_kind), rest)) => {
                let parent_id = primary_of[first];
                let parent = &vth.tables[parent_id];
                let mut entries = parent.entries.clone();
                let root_type = parent.root_type.clone();
                apply_overrides(&mut entries);
                let overridden: BTreeSet<(String, Vec<String>)> = entries
                    .iter()
                    .map(|e| {
                        let m = ft.member(e.resolved);
                        (m.name.clone(), m.signature.param_types.clone())
                    })
                    .collect();
                for &(mi, fid) in &own_virtuals {
                    let m = &class.members[mi];
                    if overridden.contains(&(m.name.clone(), m.signature.param_types.clone())) {
                        continue;
                    }
                    entries.push(VTableEntry {
                        index: entries.len(),
                        declaring_class: class.name.clone(),
                        resolved: fid,
                        is_pure: m.is_pure_virtual,
                    });
                }
                class_tables.push(VTable {
                    owning_class: class.name.clone(),
                    base_selector: None,
                    root_type,
                    entries,
                    parent: Some(parent_id),
                    parent_edge: Some(first_kind),
                });
                for &(base, kind) in rest {
                    let parent_id = primary_of[base];
                    let parent = &vth.tables[parent_id];
                    let mut entries = parent.entries.clone();
                    let root_type = parent.root_type.clone();
                    apply_overrides(&mut entries);
                    class_tables.push(VTable {
                        owning_class: class.name.clone(),
                        base_selector: Some(base.clone()),
                        root_type,
                        entries,
                        parent: Some(parent_id),
                        parent_edge: Some(kind),
                    });
                }
            }
        }

        for t in class_tables {
            let id = vth.tables.len();
            if t.base_selector.is_none() {
                primary_of.insert(t.owning_class.clone(), id);
            }
            vth.by_class
                .entry(t.owning_class.clone())
                .or_default()
                .push(id);
            vth.tables.push(t);
        }
    }

    vth.children = vec![Vec::new(); vth.tables.len()];
    for (id, t) in vth.tables.iter().enumerate() {
        if let Some(p) = t.parent {
            vth.children[p].push(id);
        }
    }
    for kids in &mut vth.children {
        kids.sort();
    }

    // Islands: connected components over parent edges plus same-owner links.
    let mut dsu = Dsu::new(vth.tables.len());
    for (id, t) in vth.tables.iter().enumerate() {
        if let Some(p) = t.parent {
            dsu.union(id, p);
        }
    }
    for ids in vth.by_class.values() {
        for w in ids.windows(2) {
            dsu.union(w[0], w[1]);
        }
    }
    let mut island_ids: HashMap<usize, usize> = HashMap::new();
    vth.island_of = (0..vth.tables.len())
        .map(|i| {
            let root = dsu.find(i);
            let next = island_ids.len();
            *island_ids.entry(root).or_insert(next)
        })
        .collect();
    vth.island_count = island_ids.len();
    vth
}

/// Declaration-order-stable topological order of classes, bases first.
fn topo_order(h: &ClassHierarchy) -> Vec<usize> {
    let n = h.classes().len();
    let index: HashMap<&str, usize> = h
        .classes()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();
    let mut indeg = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, c) in h.classes().iter().enumerate() {
        for b in c.direct_bases() {
            if let Some(&j) = index.get(b.as_str()) {
                succ[j].push(i);
                indeg[i] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        out.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.insert(j);
            }
        }
    }
    debug_assert_eq!(out.len(), n, "hierarchy must be acyclic");
    out
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// All simple inheritance paths of at least two classes, base first.
pub fn class_paths(h: &ClassHierarchy) -> BTreeSet<Vec<String>> {
    let mut down: HashMap<&str, Vec<&str>> = HashMap::new();
    for c in h.classes() {
        for b in c.direct_bases() {
            down.entry(b.as_str()).or_default().push(c.name.as_str());
        }
    }
    let mut out = BTreeSet::new();
    for c in h.classes() {
        let mut stack = vec![vec![c.name.as_str()]];
        while let Some(path) = stack.pop() {
            let last = *path.last().expect("non-empty");
            if path.len() >= 2 {
                out.insert(path.iter().map(|s| s.to_string()).collect());
            }
            for &next in down.get(last).map(|v| v.as_slice()).unwrap_or(&[]) {
                if !path.contains(&next) {
                    let mut p = path.clone();
                    p.push(next);
                    stack.push(p);
                }
            }
        }
    }
    out
}

/// All simple paths over replicated table edges, projected to owning
/// classes. Shared-base edges cross table boundaries rather than extending
/// a table in place, so they contribute no path segments.
pub fn vtable_paths(vth: &VTableHierarchy) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for start in 0..vth.tables.len() {
        let mut stack = vec![vec![start]];
        while let Some(path) = stack.pop() {
            let last = *path.last().expect("non-empty");
            if path.len() >= 2 {
                out.insert(
                    path.iter()
                        .map(|&t| vth.tables[t].owning_class.clone())
                        .collect(),
                );
            }
            for &child in vth.children_of(last) {
                if vth.tables[child].parent_edge == Some(EdgeKind::Replicated)
                    && !path.contains(&child)
                {
                    let mut p = path.clone();
                    p.push(child);
                    stack.push(p);
                }
            }
        }
    }
    out
}

/// The longest downward table path starting at `base`'s primary table,
/// projected to owning classes. Ties break lexicographically.
pub fn min_vtable_path(vth: &VTableHierarchy, base: &str) -> Result<Vec<String>, ModelError> {
    let ids = vth.table_ids_of(base);
    let &root = ids
        .first()
        .ok_or_else(|| ModelError::UnknownTable(base.to_string()))?;
    let mut best: Option<Vec<String>> = None;
    let mut stack = vec![vec![root]];
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty");
        let kids: Vec<usize> = vth
            .children_of(last)
            .iter()
            .copied()
            .filter(|c| !path.contains(c))
            .collect();
        if kids.is_empty() {
            let names: Vec<String> = path
                .iter()
                .map(|&t| vth.tables[t].owning_class.clone())
                .collect();
            let better = match &best {
                None => true,
                Some(b) => names.len() > b.len() || (names.len() == b.len() && names < *b),
            };
            if better {
                best = Some(names);
            }
        } else {
            for c in kids {
                let mut p = path.clone();
                p.push(c);
                stack.push(p);
            }
        }
    }
    Ok(best.expect("at least the root path"))
}

/// The table a dispatch on `receiver`/`member_name` consults, plus the slot
/// it selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchSlot {
    pub table: usize,
    pub index: usize,
    pub declaring_class: String,
}

/// Locates the dispatch table and slot for a virtual callsite. Prefers the
/// receiver's own tables; when the member's slot only materializes in an
/// ancestor's table (deep multiple inheritance), the nearest such ancestor
/// is used. Among name-matching entries an exact argument-type match wins.
pub fn dispatch_slot(
    model: &ProgramModel,
    ft: &FunctionTable,
    vth: &VTableHierarchy,
    receiver: &str,
    member_name: &str,
    arg_types: &[String],
) -> Option<DispatchSlot> {
    let h = &model.hierarchy;
    let mut frontier = vec![receiver.to_string()];
    let mut seen = BTreeSet::new();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for class in &frontier {
            if !seen.insert(class.clone()) {
                continue;
            }
            for &tid in vth.table_ids_of(class) {
                let mut candidates: Vec<&VTableEntry> = vth.tables[tid]
                    .entries
                    .iter()
                    .filter(|e| ft.member(e.resolved).name == member_name)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                candidates.sort_by_key(|e| {
                    let exact = ft.member(e.resolved).signature.param_types.as_slice() == arg_types;
                    (!exact, e.index)
                });
                let entry = candidates[0];
                return Some(DispatchSlot {
                    table: tid,
                    index: entry.index,
                    declaring_class: entry.declaring_class.clone(),
                });
            }
            if let Some(def) = h.get(class) {
                next.extend(def.direct_bases().cloned());
            }
        }
        frontier = next;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassDef, ClassHierarchy, FunctionSignature, Member};

    fn member(class: &str, name: &str, virt: bool) -> Member {
        Member {
            owning_class: class.to_string(),
            name: name.to_string(),
            is_virtual: virt,
            is_pure_virtual: false,
            signature: FunctionSignature::new(vec![], "void"),
            gadgets: Vec::new(),
        }
    }

    fn class(name: &str, shared: &[&str], replicated: &[&str], members: Vec<Member>) -> ClassDef {
        ClassDef {
            name: name.to_string(),
            shared_bases: shared.iter().map(|s| s.to_string()).collect(),
            replicated_bases: replicated.iter().map(|s| s.to_string()).collect(),
            members,
        }
    }

    fn model_of(classes: Vec<ClassDef>) -> ProgramModel {
        ProgramModel {
            program: "t".into(),
            hierarchy: ClassHierarchy::new(classes).unwrap(),
            free_functions: vec![],
            callsites: vec![],
            direct_calls: vec![],
        }
    }

    /// Foo <- Bar <- {Baz, Bac}; every class overrides get, Bac adds set.
    fn chain_model() -> ProgramModel {
        model_of(vec![
            class("Foo", &[], &[], vec![member("Foo", "get", true)]),
            class("Bar", &[], &["Foo"], vec![member("Bar", "get", true)]),
            class("Baz", &[], &["Bar"], vec![member("Baz", "get", true)]),
            class(
                "Bac",
                &[],
                &["Bar"],
                vec![member("Bac", "get", true), member("Bac", "set", true)],
            ),
        ])
    }

    #[test]
    fn no_virtual_members_no_tables() {
        let m = model_of(vec![class("X", &[], &[], vec![member("X", "m", false)])]);
        let ft = FunctionTable::new(&m);
        let vth = build_vtables(&m, &ft);
        assert!(vth.is_empty());
        assert!(vth.vtable_set("X").is_empty());
    }

    #[test]
    fn chain_tables_extend_and_override() {
        let m = chain_model();
        let ft = FunctionTable::new(&m);
        let vth = build_vtables(&m, &ft);
        assert_eq!(vth.tables.len(), 4);
        let bar = &vth.vtable_set("Bar")[0];
        assert_eq!(bar.entries.len(), 1);
        assert_eq!(ft.reference(bar.entries[0].resolved), "Bar::get");
        assert_eq!(bar.entries[0].declaring_class, "Foo");
        let bac = &vth.vtable_set("Bac")[0];
        assert_eq!(bac.entries.len(), 2);
        assert_eq!(ft.reference(bac.entries[0].resolved), "Bac::get");
        assert_eq!(bac.entries[1].index, 1);
        assert_eq!(ft.reference(bac.entries[1].resolved), "Bac::set");
        assert_eq!(bac.root_type, "Foo");
        assert_eq!(vth.island_count(), 1);
    }

    #[test]
    fn first_extender_is_the_primary_child() {
        let m = chain_model();
        let ft = FunctionTable::new(&m);
        let vth = build_vtables(&m, &ft);
        let bar_id = vth.table_ids_of("Bar")[0];
        let strict = vth.strict_sub_hierarchy(bar_id);
        let owners: Vec<&str> = strict
            .iter()
            .map(|&t| vth.tables[t].owning_class.as_str())
            .collect();
        assert_eq!(owners, vec!["Bar", "Baz"]);
        let full = vth.sub_hierarchy(bar_id);
        assert_eq!(full.len(), 3);
    }

    #[test]
    fn min_path_prefers_length_then_lexicographic() {
        let m = chain_model();
        let ft = FunctionTable::new(&m);
        let vth = build_vtables(&m, &ft);
        assert_eq!(
            min_vtable_path(&vth, "Foo").unwrap(),
            vec!["Foo", "Bar", "Bac"]
        );
        assert_eq!(min_vtable_path(&vth, "Bac").unwrap(), vec!["Bac"]);
    }

    #[test]
    fn two_disjoint_hierarchies_form_two_islands() {
        let m = model_of(vec![
            class("A", &[], &[], vec![member("A", "x", true)]),
            class("B", &[], &["A"], vec![]),
            class("P", &[], &[], vec![member("P", "y", true)]),
            class("Q", &[], &["P"], vec![]),
        ]);
        let ft = FunctionTable::new(&m);
        let vth = build_vtables(&m, &ft);
        assert_eq!(vth.island_count(), 2);
    }

    #[test]
    fn class_paths_on_single_class_is_empty() {
        let m = model_of(vec![class("X", &[], &[], vec![])]);
        assert!(class_paths(&m.hierarchy).is_empty());
    }

    #[test]
    fn dispatch_slot_uses_receiver_table() {
        let m = chain_model();
        let ft = FunctionTable::new(&m);
        let vth = build_vtables(&m, &ft);
        let d = dispatch_slot(&m, &ft, &vth, "Bar", "get", &[]).unwrap();
        assert_eq!(vth.tables[d.table].owning_class, "Bar");
        assert_eq!(d.index, 0);
        assert_eq!(d.declaring_class, "Foo");
    }
}
