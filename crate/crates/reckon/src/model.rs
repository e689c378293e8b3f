//! Core domain types: classes, members, signatures, callsites, and the
//! structural validation rules for class hierarchy definitions.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::gadgets::GadgetAnnotation;

/// A function signature. Parameter types are opaque strings; a type is a
/// pointer type iff its name ends in `*`. The implicit receiver is never
/// part of the parameter list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FunctionSignature {
    pub param_types: Vec<String>,
    /// Normally equals `param_types.len()`; kept separate so inconsistent
    /// declarations can be loaded and reported by the validator.
    pub param_count: usize,
    pub return_type: String,
}

impl FunctionSignature {
    pub fn new(param_types: Vec<String>, return_type: impl Into<String>) -> Self {
        let param_count = param_types.len();
        Self {
            param_types,
            param_count,
            return_type: return_type.into(),
        }
    }

    pub fn is_void_return(&self) -> bool {
        self.return_type == "void"
    }

    pub fn is_consistent(&self) -> bool {
        self.param_count == self.param_types.len()
    }
}

pub fn is_pointer_type(name: &str) -> bool {
    name.trim_end().ends_with('*')
}

/// A class member or free function. Destructors are ordinary members named
/// `~<ClassName>`. Free functions carry an empty `owning_class`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub owning_class: String,
    pub name: String,
    pub is_virtual: bool,
    pub is_pure_virtual: bool,
    pub signature: FunctionSignature,
    pub gadgets: Vec<GadgetAnnotation>,
}

impl Member {
    pub fn is_free_function(&self) -> bool {
        self.owning_class.is_empty()
    }

    pub fn has_gadgets(&self) -> bool {
        !self.gadgets.is_empty()
    }
}

/// A class definition with ordered base lists. `shared_bases` are virtual
/// inheritance edges (one base subobject per object); `replicated_bases`
/// are non-virtual edges (one per inheritance path).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub shared_bases: Vec<String>,
    pub replicated_bases: Vec<String>,
    pub members: Vec<Member>,
}

impl ClassDef {
    /// Direct bases in declaration order, replicated before shared.
    pub fn direct_bases(&self) -> impl Iterator<Item = &String> {
        self.replicated_bases.iter().chain(self.shared_bases.iter())
    }
}

/// The class hierarchy: named classes plus lookup by name. The derived
/// closure is computed on demand over validated hierarchies.
#[derive(Debug, Clone, Default)]
pub struct ClassHierarchy {
    classes: Vec<ClassDef>,
    index: HashMap<String, usize>,
}

impl ClassHierarchy {
    /// Builds a hierarchy. Fails if two classes share a name.
    pub fn new(classes: Vec<ClassDef>) -> Result<Self, String> {
        let mut index = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.name.clone(), i).is_some() {
                return Err(format!("duplicate class name: {}", c.name));
            }
        }
        Ok(Self { classes, index })
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn get(&self, name: &str) -> Option<&ClassDef> {
        self.index.get(name).map(|&i| &self.classes[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// All classes reachable upward from `name` (direct and transitive
    /// bases), excluding `name` itself. Cycle-safe.
    pub fn ancestors(&self, name: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = match self.get(name) {
            Some(c) => c.direct_bases().map(|s| s.as_str()).collect(),
            None => return seen,
        };
        while let Some(b) = stack.pop() {
            if !seen.insert(b.to_string()) {
                continue;
            }
            if let Some(c) = self.get(b) {
                stack.extend(c.direct_bases().map(|s| s.as_str()));
            }
        }
        seen
    }

    /// The reflexive-transitive closure of the inheritance relation, as
    /// (derived, base) pairs. Rejects hierarchies that fail validation.
    pub fn derived_closure(&self) -> Result<BTreeSet<(String, String)>, Vec<Violation>> {
        let violations = validate_hierarchy(self);
        if !violations.is_empty() {
            return Err(violations);
        }
        let mut rel = BTreeSet::new();
        for c in &self.classes {
            rel.insert((c.name.clone(), c.name.clone()));
            for a in self.ancestors(&c.name) {
                rel.insert((c.name.clone(), a));
            }
        }
        Ok(rel)
    }

    /// Classes in declaration order whose ancestor set (or self) contains
    /// `root`, with base lists restricted to retained classes.
    pub fn slice_rooted_at(&self, root: &str) -> Result<ClassHierarchy, ModelError> {
        if !self.contains(root) {
            return Err(ModelError::UnknownClass(root.to_string()));
        }
        let retained: HashSet<String> = self
            .classes
            .iter()
            .filter(|c| c.name == root || self.ancestors(&c.name).contains(root))
            .map(|c| c.name.clone())
            .collect();
        let classes = self
            .classes
            .iter()
            .filter(|c| retained.contains(&c.name))
            .map(|c| ClassDef {
                name: c.name.clone(),
                shared_bases: c
                    .shared_bases
                    .iter()
                    .filter(|b| retained.contains(*b))
                    .cloned()
                    .collect(),
                replicated_bases: c
                    .replicated_bases
                    .iter()
                    .filter(|b| retained.contains(*b))
                    .cloned()
                    .collect(),
                members: c.members.clone(),
            })
            .collect();
        Ok(ClassHierarchy::new(classes).expect("slice preserves name uniqueness"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallsiteKind {
    VirtualDispatch,
    FunctionPointer,
}

impl fmt::Display for CallsiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallsiteKind::VirtualDispatch => write!(f, "virtual-dispatch"),
            CallsiteKind::FunctionPointer => write!(f, "function-pointer"),
        }
    }
}

/// An indirect callsite: either an object dispatch or a call through a
/// function pointer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Callsite {
    pub id: String,
    pub location: String,
    pub kind: CallsiteKind,
    /// Least-derived static type of the dispatched object (virtual dispatch only).
    pub static_receiver_type: Option<String>,
    pub member_name: Option<String>,
    /// Argument types provided at the callsite, excluding the receiver.
    pub provided_arg_types: Vec<String>,
    pub return_used: bool,
    pub controllable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectCall {
    pub from: String,
    /// Function reference: `Class::name`, `Class::name(types)` or bare `name`.
    pub to: String,
}

/// The whole analyzed program.
#[derive(Debug, Clone, Default)]
pub struct ProgramModel {
    pub program: String,
    pub hierarchy: ClassHierarchy,
    pub free_functions: Vec<Member>,
    pub callsites: Vec<Callsite>,
    pub direct_calls: Vec<DirectCall>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown class: {0}")]
    UnknownClass(String),
    #[error("unknown vtable root: {0}")]
    UnknownTable(String),
}

/// Validation clauses. `i`..`vii` follow the hierarchy definition; the
/// remaining ones cover reference integrity and malformed declarations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Clause {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    Reference,
    CallsiteRef,
    DirectCallRef,
    Form,
    Gadget,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::I => "i",
            Clause::II => "ii",
            Clause::III => "iii",
            Clause::IV => "iv",
            Clause::V => "v",
            Clause::VI => "vi",
            Clause::VII => "vii",
            Clause::Reference => "ref",
            Clause::CallsiteRef => "callsite",
            Clause::DirectCallRef => "direct-call",
            Clause::Form => "form",
            Clause::Gadget => "gadget",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub entity: String,
    pub message: String,
}

impl Violation {
    pub fn new(clause: Clause, entity: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            clause,
            entity: entity.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.clause, self.entity, self.message)
    }
}

fn member_sig_key(m: &Member) -> (String, Vec<String>, String) {
    (
        m.name.clone(),
        m.signature.param_types.clone(),
        m.signature.return_type.clone(),
    )
}

/// Checks clauses i..vii plus base-reference integrity on the hierarchy
/// alone. Used by [`validate`] and by `derived_closure`.
pub fn validate_hierarchy(h: &ClassHierarchy) -> Vec<Violation> {
    let mut out = Vec::new();

    for c in h.classes() {
        for b in c.direct_bases() {
            if !h.contains(b) {
                out.push(Violation::new(
                    Clause::Reference,
                    &c.name,
                    format!("base class {b} is not defined"),
                ));
            }
        }
        if c.shared_bases.iter().any(|b| b == &c.name)
            || c.replicated_bases.iter().any(|b| b == &c.name)
        {
            out.push(Violation::new(
                Clause::I,
                &c.name,
                "class lists itself as a base",
            ));
        }
        let shared: HashSet<&String> = c.shared_bases.iter().collect();
        let mut dup: Vec<&String> = c
            .replicated_bases
            .iter()
            .filter(|b| shared.contains(*b))
            .collect();
        dup.dedup();
        for b in dup {
            out.push(Violation::new(
                Clause::II,
                &c.name,
                format!("base {b} appears as both shared and replicated"),
            ));
        }
        for (list, what) in [
            (&c.shared_bases, "shared"),
            (&c.replicated_bases, "replicated"),
        ] {
            let mut seen = HashSet::new();
            for b in list.iter() {
                if !seen.insert(b) {
                    out.push(Violation::new(
                        Clause::Form,
                        &c.name,
                        format!("duplicate {what} base {b}"),
                    ));
                }
            }
        }
    }

    out.extend(find_cycles(h));

    for c in h.classes() {
        for m in &c.members {
            if m.is_pure_virtual && !m.is_virtual {
                out.push(Violation::new(
                    Clause::Form,
                    format!("{}::{}", c.name, m.name),
                    "pure member must be virtual",
                ));
            }
            if !m.signature.is_consistent() {
                out.push(Violation::new(
                    Clause::VI,
                    format!("{}::{}", c.name, m.name),
                    format!(
                        "declared parameter count {} does not match {} parameter types",
                        m.signature.param_count,
                        m.signature.param_types.len()
                    ),
                ));
            }
        }
        // Clause iv: same name/signature with conflicting member kind.
        // Clause vii: fully identical duplicate declarations.
        for (i, a) in c.members.iter().enumerate() {
            for b in c.members.iter().skip(i + 1) {
                if member_sig_key(a) == member_sig_key(b) {
                    if a.is_virtual != b.is_virtual {
                        out.push(Violation::new(
                            Clause::IV,
                            format!("{}::{}", c.name, a.name),
                            "member declared both virtual and non-virtual with the same signature",
                        ));
                    } else {
                        out.push(Violation::new(
                            Clause::VII,
                            format!("{}::{}", c.name, a.name),
                            "duplicate member declaration",
                        ));
                    }
                }
            }
        }
    }

    // Clause v: a derived class may not redeclare an inherited virtual
    // member as non-virtual.
    for c in h.classes() {
        for m in &c.members {
            if m.is_virtual {
                continue;
            }
            for anc in h.ancestors(&c.name) {
                if let Some(base) = h.get(&anc) {
                    if base
                        .members
                        .iter()
                        .any(|bm| bm.is_virtual && member_sig_key(bm) == member_sig_key(m))
                    {
                        out.push(Violation::new(
                            Clause::V,
                            format!("{}::{}", c.name, m.name),
                            format!("redeclares virtual member of base {anc} as non-virtual"),
                        ));
                    }
                }
            }
        }
    }

    out
}

/// Strongly connected components of the inheritance graph (self-edges are
/// reported under clause i, not here). One violation per cycle.
fn find_cycles(h: &ClassHierarchy) -> Vec<Violation> {
    let n = h.classes().len();
    let name_of = |i: usize| h.classes()[i].name.as_str();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, c) in h.classes().iter().enumerate() {
        for b in c.direct_bases() {
            if b == &c.name {
                continue;
            }
            if let Some(&j) = h.index.get(b) {
                succ[i].push(j);
            }
        }
    }
    // Kosaraju: order by finish time, then collect components on the
    // transposed graph.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some(&mut (v, ref mut k)) = stack.last_mut() {
            if *k < succ[v].len() {
                let w = succ[v][*k];
                *k += 1;
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ss) in succ.iter().enumerate() {
        for &j in ss {
            pred[j].push(i);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut ncomp = 0usize;
    let mut out = Vec::new();
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = ncomp;
        let mut members = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &pred[v] {
                if comp[w] == usize::MAX {
                    comp[w] = ncomp;
                    stack.push(w);
                    members.push(w);
                }
            }
        }
        if members.len() > 1 {
            members.sort();
            let cycle: Vec<&str> = members.iter().map(|&i| name_of(i)).collect();
            out.push(Violation::new(
                Clause::III,
                cycle[0],
                format!("inheritance cycle through {{{}}}", cycle.join(", ")),
            ));
        }
        ncomp += 1;
    }
    out
}

/// Full model validation: hierarchy clauses, free-function shape, callsite
/// references and direct-call references. Never fails; problems come back
/// as violations.
pub fn validate(model: &ProgramModel) -> Vec<Violation> {
    let mut out = validate_hierarchy(&model.hierarchy);

    for f in &model.free_functions {
        if !f.owning_class.is_empty() || f.is_virtual {
            out.push(Violation::new(
                Clause::Form,
                &f.name,
                "free functions must be non-virtual and carry no owning class",
            ));
        }
        if !f.signature.is_consistent() {
            out.push(Violation::new(
                Clause::VI,
                &f.name,
                "declared parameter count does not match parameter types",
            ));
        }
    }

    let structural_ok = out.is_empty();

    let mut ids = HashSet::new();
    for cs in &model.callsites {
        if !ids.insert(&cs.id) {
            out.push(Violation::new(
                Clause::CallsiteRef,
                &cs.id,
                "duplicate callsite id",
            ));
        }
        match cs.kind {
            CallsiteKind::VirtualDispatch => {
                let (Some(recv), Some(member)) = (&cs.static_receiver_type, &cs.member_name) else {
                    out.push(Violation::new(
                        Clause::CallsiteRef,
                        &cs.id,
                        "virtual-dispatch callsite needs staticReceiverType and member",
                    ));
                    continue;
                };
                // Lookup needs a structurally sound hierarchy.
                if !structural_ok {
                    continue;
                }
                if !model.hierarchy.contains(recv) {
                    out.push(Violation::new(
                        Clause::CallsiteRef,
                        &cs.id,
                        format!("receiver type {recv} is not defined"),
                    ));
                    continue;
                }
                if !is_virtual_class(&model.hierarchy, recv) {
                    out.push(Violation::new(
                        Clause::CallsiteRef,
                        &cs.id,
                        format!("receiver type {recv} is not a virtual class"),
                    ));
                    continue;
                }
                match crate::subobjects::static_lookup(
                    &model.hierarchy,
                    &crate::subobjects::Subobject::full_object(recv),
                    member,
                ) {
                    Ok(s) => {
                        let decl = model.hierarchy.get(s.ldc()).expect("ldc exists");
                        if !decl
                            .members
                            .iter()
                            .any(|m| &m.name == member && m.is_virtual)
                        {
                            out.push(Violation::new(
                                Clause::CallsiteRef,
                                &cs.id,
                                format!("member {member} resolves to a non-virtual definition"),
                            ));
                        }
                    }
                    Err(e) => out.push(Violation::new(
                        Clause::CallsiteRef,
                        &cs.id,
                        format!("member {member} does not resolve from {recv}: {e}"),
                    )),
                }
            }
            CallsiteKind::FunctionPointer => {}
        }
    }

    if structural_ok {
        let table = FunctionTable::new(model);
        for dc in &model.direct_calls {
            if table.resolve_ref(&dc.to).is_none() {
                out.push(Violation::new(
                    Clause::DirectCallRef,
                    &dc.from,
                    format!("direct call target {} is not defined", dc.to),
                ));
            }
        }
    }

    out
}

/// A class is virtual if it declares or inherits at least one virtual member.
pub fn is_virtual_class(h: &ClassHierarchy, name: &str) -> bool {
    let declares = |c: &ClassDef| c.members.iter().any(|m| m.is_virtual);
    match h.get(name) {
        Some(c) => {
            declares(c)
                || h.ancestors(name)
                    .iter()
                    .filter_map(|a| h.get(a))
                    .any(declares)
        }
        None => false,
    }
}

/// Every member plus the free functions, in declaration order.
pub fn all_functions(model: &ProgramModel) -> Vec<&Member> {
    let mut out: Vec<&Member> = Vec::new();
    for c in model.hierarchy.classes() {
        out.extend(c.members.iter());
    }
    out.extend(model.free_functions.iter());
    out
}

pub fn all_virtual_functions(model: &ProgramModel) -> Vec<&Member> {
    all_functions(model)
        .into_iter()
        .filter(|m| m.is_virtual)
        .collect()
}

/// Stable identifier into a [`FunctionTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FuncId(pub usize);

/// Flattened, deterministic view of every function in a model, with
/// canonical reference strings and name lookups. Built once per analysis.
pub struct FunctionTable<'m> {
    members: Vec<&'m Member>,
    refs: Vec<String>,
    by_ref: HashMap<String, FuncId>,
}

impl<'m> FunctionTable<'m> {
    pub fn new(model: &'m ProgramModel) -> Self {
        let members = all_functions(model);
        // A reference needs the signature suffix only when the bare
        // `Class::name` (or bare name) form would be ambiguous.
        let mut name_count: HashMap<(&str, &str), usize> = HashMap::new();
        for m in &members {
            *name_count
                .entry((m.owning_class.as_str(), m.name.as_str()))
                .or_insert(0) += 1;
        }
        let mut refs = Vec::with_capacity(members.len());
        let mut by_ref = HashMap::new();
        for (i, m) in members.iter().enumerate() {
            let overloaded = name_count[&(m.owning_class.as_str(), m.name.as_str())] > 1;
            let base = if m.owning_class.is_empty() {
                m.name.clone()
            } else {
                format!("{}::{}", m.owning_class, m.name)
            };
            let r = if overloaded {
                format!("{}({})", base, m.signature.param_types.join(","))
            } else {
                base
            };
            by_ref.insert(r.clone(), FuncId(i));
            refs.push(r);
        }
        Self {
            members,
            refs,
            by_ref,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, id: FuncId) -> &'m Member {
        self.members[id.0]
    }

    pub fn reference(&self, id: FuncId) -> &str {
        &self.refs[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = FuncId> {
        (0..self.members.len()).map(FuncId)
    }

    /// Resolves a reference string (`Class::name`, `Class::name(types)`, or
    /// bare `name`) to a function id.
    pub fn resolve_ref(&self, r: &str) -> Option<FuncId> {
        if let Some(&id) = self.by_ref.get(r) {
            return Some(id);
        }
        // A qualified-but-unsuffixed reference to an overloaded name is
        // ambiguous; a suffixed reference to a non-overloaded name is
        // accepted if it matches the declared signature.
        if let Some(open) = r.find('(') {
            let bare = &r[..open];
            let args = r[open + 1..].strip_suffix(')')?;
            let want: Vec<&str> = if args.is_empty() {
                Vec::new()
            } else {
                args.split(',').collect()
            };
            let (class, name) = split_qualified(bare);
            return self.find_by_parts(class, name, Some(&want));
        }
        let (class, name) = split_qualified(r);
        self.find_by_parts(class, name, None)
    }

    fn find_by_parts(&self, class: &str, name: &str, params: Option<&[&str]>) -> Option<FuncId> {
        let mut hit = None;
        for id in self.ids() {
            let m = self.member(id);
            if m.owning_class != class || m.name != name {
                continue;
            }
            if let Some(p) = params {
                if m.signature
                    .param_types
                    .iter()
                    .map(|s| s.as_str())
                    .ne(p.iter().copied())
                {
                    continue;
                }
            }
            if hit.is_some() {
                return None; // ambiguous without a signature suffix
            }
            hit = Some(id);
        }
        hit
    }
}

fn split_qualified(r: &str) -> (&str, &str) {
    match r.rfind("::") {
        Some(pos) => (&r[..pos], &r[pos + 2..]),
        None => ("", r),
    }
}
