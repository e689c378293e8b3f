//! Subobject enumeration and member lookup for multiple inheritance.
//!
//! A subobject is identified by the most-derived class of its containing
//! object and an inheritance chain. Shared (virtual) bases collapse to a
//! single subobject per object regardless of how many paths reach them;
//! replicated bases occur once per distinct replicated path. Member lookup
//! uses dominance-based hiding: a definition in a more-derived subobject
//! hides the same-named definition in its bases, and two unhidden
//! definitions on incomparable paths make the lookup ambiguous.

use std::collections::BTreeSet;
use std::fmt;

use crate::model::{ClassHierarchy, ModelError};

/// A subobject `[mdc; (chain)]`. The first chain element is either the
/// most-derived class itself or a shared base of some class in the object;
/// each later element is a replicated direct base of its predecessor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subobject {
    mdc: String,
    chain: Vec<String>,
}

impl Subobject {
    pub fn new(mdc: impl Into<String>, chain: Vec<String>) -> Self {
        let mdc = mdc.into();
        assert!(!chain.is_empty(), "subobject chains are non-empty");
        Self { mdc, chain }
    }

    /// The subobject denoting a complete object of class `c`.
    pub fn full_object(c: impl Into<String>) -> Self {
        let c = c.into();
        Self {
            mdc: c.clone(),
            chain: vec![c],
        }
    }

    pub fn mdc(&self) -> &str {
        &self.mdc
    }

    /// The least-derived class: the last chain element, whose members the
    /// subobject exposes for static lookup.
    pub fn ldc(&self) -> &str {
        self.chain.last().expect("non-empty chain")
    }

    pub fn chain(&self) -> &[String] {
        &self.chain
    }
}

impl fmt::Display for Subobject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}; ({})]", self.mdc, self.chain.join(","))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LookupError {
    #[error("no member {member} visible from {subobject}")]
    NoSuchMember { subobject: String, member: String },
    #[error("ambiguous lookup of {member} from {subobject}: {witnesses:?}")]
    AmbiguousLookup {
        subobject: String,
        member: String,
        witnesses: Vec<String>,
    },
}

/// All subobjects of a complete object of most-derived class `c`.
pub fn subobjects_of(h: &ClassHierarchy, c: &str) -> Result<BTreeSet<Subobject>, ModelError> {
    if !h.contains(c) {
        return Err(ModelError::UnknownClass(c.to_string()));
    }
    let mut in_object: BTreeSet<String> = h.ancestors(c);
    in_object.insert(c.to_string());

    // Chains start at the full object or at any shared base of a class in
    // the object, then extend through replicated direct bases only.
    let mut starts: BTreeSet<&str> = BTreeSet::new();
    starts.insert(c);
    for name in &in_object {
        if let Some(def) = h.get(name) {
            for s in &def.shared_bases {
                starts.insert(s.as_str());
            }
        }
    }

    let mut out = BTreeSet::new();
    for s in starts {
        let mut stack = vec![vec![s.to_string()]];
        while let Some(chain) = stack.pop() {
            let last = chain.last().expect("non-empty");
            if let Some(def) = h.get(last) {
                for r in &def.replicated_bases {
                    let mut next = chain.clone();
                    next.push(r.clone());
                    stack.push(next);
                }
            }
            out.insert(Subobject::new(c, chain));
        }
    }
    Ok(out)
}

/// Direct base subobjects of `s` within the same complete object.
fn children(h: &ClassHierarchy, s: &Subobject) -> Vec<Subobject> {
    let mut out = Vec::new();
    if let Some(def) = h.get(s.ldc()) {
        for r in &def.replicated_bases {
            let mut chain = s.chain().to_vec();
            chain.push(r.clone());
            out.push(Subobject::new(s.mdc(), chain));
        }
        for sh in &def.shared_bases {
            out.push(Subobject::new(s.mdc(), vec![sh.clone()]));
        }
    }
    out
}

/// `s` itself plus every base subobject reachable from it.
fn contained(h: &ClassHierarchy, s: &Subobject) -> BTreeSet<Subobject> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![s.clone()];
    while let Some(cur) = stack.pop() {
        if !seen.insert(cur.clone()) {
            continue;
        }
        stack.extend(children(h, &cur));
    }
    seen
}

fn declares(h: &ClassHierarchy, class: &str, member: &str) -> bool {
    h.get(class)
        .map(|c| c.members.iter().any(|m| m.name == member))
        .unwrap_or(false)
}

/// Unhidden definitions of `member` visible from `s`: the candidates not
/// strictly contained in another candidate.
pub fn visible_defs(h: &ClassHierarchy, s: &Subobject, member: &str) -> BTreeSet<Subobject> {
    let cone = contained(h, s);
    let candidates: Vec<&Subobject> = cone
        .iter()
        .filter(|sub| declares(h, sub.ldc(), member))
        .collect();
    let mut visible = BTreeSet::new();
    for cand in &candidates {
        let hidden = candidates
            .iter()
            .any(|other| *other != *cand && contained(h, other).contains(*cand));
        if !hidden {
            visible.insert((*cand).clone());
        }
    }
    visible
}

/// The subobject whose least-derived class holds the unique dominant
/// definition of `member` visible from `s`.
pub fn static_lookup(
    h: &ClassHierarchy,
    s: &Subobject,
    member: &str,
) -> Result<Subobject, LookupError> {
    let visible = visible_defs(h, s, member);
    match visible.len() {
        0 => Err(LookupError::NoSuchMember {
            subobject: s.to_string(),
            member: member.to_string(),
        }),
        1 => Ok(visible.into_iter().next().expect("one element")),
        _ => Err(LookupError::AmbiguousLookup {
            subobject: s.to_string(),
            member: member.to_string(),
            witnesses: visible.iter().map(|w| w.to_string()).collect(),
        }),
    }
}

/// Runtime dispatch result for `member` on an object of class `mdc(s)`:
/// re-resolves from the full object when the statically found definition is
/// virtual, and degenerates to the static result otherwise.
pub fn dynamic_lookup(
    h: &ClassHierarchy,
    s: &Subobject,
    member: &str,
) -> Result<Subobject, LookupError> {
    let static_result = static_lookup(h, s, member)?;
    let is_virtual = h
        .get(static_result.ldc())
        .map(|c| c.members.iter().any(|m| m.name == member && m.is_virtual))
        .unwrap_or(false);
    if is_virtual {
        static_lookup(h, &Subobject::full_object(s.mdc()), member)
    } else {
        Ok(static_result)
    }
}

/// The subobjects a dispatch on static type `x` may denote at runtime,
/// given the set of types an object may actually have.
pub fn corresponding_subobjects(
    h: &ClassHierarchy,
    type_set: &BTreeSet<String>,
    x: &str,
) -> Result<BTreeSet<Subobject>, ModelError> {
    if !h.contains(x) {
        return Err(ModelError::UnknownClass(x.to_string()));
    }
    let mut out = BTreeSet::new();
    for c in type_set {
        for s in subobjects_of(h, c)? {
            if s.ldc() == x {
                out.insert(s);
            }
        }
    }
    Ok(out)
}

/// The hierarchy slice containing `root` and every class deriving it.
pub fn class_sub_hierarchy(h: &ClassHierarchy, root: &str) -> Result<ClassHierarchy, ModelError> {
    h.slice_rooted_at(root)
}
