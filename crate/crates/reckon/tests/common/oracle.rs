//! Brute-force ground truth for subobject enumeration and member lookup,
//! kept independent of the library's chain-based construction: it
//! exhaustively enumerates full derivation paths, canonicalizes each path
//! to the subobject it denotes, and derives containment from path prefixes.

use std::collections::{BTreeMap, BTreeSet};

use reckon::model::ClassHierarchy;
use reckon::subobjects::Subobject;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Shared,
    Replicated,
}

#[derive(Debug, Clone)]
struct Path {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

fn full_paths(h: &ClassHierarchy, mdc: &str) -> Vec<Path> {
    let mut out = Vec::new();
    let mut stack = vec![Path {
        nodes: vec![mdc.to_string()],
        edges: vec![],
    }];
    while let Some(p) = stack.pop() {
        let last = p.nodes.last().expect("non-empty").clone();
        if let Some(def) = h.get(&last) {
            for (kind, bases) in [
                (Edge::Replicated, &def.replicated_bases),
                (Edge::Shared, &def.shared_bases),
            ] {
                for b in bases {
                    let mut q = p.clone();
                    q.nodes.push(b.clone());
                    q.edges.push(kind);
                    stack.push(q);
                }
            }
        }
        out.push(p);
    }
    out
}

/// The subobject a full derivation path denotes: the chain suffix after the
/// last shared edge, because a shared base starts a fresh subobject no
/// matter how it was reached.
fn denote(mdc: &str, p: &Path) -> Subobject {
    let cut = p
        .edges
        .iter()
        .rposition(|e| *e == Edge::Shared)
        .map(|i| i + 1)
        .unwrap_or(0);
    Subobject::new(mdc, p.nodes[cut..].to_vec())
}

pub struct SubobjectOracle {
    pub subobjects: BTreeSet<Subobject>,
    /// contained[s] = every subobject denoted by an extension of a path
    /// denoting s (including s itself).
    contained: BTreeMap<Subobject, BTreeSet<Subobject>>,
}

impl SubobjectOracle {
    pub fn new(h: &ClassHierarchy, mdc: &str) -> Self {
        let paths = full_paths(h, mdc);
        let denoted: Vec<Subobject> = paths.iter().map(|p| denote(mdc, p)).collect();
        let subobjects: BTreeSet<Subobject> = denoted.iter().cloned().collect();
        let mut contained: BTreeMap<Subobject, BTreeSet<Subobject>> = BTreeMap::new();
        for (i, p) in paths.iter().enumerate() {
            for (j, q) in paths.iter().enumerate() {
                if q.nodes.len() >= p.nodes.len() && q.nodes[..p.nodes.len()] == p.nodes[..] {
                    contained
                        .entry(denoted[i].clone())
                        .or_default()
                        .insert(denoted[j].clone());
                }
            }
        }
        Self {
            subobjects,
            contained,
        }
    }

    fn contained_in(&self, s: &Subobject) -> &BTreeSet<Subobject> {
        self.contained.get(s).expect("known subobject")
    }

    pub fn visible_defs(
        &self,
        h: &ClassHierarchy,
        s: &Subobject,
        member: &str,
    ) -> BTreeSet<Subobject> {
        let declares = |class: &str| {
            h.get(class)
                .map(|c| c.members.iter().any(|m| m.name == member))
                .unwrap_or(false)
        };
        let candidates: Vec<&Subobject> = self
            .contained_in(s)
            .iter()
            .filter(|sub| declares(sub.ldc()))
            .collect();
        candidates
            .iter()
            .filter(|c| {
                !candidates
                    .iter()
                    .any(|other| other != *c && self.contained_in(other).contains(**c))
            })
            .map(|c| (*c).clone())
            .collect()
    }

    /// `Ok` with the dominant definition, `Err(0)` when undefined,
    /// `Err(n)` with the witness count when ambiguous.
    pub fn static_lookup(
        &self,
        h: &ClassHierarchy,
        s: &Subobject,
        member: &str,
    ) -> Result<Subobject, usize> {
        let visible = self.visible_defs(h, s, member);
        match visible.len() {
            1 => Ok(visible.into_iter().next().expect("one")),
            n => Err(n),
        }
    }

    pub fn dynamic_lookup(
        &self,
        h: &ClassHierarchy,
        s: &Subobject,
        member: &str,
    ) -> Result<Subobject, usize> {
        let stat = self.static_lookup(h, s, member)?;
        let is_virtual = h
            .get(stat.ldc())
            .map(|c| c.members.iter().any(|m| m.name == member && m.is_virtual))
            .unwrap_or(false);
        if is_virtual {
            self.static_lookup(h, &Subobject::full_object(s.mdc()), member)
        } else {
            Ok(stat)
        }
    }
}

/// Two-pass aggregate oracle using the alternate variance route
/// sqrt(E[x^2] - mean^2).
pub struct StatsOracle {
    pub sum: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub avg: f64,
    pub sd: f64,
    pub p90: f64,
}

impl StatsOracle {
    pub fn new(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sum: f64 = sorted.iter().sum();
        let avg = sum / n as f64;
        let mean_sq = sorted.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let sd = (mean_sq - avg * avg).max(0.0).sqrt();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            sum,
            min: sorted[0],
            max: sorted[n - 1],
            median,
            avg,
            sd,
            p90: sorted[rank - 1],
        })
    }
}
