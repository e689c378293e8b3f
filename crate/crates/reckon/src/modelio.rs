//! Model file format (`.reckon.json`), canonical serialization, and seeded
//! synthetic model generation for the property suites.
//!
//! The canonical form sorts object keys, keeps classes and members in
//! declaration order, indents with two spaces, and ends with a newline, so
//! saved documents are byte-stable golden files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gadgets::{GadgetAnnotation, GadgetKind};
use crate::model::{
    validate, Callsite, CallsiteKind, ClassDef, ClassHierarchy, DirectCall, FunctionSignature,
    FunctionTable, Member, ProgramModel, Violation,
};
use crate::subobjects::{static_lookup, Subobject};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported format version {0}, expected {FORMAT_VERSION}")]
    Version(u32),
    #[error("{0}")]
    Structure(String),
    #[error("model validation failed:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    #[serde(rename = "formatVersion")]
    format_version: u32,
    program: String,
    classes: Vec<ClassDoc>,
    #[serde(rename = "freeFunctions", default)]
    free_functions: Vec<MemberDoc>,
    #[serde(default)]
    callsites: Vec<CallsiteDoc>,
    #[serde(rename = "directCalls", default)]
    direct_calls: Vec<DirectCallDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    name: String,
    #[serde(rename = "sharedBases", default)]
    shared_bases: Vec<String>,
    #[serde(rename = "replicatedBases", default)]
    replicated_bases: Vec<String>,
    #[serde(default)]
    members: Vec<MemberDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberDoc {
    name: String,
    #[serde(rename = "virtual", default)]
    is_virtual: bool,
    #[serde(default)]
    pure: bool,
    #[serde(default)]
    params: Vec<String>,
    #[serde(
        rename = "paramCount",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    param_count: Option<usize>,
    #[serde(rename = "return", default = "void_return")]
    return_type: String,
    #[serde(default)]
    gadgets: Vec<GadgetDoc>,
}

fn void_return() -> String {
    "void".to_string()
}

/// Either a bare kind string (`"ML-G"`) or a record carrying the optional
/// start address and usability flag.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum GadgetDoc {
    Kind(String),
    Full {
        kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<u64>,
        #[serde(default = "default_true")]
        usable: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CallsiteDoc {
    id: String,
    location: String,
    kind: String,
    #[serde(
        rename = "staticReceiverType",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    static_receiver_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    member: Option<String>,
    #[serde(default)]
    args: Vec<String>,
    #[serde(rename = "returnUsed", default)]
    return_used: bool,
    #[serde(default)]
    controllable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectCallDoc {
    from: String,
    to: String,
}

fn member_from_doc(owning_class: &str, doc: &MemberDoc) -> Result<Member, LoadError> {
    let mut gadgets = Vec::new();
    for g in &doc.gadgets {
        let (kind_str, start, usable) = match g {
            GadgetDoc::Kind(k) => (k.as_str(), None, true),
            GadgetDoc::Full {
                kind,
                start,
                usable,
            } => (kind.as_str(), *start, *usable),
        };
        let kind: GadgetKind = kind_str
            .parse()
            .map_err(|e: String| LoadError::Structure(e))?;
        gadgets.push(GadgetAnnotation {
            kind,
            start_address: start,
            usable,
        });
    }
    let mut signature = FunctionSignature::new(doc.params.clone(), doc.return_type.clone());
    if let Some(count) = doc.param_count {
        signature.param_count = count;
    }
    Ok(Member {
        owning_class: owning_class.to_string(),
        name: doc.name.clone(),
        is_virtual: doc.is_virtual,
        is_pure_virtual: doc.pure,
        signature,
        gadgets,
    })
}

fn callsite_from_doc(doc: &CallsiteDoc) -> Result<Callsite, LoadError> {
    let kind = match doc.kind.as_str() {
        "virtual-dispatch" => CallsiteKind::VirtualDispatch,
        "function-pointer" => CallsiteKind::FunctionPointer,
        other => {
            return Err(LoadError::Structure(format!(
                "callsite {}: unknown kind {other:?}",
                doc.id
            )))
        }
    };
    Ok(Callsite {
        id: doc.id.clone(),
        location: doc.location.clone(),
        kind,
        static_receiver_type: doc.static_receiver_type.clone(),
        member_name: doc.member.clone(),
        provided_arg_types: doc.args.clone(),
        return_used: doc.return_used,
        controllable: doc.controllable,
    })
}

/// Parses a document without validating the resulting model. `cmd validate`
/// uses this to report violations instead of refusing to load.
pub fn parse_model(text: &str) -> Result<ProgramModel, LoadError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| LoadError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(LoadError::Version(doc.format_version));
    }
    let mut classes = Vec::new();
    for c in &doc.classes {
        let members = c
            .members
            .iter()
            .map(|m| member_from_doc(&c.name, m))
            .collect::<Result<Vec<_>, _>>()?;
        classes.push(ClassDef {
            name: c.name.clone(),
            shared_bases: c.shared_bases.clone(),
            replicated_bases: c.replicated_bases.clone(),
            members,
        });
    }
    let hierarchy = ClassHierarchy::new(classes).map_err(LoadError::Structure)?;
    let free_functions = doc
        .free_functions
        .iter()
        .map(|m| member_from_doc("", m))
        .collect::<Result<Vec<_>, _>>()?;
    let callsites = doc
        .callsites
        .iter()
        .map(callsite_from_doc)
        .collect::<Result<Vec<_>, _>>()?;
    let direct_calls = doc
        .direct_calls
        .iter()
        .map(|d| DirectCall {
            from: d.from.clone(),
            to: d.to.clone(),
        })
        .collect();
    Ok(ProgramModel {
        program: doc.program,
        hierarchy,
        free_functions,
        callsites,
        direct_calls,
    })
}

/// Parses and validates; violations abort the load.
pub fn load_model(text: &str) -> Result<ProgramModel, LoadError> {
    let model = parse_model(text)?;
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(LoadError::Invalid(violations))
    }
}

fn member_to_doc(m: &Member) -> MemberDoc {
    MemberDoc {
        name: m.name.clone(),
        is_virtual: m.is_virtual,
        pure: m.is_pure_virtual,
        params: m.signature.param_types.clone(),
        param_count: if m.signature.is_consistent() {
            None
        } else {
            Some(m.signature.param_count)
        },
        return_type: m.signature.return_type.clone(),
        gadgets: m
            .gadgets
            .iter()
            .map(|g| {
                if g.start_address.is_none() && g.usable {
                    GadgetDoc::Kind(g.kind.as_str().to_string())
                } else {
                    GadgetDoc::Full {
                        kind: g.kind.as_str().to_string(),
                        start: g.start_address,
                        usable: g.usable,
                    }
                }
            })
            .collect(),
    }
}

/// Canonical serialization: sorted keys, declaration order preserved in
/// arrays, two-space indentation, newline-terminated.
pub fn save_model(model: &ProgramModel) -> String {
    let doc = ModelDocument {
        format_version: FORMAT_VERSION,
        program: model.program.clone(),
        classes: model
            .hierarchy
            .classes()
            .iter()
            .map(|c| ClassDoc {
                name: c.name.clone(),
                shared_bases: c.shared_bases.clone(),
                replicated_bases: c.replicated_bases.clone(),
                members: c.members.iter().map(member_to_doc).collect(),
            })
            .collect(),
        free_functions: model.free_functions.iter().map(member_to_doc).collect(),
        callsites: model
            .callsites
            .iter()
            .map(|cs| CallsiteDoc {
                id: cs.id.clone(),
                location: cs.location.clone(),
                kind: cs.kind.to_string(),
                static_receiver_type: cs.static_receiver_type.clone(),
                member: cs.member_name.clone(),
                args: cs.provided_arg_types.clone(),
                return_used: cs.return_used,
                controllable: cs.controllable,
            })
            .collect(),
        direct_calls: model
            .direct_calls
            .iter()
            .map(|d| DirectCallDoc {
                from: d.from.clone(),
                to: d.to.clone(),
            })
            .collect(),
    };
    // Routing through Value sorts every object's keys.
    let value = serde_json::to_value(&doc).expect("document serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value prints");
    text.push('\n');
    text
}

/// Shape of a synthetic model.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub class_count: u32,
    pub max_bases: u32,
    pub max_members: u32,
    pub gadget_density: f64,
    pub callsite_count: u32,
}

const PARAM_TYPES: [&str; 8] = [
    "int", "float", "double", "bool", "char", "long", "int*", "void*",
];
const RETURN_TYPES: [&str; 4] = ["void", "int", "bool", "double"];

/// Deterministic random model: same seed and spec, same model. Inheritance
/// edges point only at earlier classes, so the output is always acyclic and
/// passes validation.
pub fn generate_synthetic(seed: u64, spec: &SynthSpec) -> ProgramModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.class_count as usize;
    let mut classes: Vec<ClassDef> = Vec::with_capacity(n);
    let mut fresh_names = 0usize;

    for i in 0..n {
        let name = format!("C{i}");
        let mut shared = Vec::new();
        let mut replicated = Vec::new();
        if i > 0 {
            let max = (spec.max_bases as usize).min(i);
            let count = rng.gen_range(0..=max);
            let mut picks: Vec<usize> = (0..i).collect();
            for _ in 0..count {
                let k = rng.gen_range(0..picks.len());
                let base = picks.swap_remove(k);
                if rng.gen_bool(0.3) {
                    shared.push(format!("C{base}"));
                } else {
                    replicated.push(format!("C{base}"));
                }
            }
        }

        // Virtual members visible from the bases, as override candidates.
        let mut inherited: Vec<(String, Vec<String>, String)> = Vec::new();
        {
            let mut stack: Vec<&str> = shared
                .iter()
                .chain(replicated.iter())
                .map(|s| s.as_str())
                .collect();
            let mut seen = std::collections::BTreeSet::new();
            while let Some(b) = stack.pop() {
                if !seen.insert(b.to_string()) {
                    continue;
                }
                let def = classes
                    .iter()
                    .find(|c| c.name == b)
                    .expect("bases are earlier classes");
                for m in &def.members {
                    if m.is_virtual {
                        inherited.push((
                            m.name.clone(),
                            m.signature.param_types.clone(),
                            m.signature.return_type.clone(),
                        ));
                    }
                }
                stack.extend(def.direct_bases().map(|s| s.as_str()));
            }
            inherited.sort();
            inherited.dedup();
        }

        let mut members = Vec::new();
        let mut used_names = std::collections::BTreeSet::new();
        let member_count = rng.gen_range(0..=spec.max_members as usize);
        for _ in 0..member_count {
            let overriding = !inherited.is_empty() && rng.gen_bool(0.35);
            let (mname, params, ret, is_virtual) = if overriding {
                let (mn, p, r) = inherited[rng.gen_range(0..inherited.len())].clone();
                (mn, p, r, true)
            } else {
                fresh_names += 1;
                let params: Vec<String> = (0..rng.gen_range(0..=4usize))
                    .map(|_| PARAM_TYPES[rng.gen_range(0..PARAM_TYPES.len())].to_string())
                    .collect();
                let ret = RETURN_TYPES[rng.gen_range(0..RETURN_TYPES.len())].to_string();
                (format!("m{fresh_names}"), params, ret, rng.gen_bool(0.7))
            };
            if !used_names.insert(mname.clone()) {
                continue;
            }
            let gadgets = if is_virtual && rng.gen_bool(spec.gadget_density) {
                vec![GadgetAnnotation::new(
                    GadgetKind::ALL[rng.gen_range(0..GadgetKind::ALL.len())],
                )]
            } else {
                Vec::new()
            };
            members.push(Member {
                owning_class: name.clone(),
                name: mname,
                is_virtual,
                is_pure_virtual: is_virtual && rng.gen_bool(0.05),
                signature: FunctionSignature::new(params, ret),
                gadgets,
            });
        }

        classes.push(ClassDef {
            name,
            shared_bases: shared,
            replicated_bases: replicated,
            members,
        });
    }

    let hierarchy = ClassHierarchy::new(classes).expect("generated names are unique");

    let mut free_functions = Vec::new();
    for _ in 0..rng.gen_range(0..=3usize) {
        fresh_names += 1;
        let params: Vec<String> = (0..rng.gen_range(0..=3usize))
            .map(|_| PARAM_TYPES[rng.gen_range(0..PARAM_TYPES.len())].to_string())
            .collect();
        free_functions.push(Member {
            owning_class: String::new(),
            name: format!("f{fresh_names}"),
            is_virtual: false,
            is_pure_virtual: false,
            signature: FunctionSignature::new(
                params,
                RETURN_TYPES[rng.gen_range(0..RETURN_TYPES.len())],
            ),
            gadgets: Vec::new(),
        });
    }

    // Dispatchable (receiver, member) pairs: lookup succeeds and lands on
    // a virtual definition.
    let mut dispatch_pairs: Vec<(String, String, Vec<String>)> = Vec::new();
    for c in hierarchy.classes() {
        let mut names: Vec<&str> = c.members.iter().map(|m| m.name.as_str()).collect();
        let mut ancestors: Vec<String> = hierarchy.ancestors(&c.name).into_iter().collect();
        ancestors.sort();
        for a in &ancestors {
            if let Some(def) = hierarchy.get(a) {
                names.extend(def.members.iter().map(|m| m.name.as_str()));
            }
        }
        names.sort();
        names.dedup();
        for mname in names {
            let full = Subobject::full_object(&c.name);
            if let Ok(resolved) = static_lookup(&hierarchy, &full, mname) {
                let decl = hierarchy.get(resolved.ldc()).expect("ldc exists");
                if let Some(m) = decl
                    .members
                    .iter()
                    .find(|m| m.name == mname && m.is_virtual)
                {
                    dispatch_pairs.push((
                        c.name.clone(),
                        mname.to_string(),
                        m.signature.param_types.clone(),
                    ));
                }
            }
        }
    }

    let mut callsites = Vec::new();
    for i in 0..spec.callsite_count as usize {
        let id = format!("cs{i}");
        let location = format!("gen.cpp:{}:1", i + 1);
        let virtual_dispatch = !dispatch_pairs.is_empty() && rng.gen_bool(0.75);
        if virtual_dispatch {
            let (recv, member, target_params) =
                dispatch_pairs[rng.gen_range(0..dispatch_pairs.len())].clone();
            let args = if rng.gen_bool(0.6) {
                target_params
            } else {
                (0..rng.gen_range(0..=3usize))
                    .map(|_| PARAM_TYPES[rng.gen_range(0..PARAM_TYPES.len())].to_string())
                    .collect()
            };
            callsites.push(Callsite {
                id,
                location,
                kind: CallsiteKind::VirtualDispatch,
                static_receiver_type: Some(recv),
                member_name: Some(member),
                provided_arg_types: args,
                return_used: rng.gen_bool(0.2),
                controllable: rng.gen_bool(0.3),
            });
        } else {
            callsites.push(Callsite {
                id,
                location,
                kind: CallsiteKind::FunctionPointer,
                static_receiver_type: None,
                member_name: None,
                provided_arg_types: (0..rng.gen_range(0..=3usize))
                    .map(|_| PARAM_TYPES[rng.gen_range(0..PARAM_TYPES.len())].to_string())
                    .collect(),
                return_used: rng.gen_bool(0.2),
                controllable: rng.gen_bool(0.3),
            });
        }
    }

    let mut model = ProgramModel {
        program: format!("synthetic-{seed}"),
        hierarchy,
        free_functions,
        callsites,
        direct_calls: Vec::new(),
    };

    let refs: Vec<String> = {
        let ft = FunctionTable::new(&model);
        ft.ids().map(|id| ft.reference(id).to_string()).collect()
    };
    if !refs.is_empty() {
        for i in 0..rng.gen_range(0..=3usize) {
            model.direct_calls.push(DirectCall {
                from: format!("gen.cpp:{}:9", 1000 + i),
                to: refs[rng.gen_range(0..refs.len())].clone(),
            });
        }
    }

    debug_assert!(validate(&model).is_empty(), "generated model must validate");
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            class_count: 8,
            max_bases: 2,
            max_members: 3,
            gadget_density: 0.2,
            callsite_count: 6,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = save_model(&generate_synthetic(1, &small_spec()));
        let b = save_model(&generate_synthetic(1, &small_spec()));
        assert_eq!(a, b);
        let c = save_model(&generate_synthetic(2, &small_spec()));
        assert_ne!(a, c);
    }

    #[test]
    fn zero_classes_gives_empty_valid_model() {
        let m = generate_synthetic(
            9,
            &SynthSpec {
                class_count: 0,
                max_bases: 0,
                max_members: 0,
                gadget_density: 0.0,
                callsite_count: 0,
            },
        );
        assert!(m.hierarchy.is_empty());
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn generated_models_validate() {
        for seed in 0..50 {
            let m = generate_synthetic(seed, &small_spec());
            assert!(validate(&m).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let m = generate_synthetic(3, &small_spec());
        let text = save_model(&m);
        let loaded = load_model(&text).unwrap();
        assert_eq!(save_model(&loaded), text);
    }

    #[test]
    fn empty_model_round_trips() {
        let m = ProgramModel {
            program: "empty".into(),
            ..Default::default()
        };
        let text = save_model(&m);
        let loaded = load_model(&text).unwrap();
        assert!(loaded.hierarchy.is_empty());
        assert_eq!(save_model(&loaded), text);
    }

    #[test]
    fn duplicate_class_name_is_a_load_error() {
        let text = r#"{"formatVersion":1,"program":"d","classes":[{"name":"X"},{"name":"X"}]}"#;
        let err = load_model(text).unwrap_err();
        assert!(
            matches!(err, LoadError::Structure(ref s) if s.contains("X")),
            "{err}"
        );
    }

    #[test]
    fn unknown_format_version_is_rejected() {
        let text = r#"{"formatVersion":2,"program":"v","classes":[]}"#;
        assert!(matches!(load_model(text), Err(LoadError::Version(2))));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = load_model("{ nope").unwrap_err();
        match err {
            LoadError::Syntax { line, column, .. } => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }
}
