//! Worked-example behavior of the analyses on the committed fixtures, plus
//! edge cases on small inline models.

mod common;

use std::collections::BTreeSet;

use common::load_fixture;

use reckon::gadgets::{
    available_gadgets, build_gadget_set, rank_controllable_callsites, GadgetAnnotation, GadgetKind,
};
use reckon::metrics::{bcga, fcga};
use reckon::model::{
    Callsite, CallsiteKind, ClassDef, ClassHierarchy, FunctionSignature, FunctionTable, Member,
    ProgramModel,
};
use reckon::policies::{Assessor, PolicyFilter, PolicyId};
use reckon::subobjects::{
    class_sub_hierarchy, corresponding_subobjects, dynamic_lookup, static_lookup, Subobject,
};
use reckon::vtables::{build_vtables, min_vtable_path};

fn refs(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn car_bin_types_counts_virtual_entries_plus_matching_non_virtuals() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let cs1 = &model.callsites[0]; // one int argument, return unused
    let set = assessor.targets_bin_types(cs1);
    assert_eq!(
        set.targets,
        refs(&[
            "Car::driverless",
            "ElectricCar::accelerateQuietly",
            "PetrolCar::produceNitrogenOxides",
            "PetrolCar::rechargePetrol",
        ])
    );
}

#[test]
fn listing1_bin_types_with_return_used_excludes_void_targets() {
    let model = load_fixture("listing1.reckon.json");
    let assessor = Assessor::new(&model);
    let mut cs = model.callsites[0].clone();
    cs.return_used = true;
    assert!(assessor.targets_bin_types(&cs).targets.is_empty());
}

#[test]
fn car_src_type_policies_on_one_int_argument() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let cs1 = &model.callsites[0];
    let safe = assessor.targets_safe_src_types(cs1);
    assert_eq!(
        safe.targets,
        refs(&[
            "ElectricCar::accelerateQuietly",
            "PetrolCar::produceNitrogenOxides"
        ])
    );
    assert_eq!(assessor.targets_src_types(cs1).targets, safe.targets);
    assert_eq!(
        assessor.targets_strict_src_types(cs1).targets,
        refs(&["ElectricCar::accelerateQuietly"])
    );
}

#[test]
fn car_all_vtables_yields_the_three_virtual_functions() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let set = assessor.targets_all_vtables(&model.callsites[0]);
    assert_eq!(
        set.targets,
        refs(&[
            "Car::driverless",
            "ElectricCar::accelerateQuietly",
            "PetrolCar::produceNitrogenOxides",
        ])
    );
}

#[test]
fn car_dispatch_on_electric_car_confines_to_its_lineage() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let cs1 = &model.callsites[0];
    let sub = assessor.targets_sub_hierarchy(cs1);
    assert_eq!(sub.targets, refs(&["ElectricCar::accelerateQuietly"]));
    let strict = assessor.targets_strict_sub_hierarchy(cs1);
    assert_eq!(strict.targets, refs(&["ElectricCar::accelerateQuietly"]));
    let by_slot = assessor.targets_vtable_hierarchy(cs1);
    assert_eq!(
        by_slot.targets,
        refs(&[
            "ElectricCar::accelerateQuietly",
            "PetrolCar::produceNitrogenOxides"
        ])
    );
}

#[test]
fn gadget_filter_keeps_the_annotated_dispatcher() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let sets = assessor.assess(
        PolicyId::SubHierarchy,
        &PolicyFilter {
            gadget_targets_only: true,
            ..PolicyFilter::default()
        },
    );
    let cs1 = sets.iter().find(|s| s.callsite_id == "cs1").unwrap();
    assert_eq!(cs1.targets, refs(&["ElectricCar::accelerateQuietly"]));
}

#[test]
fn whole_hierarchy_with_gadget_and_param_filters_matches_annotated_members() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let sets = assessor.assess(
        PolicyId::SubHierarchy,
        &PolicyFilter {
            gadget_targets_only: true,
            max_params: Some(6),
            whole_hierarchy: true,
            ..PolicyFilter::default()
        },
    );
    for set in sets.iter().filter(|s| !s.skipped) {
        assert_eq!(
            set.targets,
            refs(&[
                "ElectricCar::accelerateQuietly",
                "PetrolCar::produceNitrogenOxides"
            ])
        );
    }
}

#[test]
fn forward_gadget_availability_depends_on_policy() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let cs1 = model.callsites[0].clone();
    let all_vt = vec![assessor.targets_all_vtables(&cs1)];
    assert_eq!(fcga(&all_vt, &model), 2);

    // Dispatching driverless on Car confines the strict policy to a
    // gadget-free resolution while all-vtables still exposes both gadgets.
    let cs2 = model.callsites[1].clone();
    let strict = vec![assessor.targets_strict_sub_hierarchy(&cs2)];
    assert_eq!(
        strict[0].targets,
        refs(&["Car::driverless"]),
        "{:?}",
        strict[0].targets
    );
    assert_eq!(fcga(&strict, &model), 0);
    assert_eq!(fcga(&[assessor.targets_all_vtables(&cs2)], &model), 2);
}

#[test]
fn backward_gadget_availability_counts_gadget_function_callers() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let sets = assessor.assess(PolicyId::AllVtables, &PolicyFilter::default());
    // Both gadget functions sit in both callsites' allowed sets; no direct
    // calls target them.
    assert_eq!(bcga(&sets, &model), 4);
    assert_eq!(bcga(&[], &model), 0);
}

#[test]
fn available_gadgets_shrink_with_stricter_policies() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let gs = build_gadget_set(&model).unwrap();

    let all_vt = assessor.assess(PolicyId::AllVtables, &PolicyFilter::default());
    let avail = available_gadgets(&all_vt, &gs);
    assert_eq!(avail["cs1"].len(), 2);

    let strict = assessor.assess(PolicyId::StrictSubHierarchy, &PolicyFilter::default());
    let avail = available_gadgets(&strict, &gs);
    let kinds: Vec<GadgetKind> = avail["cs1"].iter().map(|r| r.kind).collect();
    assert_eq!(kinds, vec![GadgetKind::MainLoop]);
    assert!(avail["cs2"].is_empty());

    for (id, records) in &avail {
        let set = strict.iter().find(|s| &s.callsite_id == id).unwrap();
        for r in records {
            assert!(set.targets.contains(&r.function));
        }
    }
}

#[test]
fn car_subobject_lookups_follow_the_worked_example() {
    let model = load_fixture("car.reckon.json");
    let h = &model.hierarchy;

    let ec = Subobject::full_object("ElectricCar");
    let resolved = static_lookup(h, &ec, "driverless").unwrap();
    assert_eq!(resolved.ldc(), "Car");

    let hc_ec = Subobject::new(
        "HybrideCar",
        vec!["HybrideCar".into(), "ElectricCar".into()],
    );
    let resolved = dynamic_lookup(h, &hc_ec, "accelerateQuietly").unwrap();
    assert_eq!(resolved.ldc(), "ElectricCar");

    let slice = class_sub_hierarchy(h, "Car").unwrap();
    assert_eq!(slice.classes().len(), 4);
}

#[test]
fn listing1_corresponding_subobjects_and_sub_hierarchy() {
    let model = load_fixture("listing1.reckon.json");
    let h = &model.hierarchy;
    let type_set: BTreeSet<String> = ["Bar", "Baz", "Bac"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let subs = corresponding_subobjects(h, &type_set, "Bar").unwrap();
    assert_eq!(subs.len(), 3, "{subs:?}");

    let slice = class_sub_hierarchy(h, "Bar").unwrap();
    let names: Vec<&str> = slice.classes().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, vec!["Bar", "Baz", "Bac"]);
}

#[test]
fn car_vtable_sets_and_longest_path() {
    let model = load_fixture("car.reckon.json");
    let ft = FunctionTable::new(&model);
    let vth = build_vtables(&model, &ft);
    assert_eq!(vth.vtable_set("HybrideCar").len(), 2);
    assert_eq!(vth.vtable_set("Car").len(), 1);
    assert_eq!(
        min_vtable_path(&vth, "Car").unwrap(),
        vec!["Car", "ElectricCar", "HybrideCar"]
    );
    assert_eq!(
        min_vtable_path(&vth, "HybrideCar").unwrap(),
        vec!["HybrideCar"]
    );

    // Descending from the root table reaches every class's tables.
    let car_root = vth.table_ids_of("Car")[0];
    let reached = vth.sub_hierarchy(car_root);
    let owners: BTreeSet<&str> = reached
        .iter()
        .map(|&t| vth.tables[t].owning_class.as_str())
        .collect();
    assert_eq!(
        owners,
        ["Car", "ElectricCar", "PetrolCar", "HybrideCar"]
            .into_iter()
            .collect()
    );
}

#[test]
fn car_derived_closure_contains_the_worked_pairs() {
    let model = load_fixture("car.reckon.json");
    let rel = model.hierarchy.derived_closure().unwrap();
    for (d, b) in [
        ("HybrideCar", "Car"),
        ("ElectricCar", "Car"),
        ("HybrideCar", "ElectricCar"),
        ("HybrideCar", "PetrolCar"),
    ] {
        assert!(rel.contains(&(d.to_string(), b.to_string())), "({d}, {b})");
    }
    assert!(!rel.contains(&("Car".to_string(), "HybrideCar".to_string())));
}

#[test]
fn direct_calls_count_toward_return_targets() {
    let model = load_fixture("car.reckon.json");
    // No forward sets at all: rechargeElectically still has its one direct
    // caller.
    let counts = reckon::metrics::return_target_counts(&model, &[]);
    let get = |name: &str| counts.iter().find(|(r, _)| r == name).unwrap().1;
    assert_eq!(get("ElectricCar::rechargeElectically"), 1);
    assert_eq!(get("Car::driverless"), 0);
}

#[test]
fn score_extracts_average_and_percentile_bars() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let sets = assessor.assess(PolicyId::AllVtables, &PolicyFilter::default());
    let stats = reckon::metrics::ctr(&sets).unwrap();
    let report = reckon::metrics::MetricsReport {
        policy: PolicyId::AllVtables,
        ctr: stats,
        normalized: stats,
        baseline_used: 3,
        rtr: None,
        fcga: None,
        bcga: None,
        csd: None,
        rsd: None,
    };
    let score = reckon::metrics::score(&report);
    // Every callsite may target all three virtual functions.
    assert_eq!(score.avg, 3.0);
    assert_eq!(score.p90, 3.0);

    let ideal = reckon::metrics::AggregateStats::from_values(&[1.0, 1.0]).unwrap();
    let ideal_report = reckon::metrics::MetricsReport {
        policy: PolicyId::StrictSubHierarchy,
        ctr: ideal,
        normalized: ideal,
        baseline_used: 3,
        rtr: None,
        fcga: None,
        bcga: None,
        csd: None,
        rsd: None,
    };
    assert_eq!(reckon::metrics::score(&ideal_report).avg, 1.0);
}

/// The dominance filter answers from the static perspective of the chain,
/// so a mid-chain subobject sees the definition its own class provides.
#[test]
fn visible_defs_from_a_mid_chain_subobject_stay_static() {
    let model = load_fixture("listing1.reckon.json");
    let h = &model.hierarchy;
    let bac_bar = Subobject::new("Bac", vec!["Bac".into(), "Bar".into()]);
    let visible = reckon::subobjects::visible_defs(h, &bac_bar, "get");
    assert_eq!(visible.len(), 1);
    assert_eq!(visible.iter().next().unwrap().ldc(), "Bar");
    // Dynamic dispatch from the same subobject lands on the override.
    let dynamic = dynamic_lookup(h, &bac_bar, "get").unwrap();
    assert_eq!(dynamic.ldc(), "Bac");
}

fn member(class: &str, name: &str, virt: bool, pure: bool) -> Member {
    Member {
        owning_class: class.to_string(),
        name: name.to_string(),
        is_virtual: virt,
        is_pure_virtual: pure,
        signature: FunctionSignature::new(vec![], "void"),
        gadgets: Vec::new(),
    }
}

#[test]
fn vtable_hierarchy_policy_skips_pure_entries() {
    let classes = vec![
        ClassDef {
            name: "Abs".into(),
            shared_bases: vec![],
            replicated_bases: vec![],
            members: vec![member("Abs", "go", true, true)],
        },
        ClassDef {
            name: "Impl".into(),
            shared_bases: vec![],
            replicated_bases: vec!["Abs".into()],
            members: vec![member("Impl", "go", true, false)],
        },
    ];
    let model = ProgramModel {
        program: "pure".into(),
        hierarchy: ClassHierarchy::new(classes).unwrap(),
        free_functions: vec![],
        callsites: vec![Callsite {
            id: "cs".into(),
            location: "p.cpp:1:1".into(),
            kind: CallsiteKind::VirtualDispatch,
            static_receiver_type: Some("Abs".into()),
            member_name: Some("go".into()),
            provided_arg_types: vec![],
            return_used: false,
            controllable: false,
        }],
        direct_calls: vec![],
    };
    let assessor = Assessor::new(&model);
    let by_slot = assessor.targets_vtable_hierarchy(&model.callsites[0]);
    assert_eq!(by_slot.targets, refs(&["Impl::go"]));
}

#[test]
fn unusable_dispatcher_gadgets_do_not_qualify_callsites() {
    let mut run = member("G", "run", true, false);
    run.gadgets.push(GadgetAnnotation {
        kind: GadgetKind::MainLoop,
        start_address: None,
        usable: false,
    });
    let model = ProgramModel {
        program: "unusable".into(),
        hierarchy: ClassHierarchy::new(vec![ClassDef {
            name: "G".into(),
            shared_bases: vec![],
            replicated_bases: vec![],
            members: vec![run],
        }])
        .unwrap(),
        free_functions: vec![],
        callsites: vec![Callsite {
            id: "cs".into(),
            location: "p.cpp:1:1".into(),
            kind: CallsiteKind::VirtualDispatch,
            static_receiver_type: Some("G".into()),
            member_name: Some("run".into()),
            provided_arg_types: vec![],
            return_used: false,
            controllable: true,
        }],
        direct_calls: vec![],
    };
    let assessor = Assessor::new(&model);
    let per_policy = assessor.assess_all();
    let gs = build_gadget_set(&model).unwrap();
    let rows = rank_controllable_callsites(&model, &per_policy, &gs, PolicyId::SubHierarchy);
    assert!(rows.is_empty(), "unusable dispatcher must not produce rows");
}

#[test]
fn car_controllable_ranking_has_one_row() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let per_policy = assessor.assess_all();
    let gs = build_gadget_set(&model).unwrap();
    let rows = rank_controllable_callsites(&model, &per_policy, &gs, PolicyId::SubHierarchy);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].callsite_id, "cs1");
    assert_eq!(rows[0].param_count, 1);
    assert_eq!(rows[0].baseline_virtual, 3);
    assert_eq!(rows[0].baseline_all, 5);
    let sub_idx = PolicyId::ALL
        .iter()
        .position(|p| *p == PolicyId::SubHierarchy)
        .unwrap();
    assert_eq!(rows[0].counts[sub_idx], 1);
}

/// With exactly one caller per function the total return-target count
/// equals the function count, the shadow-stack ideal.
#[test]
fn one_caller_per_function_sums_to_function_count() {
    let n = 5usize;
    let free: Vec<Member> = (0..n)
        .map(|i| Member {
            owning_class: String::new(),
            name: format!("f{i}"),
            is_virtual: false,
            is_pure_virtual: false,
            signature: FunctionSignature::new(vec![], "void"),
            gadgets: vec![],
        })
        .collect();
    let direct_calls = (0..n)
        .map(|i| reckon::model::DirectCall {
            from: format!("a.cpp:{}:1", i + 1),
            to: format!("f{i}"),
        })
        .collect();
    let model = ProgramModel {
        program: "shadow".into(),
        hierarchy: ClassHierarchy::new(vec![]).unwrap(),
        free_functions: free,
        callsites: vec![],
        direct_calls,
    };
    let stats = reckon::metrics::rtr(&model, &[]).unwrap();
    assert_eq!(stats.sum, n as f64);
    assert_eq!(stats.avg, 1.0);
}

/// A member introduced along an ancestor's secondary lineage has no slot in
/// the receiver's own tables; the dispatch falls back to the nearest
/// ancestor table carrying the slot and the policy inclusions still hold.
#[test]
fn deep_secondary_lineage_dispatch_keeps_inclusions() {
    let classes = vec![
        ClassDef {
            name: "C1".into(),
            shared_bases: vec![],
            replicated_bases: vec![],
            members: vec![member("C1", "p", true, false)],
        },
        ClassDef {
            name: "C2".into(),
            shared_bases: vec![],
            replicated_bases: vec![],
            members: vec![member("C2", "q", true, false)],
        },
        ClassDef {
            name: "B1".into(),
            shared_bases: vec![],
            replicated_bases: vec![],
            members: vec![member("B1", "r", true, false)],
        },
        ClassDef {
            name: "B2".into(),
            shared_bases: vec![],
            replicated_bases: vec!["C1".into(), "C2".into()],
            members: vec![],
        },
        ClassDef {
            name: "R".into(),
            shared_bases: vec![],
            replicated_bases: vec!["B1".into(), "B2".into()],
            members: vec![],
        },
    ];
    let model = ProgramModel {
        program: "deep".into(),
        hierarchy: ClassHierarchy::new(classes).unwrap(),
        free_functions: vec![],
        callsites: vec![Callsite {
            id: "cs".into(),
            location: "d.cpp:1:1".into(),
            kind: CallsiteKind::VirtualDispatch,
            static_receiver_type: Some("R".into()),
            member_name: Some("q".into()),
            provided_arg_types: vec![],
            return_used: false,
            controllable: false,
        }],
        direct_calls: vec![],
    };
    assert!(reckon::model::validate(&model).is_empty());
    let assessor = Assessor::new(&model);
    let cs = &model.callsites[0];
    let strict = assessor.targets_strict_sub_hierarchy(cs);
    let sub = assessor.targets_sub_hierarchy(cs);
    let all_vt = assessor.targets_all_vtables(cs);
    let by_slot = assessor.targets_vtable_hierarchy(cs);
    assert_eq!(sub.targets, refs(&["C2::q"]));
    assert!(strict.targets.is_subset(&sub.targets));
    assert!(sub.targets.is_subset(&all_vt.targets));
    assert!(sub.targets.is_subset(&by_slot.targets));
}

/// Dispatching a member that lives in the receiver's secondary table:
/// HybrideCar reaches accelerateQuietly through its ElectricCar-lineage
/// table.
#[test]
fn dispatch_through_secondary_table_resolves() {
    let model = load_fixture("car.reckon.json");
    let assessor = Assessor::new(&model);
    let cs = Callsite {
        id: "hc".into(),
        location: "main.cpp:20:3".into(),
        kind: CallsiteKind::VirtualDispatch,
        static_receiver_type: Some("HybrideCar".into()),
        member_name: Some("accelerateQuietly".into()),
        provided_arg_types: vec!["int".into()],
        return_used: false,
        controllable: false,
    };
    let sub = assessor.targets_sub_hierarchy(&cs);
    assert_eq!(sub.targets, refs(&["ElectricCar::accelerateQuietly"]));
    let strict = assessor.targets_strict_sub_hierarchy(&cs);
    assert_eq!(strict.targets, refs(&["ElectricCar::accelerateQuietly"]));
}

/// With overloaded virtual members, the dispatch slot prefers the overload
/// whose parameters match the provided arguments exactly.
#[test]
fn overloaded_dispatch_prefers_exact_argument_match() {
    let classes = vec![ClassDef {
        name: "X".into(),
        shared_bases: vec![],
        replicated_bases: vec![],
        members: vec![
            Member {
                owning_class: "X".into(),
                name: "m".into(),
                is_virtual: true,
                is_pure_virtual: false,
                signature: FunctionSignature::new(vec![], "void"),
                gadgets: vec![],
            },
            Member {
                owning_class: "X".into(),
                name: "m".into(),
                is_virtual: true,
                is_pure_virtual: false,
                signature: FunctionSignature::new(vec!["int".into()], "void"),
                gadgets: vec![],
            },
        ],
    }];
    let model = ProgramModel {
        program: "overload".into(),
        hierarchy: ClassHierarchy::new(classes).unwrap(),
        free_functions: vec![],
        callsites: vec![Callsite {
            id: "cs".into(),
            location: "o.cpp:1:1".into(),
            kind: CallsiteKind::VirtualDispatch,
            static_receiver_type: Some("X".into()),
            member_name: Some("m".into()),
            provided_arg_types: vec!["int".into()],
            return_used: false,
            controllable: false,
        }],
        direct_calls: vec![],
    };
    assert!(reckon::model::validate(&model).is_empty());
    let assessor = Assessor::new(&model);
    let cs = &model.callsites[0];
    assert_eq!(
        assessor.targets_sub_hierarchy(cs).targets,
        refs(&["X::m(int)"])
    );
    assert_eq!(
        assessor.targets_strict_src_types(cs).targets,
        refs(&["X::m(int)"])
    );
}

#[test]
fn function_pointer_callsites_may_target_free_functions() {
    let model = ProgramModel {
        program: "free".into(),
        hierarchy: ClassHierarchy::new(vec![]).unwrap(),
        free_functions: vec![
            Member {
                owning_class: String::new(),
                name: "handler".into(),
                is_virtual: false,
                is_pure_virtual: false,
                signature: FunctionSignature::new(vec!["int".into()], "void"),
                gadgets: vec![],
            },
            Member {
                owning_class: String::new(),
                name: "other".into(),
                is_virtual: false,
                is_pure_virtual: false,
                signature: FunctionSignature::new(vec!["int".into(), "int".into()], "bool"),
                gadgets: vec![],
            },
        ],
        callsites: vec![Callsite {
            id: "fp".into(),
            location: "f.cpp:3:1".into(),
            kind: CallsiteKind::FunctionPointer,
            static_receiver_type: None,
            member_name: None,
            provided_arg_types: vec!["int".into()],
            return_used: false,
            controllable: false,
        }],
        direct_calls: vec![],
    };
    assert!(reckon::model::validate(&model).is_empty());
    let assessor = Assessor::new(&model);
    let cs = &model.callsites[0];
    assert_eq!(assessor.targets_bin_types(cs).targets, refs(&["handler"]));
    assert_eq!(
        assessor.targets_safe_src_types(cs).targets,
        refs(&["handler"])
    );
}
