mod common;

use std::fmt::Write;
use std::sync::Arc;

use proptest::prelude::*;

use common::{cross_thimac_transfers, dynamic, fixture_text, load, warshall_cp};
use tmkit::bpmn::{import_bpmn, parse_bpmn, NodeKind};
use tmkit::dsl::{parse, parse_simplified, print_simplified, SourceFile};
use tmkit::dynamics::compile_dynamic;
use tmkit::model::{ActionKind, ArcKind};
use tmkit::render::{cp_reachability, desugar, simplify, to_dot, DotTarget, View};
use tmkit::sim::{RunBound, Scenario, SimState};
use tmkit::validate::validate;

#[test]
fn fig13_structure() {
    let g = parse_bpmn(&fixture_text("fig13.bpmn")).unwrap();
    let names: Vec<&str> = g
        .participants
        .iter()
        .map(|p| p.name.as_deref().unwrap_or(""))
        .collect();
    assert_eq!(
        names,
        ["Customer", "New Car Sales", "Loaner", "Manufacturer"]
    );
    let black: Vec<&str> = g
        .participants
        .iter()
        .filter(|p| g.is_black_box(p))
        .map(|p| p.name.as_deref().unwrap_or(""))
        .collect();
    assert_eq!(black, ["Customer", "Loaner", "Manufacturer"]);
    let lanes: Vec<&str> = g
        .lanes
        .iter()
        .map(|l| l.name.as_deref().unwrap_or(""))
        .collect();
    assert_eq!(lanes, ["Sales", "Finance", "Preparation"]);
    assert_eq!(g.message_flows.len(), 9);
    assert!(g
        .nodes
        .iter()
        .any(|n| n.kind == NodeKind::SubProcess && n.id == "Sub_Factory"));
    assert!(g.warnings.is_empty(), "{}", g.warnings);
}

#[test]
fn fig13_import_simulates() {
    let (m, d, warnings) = import_bpmn(&fixture_text("fig13.bpmn")).unwrap();
    assert!(warnings.is_empty(), "{warnings}");
    assert!(!validate(&m, &d).has_errors());
    let dynamic = compile_dynamic(Arc::new(m), &d).unwrap();
    for guards in [
        vec![("available", true), ("approved", true)],
        vec![("available", true), ("rejected", true)],
        vec![("factory", true), ("approved", true)],
        vec![("unavailable", true)],
    ] {
        let trace = SimState::init(&dynamic, &Scenario::single(&guards))
            .unwrap()
            .run(RunBound::Quiescence)
            .unwrap();
        assert!(trace.positives().count() >= 3, "{guards:?}");
    }
}

#[test]
fn throw_event_imports_like_send_task() {
    let (a, _, _) = import_bpmn(&fixture_text("fig13.bpmn")).unwrap();
    let (b, _, _) = import_bpmn(&fixture_text("fig13_throw.bpmn")).unwrap();
    common::path_isomorphic(&a, &b).unwrap();
}

#[test]
fn carsale_dot_views() {
    let m = load("carsale.tm").0;
    let dot = to_dot(DotTarget::Static(&m), View::Static);
    assert_eq!(dot.matches("label=\"car.").count(), 31);
    assert_eq!(dot.matches("subgraph cluster_t").count(), m.thimacs.len());
    assert_eq!(
        dot.matches("style=dashed").count(),
        m.arcs
            .values()
            .filter(|a| a.kind == ArcKind::Trigger)
            .count()
            + m.joins.len()
    );
    let d = dynamic("carsale.tm");
    let chron = to_dot(DotTarget::Chronology(&d.chronology), View::Chronology);
    assert_eq!(chron.matches("\" [shape=box").count(), 17);
    assert_eq!(chron.matches("cj0 [shape=box").count(), 1);
    assert_eq!(chron.matches("\"R16\" [shape=octagon").count(), 1);
    let dyn_dot = to_dot(DotTarget::Dynamic(&d), View::Dynamic);
    assert_eq!(dyn_dot.matches("subgraph cluster_e").count(), 17);
    for dot in [&dot, &chron, &dyn_dot] {
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());
        assert!(dot.starts_with("digraph tm {\n") && dot.ends_with("}\n"));
    }
}

#[test]
fn simplify_is_idempotent_and_reversible() {
    for name in common::TM_FIXTURES {
        let m = load(name).0;
        let s = simplify(&m);
        let again = simplify(&s.model);
        assert!(again.links.is_empty(), "{name}");
        assert_eq!(again.model, s.model, "{name}");
        let d = desugar(&s);
        assert_eq!(cp_reachability(&d), cp_reachability(&m), "{name}");
        assert_eq!(cp_reachability(&m), warshall_cp(&m), "{name}");
        let text = print_simplified(&s);
        let back = parse_simplified(&SourceFile::new(name, text.clone())).unwrap();
        assert_eq!(print_simplified(&back), text, "{name}");
    }
}

#[test]
fn chain_free_model_is_untouched() {
    let (m, _) = parse(&SourceFile::new(
        "t",
        "thimac A { create @a; process @b; release @c; }\nflow @a -> @b;\nflow @b -> @c;\n",
    ))
    .unwrap();
    let s = simplify(&m);
    assert!(s.links.is_empty());
    assert_eq!(s.model, m);
    assert_eq!(desugar(&s), m);
}

#[test]
fn hammer_chain_collapses_to_one_link() {
    let m = load("hammer.tm").0;
    let s = simplify(&m);
    assert_eq!(s.links.len(), 1);
    assert_eq!(s.model.stages.len(), m.stages.len() - 4);
    let from = s.model.stages[&s.links[0].from].kind;
    assert_eq!(from, ActionKind::Process);
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Task,
    Send,
    Receive,
    Choice,
    Parallel,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        Just(Step::Task),
        Just(Step::Send),
        Just(Step::Receive),
        Just(Step::Choice),
        Just(Step::Parallel),
    ]
}

/// One pool with a sequential process and a black-box partner pool.
fn generate(steps: &[Step]) -> (String, usize) {
    let mut nodes = String::new();
    let mut flows = String::new();
    let mut messages = String::new();
    let mut f = 0;
    let mut flow = |flows: &mut String, from: &str, to: &str, name: Option<&str>| {
        f += 1;
        let name = name.map(|n| format!(" name=\"{n}\"")).unwrap_or_default();
        writeln!(
            flows,
            r#"    <sequenceFlow id="F{f}"{name} sourceRef="{from}" targetRef="{to}"/>"#
        )
        .unwrap();
    };
    writeln!(nodes, r#"    <startEvent id="Start"/>"#).unwrap();
    let mut prev = "Start".to_string();
    let mut mf = 0;
    for (i, s) in steps.iter().enumerate() {
        match s {
            Step::Task | Step::Send | Step::Receive => {
                let (tag, dir) = match s {
                    Step::Task => ("task", None),
                    Step::Send => ("sendTask", Some(true)),
                    _ => ("receiveTask", Some(false)),
                };
                let id = format!("T{i}");
                writeln!(nodes, r#"    <{tag} id="{id}" name="Step {i}"/>"#).unwrap();
                if let Some(out) = dir {
                    mf += 1;
                    let (src, dst) = if out {
                        (id.as_str(), "P_Partner")
                    } else {
                        ("P_Partner", id.as_str())
                    };
                    writeln!(
                        messages,
                        r#"    <messageFlow id="MF{i}" sourceRef="{src}" targetRef="{dst}"/>"#
                    )
                    .unwrap();
                }
                flow(&mut flows, &prev, &id, None);
                prev = id;
            }
            Step::Choice | Step::Parallel => {
                let tag = if matches!(s, Step::Choice) {
                    "exclusiveGateway"
                } else {
                    "parallelGateway"
                };
                let (split, merge) = (format!("G{i}s"), format!("G{i}m"));
                writeln!(nodes, r#"    <{tag} id="{split}"/>"#).unwrap();
                writeln!(nodes, r#"    <{tag} id="{merge}"/>"#).unwrap();
                flow(&mut flows, &prev, &split, None);
                for branch in ["a", "b"] {
                    let id = format!("T{i}{branch}");
                    writeln!(nodes, r#"    <task id="{id}" name="Branch {i} {branch}"/>"#).unwrap();
                    let guard = format!("{branch}{i}");
                    let guard = matches!(s, Step::Choice).then_some(guard.as_str());
                    flow(&mut flows, &split, &id, guard);
                    flow(&mut flows, &id, &merge, None);
                }
                prev = merge;
            }
        }
    }
    writeln!(nodes, r#"    <endEvent id="End"/>"#).unwrap();
    flow(&mut flows, &prev, "End", None);
    let xml = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL" id="Gen">
  <collaboration id="C">
    <participant id="P_Main" name="Main" processRef="Proc"/>
    <participant id="P_Partner" name="Partner"/>
{messages}  </collaboration>
  <process id="Proc">
{nodes}{flows}  </process>
</definitions>
"#
    );
    (xml, mf)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_processes_import_cleanly(steps in proptest::collection::vec(step(), 1..8)) {
        let (xml, message_flows) = generate(&steps);
        let (m, d, _) = match import_bpmn(&xml) {
            Ok(x) => x,
            Err(e) => return Err(TestCaseError::fail(format!("{e}\n{xml}"))),
        };
        let diags = validate(&m, &d);
        prop_assert!(!diags.has_errors(), "{}\n{}", diags, xml);
        prop_assert_eq!(cross_thimac_transfers(&m), message_flows);
        let dynamic = compile_dynamic(Arc::new(m), &d).unwrap();
        let guards: Vec<String> = steps
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Step::Choice))
            .map(|(i, _)| format!("a{i}"))
            .collect();
        let guards: Vec<(&str, bool)> = guards.iter().map(|g| (g.as_str(), true)).collect();
        let trace = SimState::init(&dynamic, &Scenario::single(&guards))
            .unwrap()
            .run(RunBound::Quiescence);
        prop_assert!(trace.is_ok(), "{:?}\n{}", trace.err(), xml);
    }
}
