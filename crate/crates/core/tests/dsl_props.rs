mod common;

use proptest::prelude::*;

use tmkit::dsl::{
    parse, print, ChronDecl, DynamicDecls, EventDecl, EventKind, JoinInputDecl, NegativeDecl,
    SourceFile,
};
use tmkit::model::{
    ActionKind, ArcKind, StageId, StaticModel, ThingClassification, TransferDirection,
};

#[derive(Debug, Clone)]
enum Op {
    Thimac(Option<usize>, usize, usize),
    Stage(usize, usize, usize, bool),
    Arc(usize, usize, bool, Option<String>),
    Join(usize, usize, usize),
    Memory(usize, usize),
}

const NAMES: [&str; 6] = ["Car", "Order", "Buyer", "Sales", "M1", "x_2"];

fn text() -> impl Strategy<Value = String> {
    "[ -~\n\t]{0,10}"
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => (proptest::option::of(0..9usize), 0..6usize, 0..3usize)
            .prop_map(|(p, n, c)| Op::Thimac(p, n, c)),
        3 => (0..9usize, 0..5usize, 0..3usize, any::<bool>())
            .prop_map(|(o, k, d, l)| Op::Stage(o, k, d, l)),
        3 => (0..30usize, 0..30usize, any::<bool>(), proptest::option::of(text()))
            .prop_map(|(f, t, tr, g)| Op::Arc(f, t, tr, g)),
        1 => (0..30usize, 0..30usize, 0..30usize).prop_map(|(a, b, o)| Op::Join(a, b, o)),
        1 => (0..30usize, 0..6usize).prop_map(|(s, n)| Op::Memory(s, n)),
    ]
}

fn build(ops: &[Op]) -> StaticModel {
    let mut m = StaticModel::new();
    for (i, op) in ops.iter().enumerate() {
        let thimacs: Vec<_> = m.thimacs.keys().copied().collect();
        let stages: Vec<StageId> = m.stages.keys().copied().collect();
        let _ = match op {
            Op::Thimac(p, n, c) => {
                let parent = p
                    .filter(|_| !thimacs.is_empty())
                    .map(|p| thimacs[p % thimacs.len()]);
                let class = [
                    ThingClassification::Existing,
                    ThingClassification::Subsisting,
                    ThingClassification::Appearing,
                ][*c];
                m.add_thimac(parent, NAMES[*n], class).map(|_| ())
            }
            Op::Stage(o, k, d, l) if !thimacs.is_empty() => {
                let kind = ActionKind::ALL[*k];
                let dir = (kind == ActionKind::Transfer).then(|| {
                    [
                        TransferDirection::In,
                        TransferDirection::Out,
                        TransferDirection::Both,
                    ][*d]
                });
                let label = l.then(|| format!("s.{i}"));
                m.add_stage(thimacs[o % thimacs.len()], kind, dir, label.as_deref())
                    .map(|_| ())
            }
            Op::Arc(f, t, trigger, g) if !stages.is_empty() => {
                let kind = if *trigger {
                    ArcKind::Trigger
                } else {
                    ArcKind::Flow
                };
                let guard = g.as_deref().filter(|_| *trigger);
                m.add_arc(
                    kind,
                    stages[f % stages.len()],
                    stages[t % stages.len()],
                    guard,
                )
                .map(|_| ())
            }
            // joins the notation can express: fresh unguarded triggers into the bar
            Op::Join(a, b, o) if stages.len() >= 2 && a % stages.len() != b % stages.len() => {
                let out = stages[o % stages.len()];
                let ins = [stages[a % stages.len()], stages[b % stages.len()]]
                    .map(|s| m.add_trigger(s, out, None).unwrap());
                m.add_join(ins, out).map(|_| ())
            }
            Op::Memory(s, n) if !stages.is_empty() => m
                .attach_memory(stages[s % stages.len()], NAMES[*n])
                .map(|_| ()),
            _ => Ok(()),
        };
    }
    m
}

#[derive(Debug, Clone)]
struct RawEvent {
    region: Vec<usize>,
    description: String,
    duration: Option<u64>,
    extended: bool,
    entity: bool,
    measure: Option<String>,
}

fn raw_event() -> impl Strategy<Value = RawEvent> {
    (
        proptest::collection::vec(0..30usize, 1..4),
        text(),
        proptest::option::of(1..20u64),
        any::<bool>(),
        any::<bool>(),
        proptest::option::of(text()),
    )
        .prop_map(
            |(region, description, duration, extended, entity, measure)| RawEvent {
                region,
                description,
                duration,
                extended,
                entity,
                measure,
            },
        )
}

fn decls(
    m: &StaticModel,
    raw: &[RawEvent],
    chron: &[(usize, usize, Option<String>, bool)],
) -> DynamicDecls {
    let stages: Vec<StageId> = m.stages.keys().copied().collect();
    let mut d = DynamicDecls::default();
    if stages.is_empty() {
        return d;
    }
    for (i, r) in raw.iter().enumerate() {
        let mut region: Vec<String> = r
            .region
            .iter()
            .map(|s| m.stage_ref(stages[s % stages.len()]))
            .collect();
        region.dedup();
        d.events.push(EventDecl {
            name: format!("E{}", i + 1),
            description: r.description.clone(),
            region,
            duration: r.duration,
            extended: r.extended || r.entity,
            kind: if r.entity {
                EventKind::EntityLike
            } else {
                EventKind::ProcessLike
            },
            instantaneous: false,
            measure: r.measure.clone(),
        });
    }
    let n = raw.len();
    if n >= 2 {
        d.negatives.push(NegativeDecl {
            name: "R1".into(),
            paired: "E1".into(),
        });
    }
    for (a, b, g, join) in chron {
        let (a, b) = (a % n + 1, b % n + 1);
        if *join && n >= 3 {
            d.chronology.push(ChronDecl::Join {
                inputs: vec![
                    JoinInputDecl {
                        event: format!("E{a}"),
                        optional: false,
                    },
                    JoinInputDecl {
                        event: format!("E{b}"),
                        optional: g.is_some(),
                    },
                ],
                output: format!("E{}", (a.max(b)) % n + 1),
            });
        } else {
            d.chronology.push(ChronDecl::Edge {
                from: format!("E{a}"),
                to: format!("E{b}"),
                guard: g.clone(),
            });
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn print_then_parse_is_identity(
        ops in proptest::collection::vec(op(), 0..50),
        raw in proptest::collection::vec(raw_event(), 1..5),
        chron in proptest::collection::vec((0..9usize, 0..9usize, proptest::option::of(text()), any::<bool>()), 0..6),
    ) {
        let m = build(&ops);
        let d = decls(&m, &raw, &chron);
        let printed = print(&m, &d);
        let back = parse(&SourceFile::new("gen", printed.clone()));
        let (m2, d2) = match back {
            Ok(x) => x,
            Err(e) => return Err(TestCaseError::fail(format!("{e:?}\n{printed}"))),
        };
        // ids follow print order, so compare up to renumbering
        if let Err(e) = common::path_isomorphic(&m, &m2) {
            return Err(TestCaseError::fail(format!("{e}\n{printed}")));
        }
        let paths = |m: &StaticModel| {
            let mut v: Vec<_> = m.thimacs.keys().map(|t| (m.thimac_path(*t).join("."), m.thimacs[t].is_memory)).collect();
            v.sort();
            v
        };
        prop_assert_eq!(paths(&m2), paths(&m));
        prop_assert_eq!(&d2, &d, "\n{}", printed);
        prop_assert_eq!(print(&m2, &d2), printed.clone());
        let again = parse(&SourceFile::new("gen", printed)).unwrap();
        prop_assert!(again == (m2, d2), "second parse is not a fixpoint");
    }

    #[test]
    fn garbage_never_panics(s in "[a-z@{}();.>\" \n-]{0,80}") {
        let _ = parse(&SourceFile::new("junk", s));
    }
}
