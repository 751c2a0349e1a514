//! DOT output and the transfer-chain simplification.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::dynamics::{ChronologyGraph, DynamicModel};
use crate::model::{
    ActionKind, ArcId, ArcKind, JoinId, StageId, StaticModel, ThimacId, TransferDirection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum View {
    #[default]
    Static,
    Dynamic,
    Chronology,
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(View::Static),
            "dynamic" => Ok(View::Dynamic),
            "chronology" => Ok(View::Chronology),
            other => Err(format!("unknown view `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DotTarget<'a> {
    Static(&'a StaticModel),
    Dynamic(&'a DynamicModel),
    Chronology(&'a ChronologyGraph),
}

/// Renders `target` as a DOT digraph. A view the target cannot supply
/// falls back to the richest one it can.
pub fn to_dot(target: DotTarget<'_>, view: View) -> String {
    let mut body = String::new();
    match (target, view) {
        (DotTarget::Static(m), _) => static_body(m, &mut body),
        (DotTarget::Dynamic(d), View::Static) => static_body(&d.model, &mut body),
        (DotTarget::Dynamic(d), View::Dynamic) => dynamic_body(d, &mut body),
        (DotTarget::Dynamic(d), View::Chronology) => chronology_body(&d.chronology, &mut body),
        (DotTarget::Chronology(c), _) => chronology_body(c, &mut body),
    }
    if body.is_empty() {
        "digraph tm {}\n".to_string()
    } else {
        format!("digraph tm {{\n  rankdir=LR;\n{body}}}\n")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn stage_kind_text(model: &StaticModel, id: StageId) -> String {
    let s = &model.stages[&id];
    match s.direction {
        Some(d) => format!("{} {}", s.kind, d.keyword()),
        None => s.kind.to_string(),
    }
}

fn stage_node(model: &StaticModel, id: StageId, name: &str, indent: &str, out: &mut String) {
    let s = &model.stages[&id];
    let kind = stage_kind_text(model, id);
    let label = s.label.clone().unwrap_or_else(|| kind.clone());
    writeln!(
        out,
        "{indent}{name} [shape=circle, label={}, tooltip={}];",
        quote(&label),
        quote(&kind)
    )
    .unwrap();
}

fn static_body(model: &StaticModel, out: &mut String) {
    for root in &model.roots {
        thimac_cluster(model, *root, 1, out);
    }
    arcs_and_joins(model, "", |_| true, out);
}

fn thimac_cluster(model: &StaticModel, id: ThimacId, depth: usize, out: &mut String) {
    let t = &model.thimacs[&id];
    let pad = "  ".repeat(depth);
    writeln!(out, "{pad}subgraph cluster_t{} {{", id.0).unwrap();
    writeln!(out, "{pad}  label={};", quote(&t.name)).unwrap();
    if t.is_memory {
        writeln!(out, "{pad}  style=rounded;").unwrap();
        writeln!(
            out,
            "{pad}  m{} [shape=cylinder, label={}];",
            id.0,
            quote(&t.name)
        )
        .unwrap();
    }
    for s in &t.stages {
        stage_node(model, *s, &format!("s{}", s.0), &format!("{pad}  "), out);
    }
    for c in &t.children {
        thimac_cluster(model, *c, depth + 1, out);
    }
    writeln!(out, "{pad}}}").unwrap();
    if let (true, Some(on)) = (t.is_memory, t.memory_of) {
        if model.stages.contains_key(&on) {
            writeln!(
                out,
                "{pad}s{} -> m{} [style=dotted, arrowhead=none];",
                on.0, id.0
            )
            .unwrap();
        }
    }
}

/// Arcs between stages accepted by `keep`, node names prefixed by `prefix`.
fn arcs_and_joins(
    model: &StaticModel,
    prefix: &str,
    keep: impl Fn(StageId) -> bool,
    out: &mut String,
) {
    let mut joined: BTreeSet<ArcId> = BTreeSet::new();
    for j in model.joins.values() {
        if !keep(j.output) {
            continue;
        }
        joined.extend(j.inputs.iter().copied());
    }
    for a in model.arcs.values() {
        if !keep(a.from) || !keep(a.to) || joined.contains(&a.id) {
            continue;
        }
        let mut attrs = Vec::new();
        if a.kind == ArcKind::Trigger {
            attrs.push("style=dashed".to_string());
        }
        if let Some(g) = &a.guard {
            attrs.push(format!("label={}", quote(g)));
        }
        let attrs = if attrs.is_empty() {
            String::new()
        } else {
            format!(" [{}]", attrs.join(", "))
        };
        writeln!(
            out,
            "  {prefix}s{} -> {prefix}s{}{attrs};",
            a.from.0, a.to.0
        )
        .unwrap();
    }
    for j in model.joins.values() {
        if !keep(j.output) {
            continue;
        }
        let inputs: Vec<ArcId> = j
            .inputs
            .iter()
            .copied()
            .filter(|a| keep(model.arcs[a].from))
            .collect();
        if inputs.is_empty() {
            continue;
        }
        writeln!(
            out,
            "  {prefix}j{} [shape=box, style=filled, fillcolor=black, label=\"\", height=0.08, width=0.6];",
            j.id.0
        )
        .unwrap();
        for a in inputs {
            let arc = &model.arcs[&a];
            let guard = arc
                .guard
                .as_ref()
                .map(|g| format!(", label={}", quote(g)))
                .unwrap_or_default();
            writeln!(
                out,
                "  {prefix}s{} -> {prefix}j{} [style=dashed{guard}];",
                arc.from.0, j.id.0
            )
            .unwrap();
        }
        writeln!(
            out,
            "  {prefix}j{} -> {prefix}s{} [style=dashed];",
            j.id.0, j.output.0
        )
        .unwrap();
    }
}

fn dynamic_body(dynamic: &DynamicModel, out: &mut String) {
    let model = &*dynamic.model;
    for (i, e) in dynamic.events.iter().enumerate() {
        let prefix = format!("e{i}_");
        writeln!(out, "  subgraph cluster_e{i} {{").unwrap();
        let title = format!("{}: {}", e.name, e.description);
        writeln!(out, "    label={};", quote(&title)).unwrap();
        writeln!(out, "    style=filled;").unwrap();
        writeln!(out, "    fillcolor=\"#eeeeee\";").unwrap();
        for s in &e.region.nodes {
            stage_node(model, *s, &format!("{prefix}s{}", s.0), "    ", out);
        }
        writeln!(out, "  }}").unwrap();
        let region = &e.region;
        let mut arcs = String::new();
        // only arcs of the region itself
        let mut sub = model.clone();
        sub.arcs.retain(|id, _| region.arcs.contains(id));
        for j in sub.joins.values_mut() {
            j.inputs.retain(|a| region.arcs.contains(a));
        }
        arcs_and_joins(&sub, &prefix, |s| region.contains(s), &mut arcs);
        out.push_str(&arcs);
    }
}

fn chronology_body(chron: &ChronologyGraph, out: &mut String) {
    for n in &chron.nodes {
        writeln!(
            out,
            "  {} [shape=box, style=filled, fillcolor=\"#dddddd\"];",
            quote(n)
        )
        .unwrap();
    }
    for n in &chron.negatives {
        writeln!(out, "  {} [shape=octagon, style=dashed];", quote(n)).unwrap();
    }
    for e in &chron.edges {
        let guard = e
            .guard
            .as_ref()
            .map(|g| format!(" [label={}]", quote(g)))
            .unwrap_or_default();
        writeln!(out, "  {} -> {}{guard};", quote(&e.from), quote(&e.to)).unwrap();
    }
    for (i, j) in chron.joins.iter().enumerate() {
        writeln!(
            out,
            "  cj{i} [shape=box, style=filled, fillcolor=black, label=\"\", height=0.08, width=0.6];"
        )
        .unwrap();
        for (input, optional) in &j.inputs {
            let style = if *optional { " [style=dotted]" } else { "" };
            writeln!(out, "  {} -> cj{i}{style};", quote(input)).unwrap();
        }
        writeln!(out, "  cj{i} -> {};", quote(&j.output)).unwrap();
    }
}

/// A collapsed Release, Transfer out, Transfer in, Receive chain drawn as a
/// single directed arc between the stages it connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub from: StageId,
    pub to: StageId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplifiedModel {
    pub model: StaticModel,
    pub links: Vec<Link>,
}

fn is_dir(model: &StaticModel, s: StageId, out: bool) -> bool {
    let st = &model.stages[&s];
    st.kind == ActionKind::Transfer
        && st.direction.is_some_and(|d: TransferDirection| {
            if out {
                d.emits_output()
            } else {
                d.accepts_input()
            }
        })
}

/// Stages on some full Release, Transfer out, Transfer in, Receive chain of
/// flow arcs.
fn chain_stages(model: &StaticModel) -> BTreeSet<StageId> {
    let mut flows: BTreeMap<StageId, Vec<StageId>> = BTreeMap::new();
    for a in model.arcs.values() {
        if a.kind == ArcKind::Flow {
            flows.entry(a.from).or_default().push(a.to);
        }
    }
    let next = |s: StageId| flows.get(&s).cloned().unwrap_or_default();
    let mut out = BTreeSet::new();
    for (id, st) in &model.stages {
        if st.kind != ActionKind::Release {
            continue;
        }
        for o in next(*id).into_iter().filter(|s| is_dir(model, *s, true)) {
            for i in next(o).into_iter().filter(|s| is_dir(model, *s, false)) {
                for r in next(i)
                    .into_iter()
                    .filter(|s| model.stages[s].kind == ActionKind::Receive)
                {
                    out.extend([*id, o, i, r]);
                }
            }
        }
    }
    out
}

/// Removes every stage on a full transfer chain. Pure flow paths through
/// removed stages become links; paths crossing a trigger become triggers,
/// keeping the guard and the join membership of the path's last arc.
pub fn simplify(model: &StaticModel) -> SimplifiedModel {
    let removed = chain_stages(model);
    let mut out = model.clone();
    if removed.is_empty() {
        return SimplifiedModel {
            model: out,
            links: Vec::new(),
        };
    }
    let mut outgoing: BTreeMap<StageId, Vec<ArcId>> = BTreeMap::new();
    for a in model.arcs.values() {
        outgoing.entry(a.from).or_default().push(a.id);
    }
    let mut links = Vec::new();
    let mut triggers: Vec<(StageId, StageId, Option<String>, Option<JoinId>)> = Vec::new();
    for &u in model.stages.keys() {
        if removed.contains(&u) {
            continue;
        }
        // (stage, crossed a trigger, guard, last arc)
        let mut queue: VecDeque<(StageId, bool, Option<String>, ArcId)> = VecDeque::new();
        let mut seen = BTreeSet::new();
        for a in outgoing.get(&u).into_iter().flatten() {
            let arc = &model.arcs[a];
            if removed.contains(&arc.to) {
                queue.push_back((arc.to, arc.kind == ArcKind::Trigger, arc.guard.clone(), *a));
            }
        }
        while let Some((s, trig, guard, last)) = queue.pop_front() {
            if !seen.insert((s, trig, guard.clone(), last)) {
                continue;
            }
            if !removed.contains(&s) {
                if trig {
                    let entry = (u, s, guard, model.join_of(last));
                    if !triggers.contains(&entry) {
                        triggers.push(entry);
                    }
                } else {
                    let link = Link { from: u, to: s };
                    if !links.contains(&link) {
                        links.push(link);
                    }
                }
                continue;
            }
            for a in outgoing.get(&s).into_iter().flatten() {
                let arc = &model.arcs[a];
                let g = match (&guard, &arc.guard) {
                    (Some(g), Some(h)) if g != h => Some(format!("{g} and {h}")),
                    (Some(g), _) => Some(g.clone()),
                    (None, h) => h.clone(),
                };
                queue.push_back((arc.to, trig || arc.kind == ArcKind::Trigger, g, *a));
            }
        }
    }
    for (from, to, guard, join) in triggers {
        let exists = out.arcs.values().any(|a| {
            a.kind == ArcKind::Trigger && a.from == from && a.to == to && a.guard == guard
        });
        if exists && join.is_none() {
            continue;
        }
        let id = out
            .add_trigger(from, to, guard.as_deref())
            .expect("stages exist");
        if let Some(j) = join {
            if let Some(bar) = out.joins.get_mut(&j) {
                if bar.output == to {
                    bar.inputs.insert(id);
                }
            }
        }
    }
    for s in &removed {
        out.remove_stage(*s).expect("stage exists");
    }
    out.joins.retain(|_, j| j.inputs.len() >= 2);
    SimplifiedModel { model: out, links }
}

/// Re-expands each link into a fresh Release and Transfer out in the source
/// owner and a Transfer in and Receive in the target owner.
pub fn desugar(simplified: &SimplifiedModel) -> StaticModel {
    let mut m = simplified.model.clone();
    for link in &simplified.links {
        let src = m.stages[&link.from].owner;
        let dst = m.stages[&link.to].owner;
        let rel = m.add_stage(src, ActionKind::Release, None, None).unwrap();
        let out = m
            .add_stage(
                src,
                ActionKind::Transfer,
                Some(TransferDirection::Out),
                None,
            )
            .unwrap();
        let inn = m
            .add_stage(dst, ActionKind::Transfer, Some(TransferDirection::In), None)
            .unwrap();
        let rcv = m.add_stage(dst, ActionKind::Receive, None, None).unwrap();
        for (a, b) in [
            (link.from, rel),
            (rel, out),
            (out, inn),
            (inn, rcv),
            (rcv, link.to),
        ] {
            m.add_flow(a, b).unwrap();
        }
    }
    m
}

/// Pairs `(a, b)` of Create or Process stages with `b` reachable from `a`
/// along arcs, through any intermediate stages. Stages are named by their
/// canonical reference so models with different ids compare.
pub fn cp_reachability(model: &StaticModel) -> BTreeSet<(String, String)> {
    let mut succ: BTreeMap<StageId, Vec<StageId>> = BTreeMap::new();
    for a in model.arcs.values() {
        succ.entry(a.from).or_default().push(a.to);
    }
    let is_cp = |s: &StageId| {
        matches!(
            model.stages[s].kind,
            ActionKind::Create | ActionKind::Process
        )
    };
    let mut out = BTreeSet::new();
    for start in model.stages.keys().filter(|s| is_cp(s)) {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<StageId> = succ.get(start).cloned().unwrap_or_default();
        while let Some(s) = stack.pop() {
            if !seen.insert(s) {
                continue;
            }
            if is_cp(&s) {
                out.insert((model.stage_ref(*start), model.stage_ref(s)));
            }
            stack.extend(succ.get(&s).into_iter().flatten().copied());
        }
    }
    out
}
