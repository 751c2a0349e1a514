#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use tmkit::dsl::{parse, DynamicDecls, SourceFile};
use tmkit::dynamics::{compile_dynamic, ChronologyGraph, DynamicModel};
use tmkit::model::{ActionKind, ArcKind, StaticModel, TransferDirection};
use tmkit::sim::Trace;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn load(name: &str) -> (StaticModel, DynamicDecls) {
    parse(&SourceFile::new(name, fixture_text(name))).unwrap()
}

pub fn dynamic(name: &str) -> DynamicModel {
    let (m, d) = load(name);
    compile_dynamic(Arc::new(m), &d).unwrap()
}

pub const TM_FIXTURES: [&str; 4] = ["carsale.tm", "watch.tm", "walking.tm", "hammer.tm"];

/// Events an instance must actualize under fixed guard values, worked out
/// straight from the declarations: forward closure from the events nobody
/// precedes, where a join needs every mandatory input.
pub fn expected_events(chron: &ChronologyGraph, guards: &BTreeMap<&str, bool>) -> BTreeSet<String> {
    let has_pred: BTreeSet<&str> = chron
        .edges
        .iter()
        .map(|e| e.to.as_str())
        .chain(chron.joins.iter().map(|j| j.output.as_str()))
        .collect();
    let mut got: BTreeSet<String> = chron
        .nodes
        .iter()
        .filter(|n| !has_pred.contains(n.as_str()))
        .cloned()
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for e in &chron.edges {
            let open = e.guard.as_deref().is_none_or(|g| guards[g]);
            if open && got.contains(&e.from) && got.insert(e.to.clone()) {
                changed = true;
            }
        }
        for j in &chron.joins {
            if j.inputs.iter().all(|(i, opt)| *opt || got.contains(i))
                && got.insert(j.output.clone())
            {
                changed = true;
            }
        }
    }
    got
}

/// Every total order of `events` that respects `before` pairs, by brute
/// force over permutations built one position at a time.
pub fn linearizations(
    events: &BTreeSet<String>,
    before: &BTreeSet<(String, String)>,
) -> Vec<Vec<String>> {
    fn go(
        left: &mut BTreeSet<String>,
        before: &BTreeSet<(String, String)>,
        prefix: &mut Vec<String>,
        out: &mut Vec<Vec<String>>,
    ) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        let candidates: Vec<String> = left.iter().cloned().collect();
        for c in candidates {
            let blocked = before.iter().any(|(a, b)| b == &c && left.contains(a));
            if blocked {
                continue;
            }
            left.remove(&c);
            prefix.push(c.clone());
            go(left, before, prefix, out);
            prefix.pop();
            left.insert(c);
        }
    }
    let mut out = Vec::new();
    go(&mut events.clone(), before, &mut Vec::new(), &mut out);
    out
}

/// Precedence pairs among `events` implied by open edges and joins.
pub fn precedence(
    chron: &ChronologyGraph,
    guards: &BTreeMap<&str, bool>,
    events: &BTreeSet<String>,
) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for e in &chron.edges {
        let open = e.guard.as_deref().is_none_or(|g| guards[g]);
        if open && events.contains(&e.from) && events.contains(&e.to) {
            out.insert((e.from.clone(), e.to.clone()));
        }
    }
    for j in &chron.joins {
        for (i, _) in &j.inputs {
            if events.contains(i) && events.contains(&j.output) {
                out.insert((i.clone(), j.output.clone()));
            }
        }
    }
    out
}

/// True when some linearization agrees with the trace: strictly earlier
/// starts must come first, equal starts may go either way.
pub fn trace_is_linearization(trace: &Trace, lins: &[Vec<String>]) -> bool {
    let start: BTreeMap<&str, u64> = trace
        .positives()
        .map(|o| (o.name.as_str(), o.start))
        .collect();
    lins.iter().any(|lin| {
        lin.len() == start.len()
            && lin
                .windows(2)
                .all(|w| start[w[0].as_str()] <= start[w[1].as_str()])
    })
}

/// Violations of the exclusivity rule: a region actualized while its
/// negative marks it, actualized after the mark, or actualized twice at once
/// within one instance.
pub fn lupascian_violations(dynamic: &DynamicModel, trace: &Trace) -> Vec<String> {
    let mut out = Vec::new();
    let paired: BTreeMap<&str, &str> = dynamic
        .negatives
        .iter()
        .map(|n| (n.name.as_str(), n.paired.as_str()))
        .collect();
    let occ = &trace.occurrences;
    for neg in occ.iter().filter(|o| o.negative) {
        let region = paired[neg.name.as_str()];
        for pos in occ
            .iter()
            .filter(|o| !o.negative && o.instance == neg.instance && o.name == region)
        {
            if pos.start <= neg.start && neg.start < pos.end {
                out.push(format!(
                    "{region} active at tick {} of {}",
                    neg.start, neg.name
                ));
            }
            if pos.start >= neg.start {
                out.push(format!(
                    "{region} actualized at {} after {}",
                    pos.start, neg.name
                ));
            }
        }
    }
    let positives: Vec<_> = occ.iter().filter(|o| !o.negative).collect();
    for (i, a) in positives.iter().enumerate() {
        for b in &positives[i + 1..] {
            if a.instance == b.instance && a.name == b.name && a.start < b.end && b.start < a.end {
                out.push(format!(
                    "{} overlaps itself at {}..{}",
                    a.name, a.start, a.end
                ));
            }
        }
    }
    out
}

/// Reachability closure by Warshall over the full stage set, restricted to
/// Create and Process stages and keyed by canonical references.
pub fn warshall_cp(model: &StaticModel) -> BTreeSet<(String, String)> {
    let ids: Vec<_> = model.stages.keys().copied().collect();
    let index: BTreeMap<_, _> = ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let n = ids.len();
    let mut m = vec![vec![false; n]; n];
    for a in model.arcs.values() {
        m[index[&a.from]][index[&a.to]] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if m[i][k] {
                let row = m[k].clone();
                for (j, reach) in row.into_iter().enumerate() {
                    if reach {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
    let cp = |i: usize| {
        matches!(
            model.stages[&ids[i]].kind,
            ActionKind::Create | ActionKind::Process
        )
    };
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if m[i][j] && cp(i) && cp(j) {
                out.insert((model.stage_ref(ids[i]), model.stage_ref(ids[j])));
            }
        }
    }
    out
}

/// Flow arcs from a Transfer(Out) to a Transfer(In) whose owners sit under
/// different root thimacs.
pub fn cross_root_transfers(model: &StaticModel) -> usize {
    let root = |t| {
        let mut cur = t;
        while let Some(p) = model.thimacs[&cur].parent {
            cur = p;
        }
        cur
    };
    model
        .arcs
        .values()
        .filter(|a| a.kind == ArcKind::Flow)
        .filter(|a| {
            let (f, t) = (&model.stages[&a.from], &model.stages[&a.to]);
            f.kind == ActionKind::Transfer
                && t.kind == ActionKind::Transfer
                && f.direction == Some(TransferDirection::Out)
                && t.direction == Some(TransferDirection::In)
                && root(f.owner) != root(t.owner)
        })
        .count()
}

/// Flow arcs from a Transfer(Out) to a Transfer(In) of a different thimac.
pub fn cross_thimac_transfers(model: &StaticModel) -> usize {
    model
        .arcs
        .values()
        .filter(|a| a.kind == ArcKind::Flow)
        .filter(|a| {
            let (f, t) = (&model.stages[&a.from], &model.stages[&a.to]);
            f.direction == Some(TransferDirection::Out)
                && t.direction == Some(TransferDirection::In)
                && f.owner != t.owner
        })
        .count()
}

/// Checks that matching stages by owner path, kind and position is an
/// isomorphism between two models: a bijection on stages that carries arcs
/// onto arcs and joins onto joins.
pub fn path_isomorphic(a: &StaticModel, b: &StaticModel) -> Result<(), String> {
    let key = |m: &StaticModel, s| {
        let st = &m.stages[&s];
        (m.stage_path(s), st.direction)
    };
    let map_a: BTreeMap<_, _> = a.stages.keys().map(|s| (key(a, *s), *s)).collect();
    let map_b: BTreeMap<_, _> = b.stages.keys().map(|s| (key(b, *s), *s)).collect();
    if map_a.len() != a.stages.len() || map_b.len() != b.stages.len() {
        return Err("stage keys are not unique".into());
    }
    if map_a.keys().collect::<Vec<_>>() != map_b.keys().collect::<Vec<_>>() {
        return Err("stage sets differ".into());
    }
    let f: BTreeMap<_, _> = map_a.iter().map(|(k, s)| (*s, map_b[k])).collect();
    let arcs = |m: &StaticModel, g: &dyn Fn(tmkit::model::StageId) -> tmkit::model::StageId| {
        let mut v: Vec<_> = m
            .arcs
            .values()
            .map(|x| (g(x.from), g(x.to), x.kind, x.guard.clone()))
            .collect();
        v.sort();
        v
    };
    if arcs(a, &|s| f[&s]) != arcs(b, &|s| s) {
        return Err("arcs differ under the stage bijection".into());
    }
    let joins = |m: &StaticModel, g: &dyn Fn(tmkit::model::StageId) -> tmkit::model::StageId| {
        let mut v: Vec<_> = m
            .joins
            .values()
            .map(|j| {
                let mut ins: Vec<_> = j
                    .inputs
                    .iter()
                    .map(|x| (g(m.arcs[x].from), m.arcs[x].guard.clone()))
                    .collect();
                ins.sort();
                (g(j.output), ins)
            })
            .collect();
        v.sort();
        v
    };
    if joins(a, &|s| f[&s]) != joins(b, &|s| s) {
        return Err("joins differ under the stage bijection".into());
    }
    Ok(())
}

/// Canonical participant key: lower case letters and digits, a trailing
/// plural `s` dropped.
pub fn participant_key(name: &str) -> String {
    let k: String = name
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    k.strip_suffix('s').map(str::to_string).unwrap_or(k)
}
