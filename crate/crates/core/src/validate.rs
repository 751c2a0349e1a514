//! Static well-formedness: the flow grammar, join bars, event regions and
//! negative pairing.

use std::collections::BTreeSet;

use crate::diag::{codes, Diagnostic, Diagnostics};
use crate::dsl::{ChronDecl, DynamicDecls};
use crate::model::{
    ActionKind, ArcKind, Stage, StageId, StaticModel, ThingClassification, TransferDirection,
};

/// Whether a pair is judged inside one thimac or across two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    SameThimac,
    CrossThimac,
}

/// One stage role in the adjacency table; `None` direction means "not a
/// transfer".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Role(pub ActionKind, pub Option<TransferDirection>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjacencyRule {
    pub from: Role,
    pub to: Role,
    pub scope: Scope,
}

const fn rule(from: Role, to: Role, scope: Scope) -> AdjacencyRule {
    AdjacencyRule { from, to, scope }
}

const CREATE: Role = Role(ActionKind::Create, None);
const PROCESS: Role = Role(ActionKind::Process, None);
const RELEASE: Role = Role(ActionKind::Release, None);
const RECEIVE: Role = Role(ActionKind::Receive, None);
const TRANSFER_IN: Role = Role(ActionKind::Transfer, Some(TransferDirection::In));
const TRANSFER_OUT: Role = Role(ActionKind::Transfer, Some(TransferDirection::Out));

/// Legal flow pairs. Memory attachments are handled separately in
/// [`check_adjacency`]; triggers are unrestricted.
pub const ADJACENCY: &[AdjacencyRule] = &[
    rule(TRANSFER_IN, RECEIVE, Scope::SameThimac),
    rule(RECEIVE, PROCESS, Scope::SameThimac),
    rule(RECEIVE, RELEASE, Scope::SameThimac),
    rule(CREATE, PROCESS, Scope::SameThimac),
    rule(CREATE, RELEASE, Scope::SameThimac),
    rule(PROCESS, RELEASE, Scope::SameThimac),
    rule(PROCESS, CREATE, Scope::SameThimac),
    rule(RELEASE, TRANSFER_OUT, Scope::SameThimac),
    rule(TRANSFER_OUT, TRANSFER_IN, Scope::CrossThimac),
];

fn plays(stage: &Stage, role: Role) -> bool {
    if stage.kind != role.0 {
        return false;
    }
    match (stage.direction, role.1) {
        (_, None) => true,
        (Some(TransferDirection::Both), Some(_)) => true,
        (Some(d), Some(r)) => d == r,
        (None, Some(_)) => false,
    }
}

fn is_memory_entry(stage: &Stage) -> bool {
    stage.kind == ActionKind::Receive
        || (stage.kind == ActionKind::Transfer
            && stage
                .direction
                .is_some_and(TransferDirection::accepts_input))
}

fn is_memory_exit(stage: &Stage) -> bool {
    stage.kind == ActionKind::Release
        || (stage.kind == ActionKind::Transfer
            && stage.direction.is_some_and(TransferDirection::emits_output))
}

/// True iff a flow arc `from -> to` is allowed by the flow grammar.
pub fn check_adjacency(model: &StaticModel, from: StageId, to: StageId) -> bool {
    let (Some(f), Some(t)) = (model.stage(from), model.stage(to)) else {
        return false;
    };
    let scope = if f.owner == t.owner {
        Scope::SameThimac
    } else {
        Scope::CrossThimac
    };
    if ADJACENCY
        .iter()
        .any(|r| r.scope == scope && plays(f, r.from) && plays(t, r.to))
    {
        return true;
    }
    // host stage into an attached memory, memory back out to its host
    let host_of = |owner| {
        let thimac = model.thimac(owner)?;
        if thimac.is_memory {
            thimac.parent
        } else {
            None
        }
    };
    if host_of(t.owner) == Some(f.owner) && is_memory_entry(t) {
        return true;
    }
    host_of(f.owner) == Some(t.owner) && is_memory_exit(f)
}

/// Runs every static check and returns the collected diagnostics.
pub fn validate(model: &StaticModel, decls: &DynamicDecls) -> Diagnostics {
    let mut out = Diagnostics::new();

    for arc in model.arcs.values() {
        if arc.kind == ArcKind::Flow && !check_adjacency(model, arc.from, arc.to) {
            let (f, t) = (&model.stages[&arc.from], &model.stages[&arc.to]);
            out.push(Diagnostic::error(
                codes::E_ADJ,
                format!(
                    "illegal flow {} ({}) -> {} ({})",
                    model.stage_ref(arc.from),
                    role_name(f),
                    model.stage_ref(arc.to),
                    role_name(t)
                ),
            ));
        }
    }

    for join in model.joins.values() {
        if join.inputs.len() < 2 {
            out.push(Diagnostic::error(
                codes::E_JOIN_ARITY,
                format!(
                    "join into {} has {} input(s); at least 2 are required",
                    model.stage_ref(join.output),
                    join.inputs.len()
                ),
            ));
        }
        for a in &join.inputs {
            let arc = &model.arcs[a];
            if arc.kind != ArcKind::Trigger || arc.to != join.output {
                out.push(Diagnostic::error(
                    codes::E_JOIN_SHAPE,
                    format!(
                        "join input {} -> {} must be a trigger into {}",
                        model.stage_ref(arc.from),
                        model.stage_ref(arc.to),
                        model.stage_ref(join.output)
                    ),
                ));
            }
        }
    }

    for event in &decls.events {
        if event.region.is_empty() {
            out.push(Diagnostic::error(
                codes::E_REGION_EMPTY,
                format!("event {} has an empty region", event.name),
            ));
            continue;
        }
        let mut nodes = BTreeSet::new();
        for r in &event.region {
            match model.resolve_stage_ref(r) {
                Ok(id) => {
                    nodes.insert(id);
                }
                Err(msg) => out.push(Diagnostic::error(
                    codes::E_UNKNOWN_REF,
                    format!("event {}: {msg}", event.name),
                )),
            }
        }
        for s in &nodes {
            let owner = &model.thimacs[&model.stages[s].owner];
            if owner.classification == ThingClassification::Appearing {
                out.push(Diagnostic::error(
                    codes::E_APPEARING_IN_REGION,
                    format!(
                        "event {} includes {} of appearing thimac {}; appearing things cannot exist in time",
                        event.name,
                        model.stage_ref(*s),
                        owner.name
                    ),
                ));
            }
        }
        if let Ok(region) = model.induced_subdiagram(nodes) {
            if !region.is_connected(model) {
                out.push(Diagnostic::warning(
                    codes::W_REGION_DISCONNECTED,
                    format!("region of event {} is not connected", event.name),
                ));
            }
        }
    }

    let events: BTreeSet<&str> = decls.events.iter().map(|e| e.name.as_str()).collect();
    let negatives: BTreeSet<&str> = decls.negatives.iter().map(|n| n.name.as_str()).collect();
    for n in &decls.negatives {
        if !events.contains(n.paired.as_str()) {
            out.push(Diagnostic::error(
                codes::E_NEG_UNPAIRED,
                format!("negative {} pairs with unknown event {}", n.name, n.paired),
            ));
        }
    }

    let mut unknown = |name: &str, as_target: bool| {
        let ok = events.contains(name) || (as_target && negatives.contains(name));
        if !ok {
            out.push(Diagnostic::error(
                codes::E_UNKNOWN_EVENT,
                format!("chronology refers to unknown event {name}"),
            ));
        }
    };
    for c in &decls.chronology {
        match c {
            ChronDecl::Edge { from, to, .. } => {
                unknown(from, false);
                unknown(to, true);
            }
            ChronDecl::Join { inputs, output } => {
                for i in inputs {
                    unknown(&i.event, false);
                }
                unknown(output, false);
            }
        }
    }
    out
}

fn role_name(stage: &Stage) -> String {
    match stage.direction {
        Some(d) => format!("{}({})", stage.kind, d.keyword()),
        None => stage.kind.to_string(),
    }
}
