//! Compiles event declarations against a static model: each event binds a
//! region of the static model to time, each negative event shares the region
//! of its pair, and the chronology orders the events.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::diag::{codes, Diagnostic, Diagnostics};
use crate::dsl::{ChronDecl, DynamicDecls, EventDecl, EventKind};
use crate::model::{ModelError, Region, StaticModel};
use crate::validate::validate;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("unknown stage label `{0}`")]
    UnknownLabel(String),
    #[error("empty region")]
    EmptyRegion,
    #[error("chronology refers to unknown event `{0}`")]
    UnknownEvent(String),
    #[error("chronology cycle without a guarded edge through {0}")]
    IntraInstanceCycle(String),
    #[error("model has errors:\n{0}")]
    Invalid(Diagnostics),
}

impl From<DynamicsError> for Diagnostics {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Invalid(d) => d,
            DynamicsError::UnknownLabel(_) => {
                Diagnostic::error(codes::E_UNKNOWN_REF, e.to_string()).into()
            }
            DynamicsError::EmptyRegion => {
                Diagnostic::error(codes::E_REGION_EMPTY, e.to_string()).into()
            }
            DynamicsError::UnknownEvent(_) => {
                Diagnostic::error(codes::E_UNKNOWN_EVENT, e.to_string()).into()
            }
            DynamicsError::IntraInstanceCycle(_) => {
                Diagnostic::error(codes::E_CHRON_CYCLE, e.to_string()).into()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub name: String,
    pub description: String,
    pub region: Arc<Region>,
    /// Ticks the region stays actualized, at least 1.
    pub duration: u64,
    /// Extended events stay actualized until their instance completes.
    pub extended: bool,
    pub instantaneous: bool,
    pub measure: Option<String>,
    pub kind: EventKind,
}

/// The timeless counterpart of an event: same region, no time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeEvent {
    pub name: String,
    pub paired: String,
    pub region: Arc<Region>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChronEdge {
    pub from: String,
    /// An event or a negative event.
    pub to: String,
    pub guard: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChronJoin {
    /// `(event, optional)`; optional inputs are awaited only while they can
    /// still occur.
    pub inputs: Vec<(String, bool)>,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChronologyGraph {
    pub nodes: Vec<String>,
    pub negatives: Vec<String>,
    pub edges: Vec<ChronEdge>,
    pub joins: Vec<ChronJoin>,
}

impl ChronologyGraph {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.joins.is_empty()
    }

    /// Distinct guard names in first-use order.
    pub fn guards(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.edges
            .iter()
            .filter_map(|e| e.guard.as_deref())
            .filter(|g| seen.insert(*g))
            .collect()
    }

    /// Events with no incoming edge and not produced by a join.
    pub fn start_events(&self) -> Vec<&str> {
        let targets: BTreeSet<&str> = self
            .edges
            .iter()
            .map(|e| e.to.as_str())
            .chain(self.joins.iter().map(|j| j.output.as_str()))
            .collect();
        self.nodes
            .iter()
            .map(String::as_str)
            .filter(|n| !targets.contains(n))
            .collect()
    }

    /// Unguarded successor relation among events, joins included.
    fn unguarded_successors(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            if e.guard.is_none() && self.nodes.contains(&e.to) {
                succ.entry(&e.from).or_default().push(&e.to);
            }
        }
        for j in &self.joins {
            for (i, _) in &j.inputs {
                succ.entry(i).or_default().push(&j.output);
            }
        }
        succ
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicModel {
    pub model: Arc<StaticModel>,
    pub events: Vec<Event>,
    pub negatives: Vec<NegativeEvent>,
    pub chronology: ChronologyGraph,
}

impl DynamicModel {
    pub fn event(&self, name: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn negative(&self, name: &str) -> Option<&NegativeEvent> {
        self.negatives.iter().find(|n| n.name == name)
    }
}

/// The region an event declaration occupies: the subdiagram induced by its
/// resolved stages.
pub fn extract_region(model: &StaticModel, decl: &EventDecl) -> Result<Region, DynamicsError> {
    let mut nodes = BTreeSet::new();
    for r in &decl.region {
        let id = model
            .resolve_stage_ref(r)
            .map_err(|_| DynamicsError::UnknownLabel(r.clone()))?;
        nodes.insert(id);
    }
    model.induced_subdiagram(nodes).map_err(|e| match e {
        ModelError::EmptyRegion => DynamicsError::EmptyRegion,
        other => DynamicsError::UnknownLabel(other.to_string()),
    })
}

/// Validates, binds regions and builds the chronology.
pub fn compile_dynamic(
    model: Arc<StaticModel>,
    decls: &DynamicDecls,
) -> Result<DynamicModel, DynamicsError> {
    let diags = validate(&model, decls);
    if diags.has_errors() {
        return Err(DynamicsError::Invalid(diags));
    }
    let mut events = Vec::with_capacity(decls.events.len());
    for decl in &decls.events {
        let region = Arc::new(extract_region(&model, decl)?);
        events.push(Event {
            name: decl.name.clone(),
            description: decl.description.clone(),
            region,
            duration: decl.duration.unwrap_or(1),
            extended: decl.extended || decl.kind == EventKind::EntityLike,
            instantaneous: decl.instantaneous,
            measure: decl.measure.clone(),
            kind: decl.kind,
        });
    }
    let mut negatives = Vec::with_capacity(decls.negatives.len());
    for n in &decls.negatives {
        let paired = events
            .iter()
            .find(|e| e.name == n.paired)
            .ok_or_else(|| DynamicsError::UnknownEvent(n.paired.clone()))?;
        negatives.push(NegativeEvent {
            name: n.name.clone(),
            paired: n.paired.clone(),
            region: Arc::clone(&paired.region),
        });
    }
    let mut dynamic = DynamicModel {
        model,
        events,
        negatives,
        chronology: ChronologyGraph::default(),
    };
    dynamic.chronology = build_chronology(&dynamic, &decls.chronology)?;
    Ok(dynamic)
}

/// Assembles the guarded precedence graph. Guarded edges may close cycles
/// (they are decided per instance); unguarded edges and joins may not.
pub fn build_chronology(
    dynamic: &DynamicModel,
    decls: &[ChronDecl],
) -> Result<ChronologyGraph, DynamicsError> {
    let is_event = |n: &str| dynamic.event(n).is_some();
    let is_negative = |n: &str| dynamic.negative(n).is_some();
    let mut graph = ChronologyGraph {
        nodes: dynamic.events.iter().map(|e| e.name.clone()).collect(),
        negatives: dynamic.negatives.iter().map(|n| n.name.clone()).collect(),
        ..Default::default()
    };
    for d in decls {
        match d {
            ChronDecl::Edge { from, to, guard } => {
                if !is_event(from) {
                    return Err(DynamicsError::UnknownEvent(from.clone()));
                }
                if !is_event(to) && !is_negative(to) {
                    return Err(DynamicsError::UnknownEvent(to.clone()));
                }
                graph.edges.push(ChronEdge {
                    from: from.clone(),
                    to: to.clone(),
                    guard: guard.clone(),
                });
            }
            ChronDecl::Join { inputs, output } => {
                for name in inputs.iter().map(|i| &i.event).chain([output]) {
                    if !is_event(name) {
                        return Err(DynamicsError::UnknownEvent(name.clone()));
                    }
                }
                graph.joins.push(ChronJoin {
                    inputs: inputs
                        .iter()
                        .map(|i| (i.event.clone(), i.optional))
                        .collect(),
                    output: output.clone(),
                });
            }
        }
    }
    if let Some(n) = find_unguarded_cycle(&graph) {
        return Err(DynamicsError::IntraInstanceCycle(n));
    }
    Ok(graph)
}

fn find_unguarded_cycle(graph: &ChronologyGraph) -> Option<String> {
    let succ = graph.unguarded_successors();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    fn visit<'a>(
        n: &'a str,
        succ: &BTreeMap<&'a str, Vec<&'a str>>,
        state: &mut BTreeMap<&'a str, u8>,
    ) -> Option<String> {
        match state.get(n) {
            Some(1) => return Some(n.to_string()),
            Some(2) => return None,
            _ => {}
        }
        state.insert(n, 1);
        for s in succ.get(n).into_iter().flatten() {
            if let Some(c) = visit(s, succ, state) {
                return Some(c);
            }
        }
        state.insert(n, 2);
        None
    }
    graph.nodes.iter().find_map(|n| visit(n, &succ, &mut state))
}
