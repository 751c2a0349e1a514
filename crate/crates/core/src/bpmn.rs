//! Import of a BPMN 2.0 collaboration subset.
//!
//! [`parse_bpmn`] reads the XML into a [`BpmnGraph`]; [`map_bpmn`] turns the
//! graph into a static model plus event declarations. Sending a message has
//! one shape whether BPMN draws it as a send task or as a message throw
//! event: a message thimac that is created, released and transferred out.

use std::collections::{BTreeMap, BTreeSet};

use roxmltree::{Document, Node};

use crate::diag::{codes, Diagnostic, Diagnostics, Location};
use crate::dsl::{ChronDecl, DynamicDecls, EventDecl, EventKind, JoinInputDecl};
use crate::model::{
    ActionKind, ArcId, StageId, StaticModel, ThimacId, ThingClassification, TransferDirection,
};

const MODEL_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Task,
    SendTask,
    ReceiveTask,
    SubProcess,
    StartEvent { message: bool },
    EndEvent { message: bool },
    ThrowEvent { message: bool },
    CatchEvent { message: bool },
    ExclusiveGateway,
    ParallelGateway,
}

impl NodeKind {
    fn is_gateway(self) -> bool {
        matches!(self, NodeKind::ExclusiveGateway | NodeKind::ParallelGateway)
    }

    fn is_event(self) -> bool {
        matches!(
            self,
            NodeKind::StartEvent { .. }
                | NodeKind::EndEvent { .. }
                | NodeKind::ThrowEvent { .. }
                | NodeKind::CatchEvent { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNode {
    pub id: String,
    pub name: Option<String>,
    pub kind: NodeKind,
    /// Id of the enclosing process or sub-process.
    pub container: String,
    pub message: Option<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participant {
    pub id: String,
    pub name: Option<String>,
    pub process: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lane {
    pub id: String,
    pub name: Option<String>,
    pub process: String,
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    pub id: String,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFlow {
    pub id: String,
    pub name: Option<String>,
    pub source: String,
    pub target: String,
    pub condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageFlow {
    pub id: String,
    pub name: Option<String>,
    pub message: Option<String>,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpmnGraph {
    pub participants: Vec<Participant>,
    pub processes: Vec<Process>,
    pub lanes: Vec<Lane>,
    pub nodes: Vec<FlowNode>,
    pub sequence_flows: Vec<SequenceFlow>,
    pub message_flows: Vec<MessageFlow>,
    /// Message id to message name.
    pub messages: BTreeMap<String, String>,
    pub warnings: Diagnostics,
}

impl BpmnGraph {
    pub fn node(&self, id: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Participants without a process, or whose process has no flow nodes.
    pub fn is_black_box(&self, participant: &Participant) -> bool {
        match &participant.process {
            None => true,
            Some(p) => !self.nodes.iter().any(|n| &n.container == p),
        }
    }
}

fn loc(doc: &Document, node: Node) -> Location {
    let pos = doc.text_pos_at(node.range().start);
    Location {
        line: pos.row as usize,
        col: pos.col as usize,
    }
}

fn in_model_ns(node: Node) -> bool {
    matches!(node.tag_name().namespace(), None | Some(MODEL_NS))
}

fn attr(node: Node, name: &str) -> Option<String> {
    node.attribute(name).map(str::to_string)
}

struct Reader<'a, 'input> {
    doc: &'a Document<'input>,
    graph: BpmnGraph,
    errors: Diagnostics,
    ids: BTreeSet<String>,
    skipped: BTreeSet<String>,
}

impl<'a, 'input> Reader<'a, 'input> {
    fn warn(&mut self, node: Node, what: &str) {
        self.graph.warnings.push(
            Diagnostic::warning(
                codes::W_UNSUPPORTED,
                format!("unsupported element `{what}` ignored"),
            )
            .at(loc(self.doc, node)),
        );
    }

    fn id(&mut self, node: Node) -> Option<String> {
        let Some(id) = attr(node, "id") else {
            self.errors.push(
                Diagnostic::error(
                    codes::E_XML,
                    format!("`{}` has no id", node.tag_name().name()),
                )
                .at(loc(self.doc, node)),
            );
            return None;
        };
        if !self.ids.insert(id.clone()) {
            self.errors.push(
                Diagnostic::error(codes::E_DUPLICATE_NAME, format!("duplicate id `{id}`"))
                    .at(loc(self.doc, node)),
            );
            return None;
        }
        Some(id)
    }

    fn definitions(&mut self, root: Node) {
        for child in root.children().filter(|n| n.is_element()) {
            if !in_model_ns(child) {
                continue;
            }
            match child.tag_name().name() {
                "collaboration" => self.collaboration(child),
                "process" => {
                    if let Some(id) = self.id(child) {
                        self.graph.processes.push(Process {
                            id: id.clone(),
                            name: attr(child, "name"),
                        });
                        self.container(child, &id);
                    }
                }
                "message" => {
                    if let Some(id) = self.id(child) {
                        let name = attr(child, "name").unwrap_or_else(|| id.clone());
                        self.graph.messages.insert(id, name);
                    }
                }
                "documentation" | "extensionElements" | "itemDefinition" => {}
                other => self.warn(child, other),
            }
        }
    }

    fn collaboration(&mut self, node: Node) {
        for child in node
            .children()
            .filter(|n| n.is_element() && in_model_ns(*n))
        {
            match child.tag_name().name() {
                "participant" => {
                    if let Some(id) = self.id(child) {
                        self.graph.participants.push(Participant {
                            id,
                            name: attr(child, "name"),
                            process: attr(child, "processRef"),
                        });
                    }
                }
                "messageFlow" => {
                    if let Some(id) = self.id(child) {
                        self.graph.message_flows.push(MessageFlow {
                            id,
                            name: attr(child, "name"),
                            message: attr(child, "messageRef"),
                            source: attr(child, "sourceRef").unwrap_or_default(),
                            target: attr(child, "targetRef").unwrap_or_default(),
                        });
                    }
                }
                "documentation" | "extensionElements" => {}
                other => self.warn(child, other),
            }
        }
    }

    fn event_kind(&mut self, node: Node) -> (bool, Option<String>) {
        let mut message = false;
        let mut message_ref = None;
        for d in node
            .children()
            .filter(|n| n.is_element() && in_model_ns(*n))
        {
            let name = d.tag_name().name();
            if name == "messageEventDefinition" {
                message = true;
                message_ref = attr(d, "messageRef");
            } else if name.ends_with("EventDefinition") {
                self.warn(d, name);
            }
        }
        (message, message_ref)
    }

    fn container(&mut self, node: Node, container: &str) {
        for child in node.children().filter(|n| n.is_element()) {
            if !in_model_ns(child) {
                continue;
            }
            let tag = child.tag_name().name();
            let (kind, message) = match tag {
                "task" | "userTask" | "serviceTask" | "manualTask" | "scriptTask"
                | "businessRuleTask" => (NodeKind::Task, None),
                "sendTask" => (NodeKind::SendTask, attr(child, "messageRef")),
                "receiveTask" => (NodeKind::ReceiveTask, attr(child, "messageRef")),
                "subProcess" => {
                    if child.attribute("triggeredByEvent") == Some("true") {
                        self.errors.push(
                            Diagnostic::error(
                                codes::E_UNSUPPORTED,
                                "event sub-processes have no mapping",
                            )
                            .at(loc(self.doc, child)),
                        );
                        continue;
                    }
                    (NodeKind::SubProcess, None)
                }
                "startEvent" => {
                    let (m, r) = self.event_kind(child);
                    (NodeKind::StartEvent { message: m }, r)
                }
                "endEvent" => {
                    let (m, r) = self.event_kind(child);
                    (NodeKind::EndEvent { message: m }, r)
                }
                "intermediateThrowEvent" => {
                    let (m, r) = self.event_kind(child);
                    (NodeKind::ThrowEvent { message: m }, r)
                }
                "intermediateCatchEvent" => {
                    let (m, r) = self.event_kind(child);
                    (NodeKind::CatchEvent { message: m }, r)
                }
                "exclusiveGateway" => (NodeKind::ExclusiveGateway, None),
                "parallelGateway" => (NodeKind::ParallelGateway, None),
                "sequenceFlow" => {
                    if let Some(id) = self.id(child) {
                        let condition = child
                            .children()
                            .find(|n| {
                                n.has_tag_name((MODEL_NS, "conditionExpression"))
                                    || n.has_tag_name("conditionExpression")
                            })
                            .and_then(|n| n.text())
                            .map(|t| t.trim().to_string())
                            .filter(|t| !t.is_empty());
                        self.graph.sequence_flows.push(SequenceFlow {
                            id,
                            name: attr(child, "name"),
                            source: attr(child, "sourceRef").unwrap_or_default(),
                            target: attr(child, "targetRef").unwrap_or_default(),
                            condition,
                        });
                    }
                    continue;
                }
                "laneSet" => {
                    self.lanes(child, container);
                    continue;
                }
                "documentation" | "extensionElements" | "incoming" | "outgoing"
                | "ioSpecification" => {
                    continue;
                }
                other => {
                    if let Some(id) = attr(child, "id") {
                        self.skipped.insert(id);
                    }
                    self.warn(child, other);
                    continue;
                }
            };
            let Some(id) = self.id(child) else { continue };
            let line = loc(self.doc, child).line;
            self.graph.nodes.push(FlowNode {
                id: id.clone(),
                name: attr(child, "name"),
                kind,
                container: container.to_string(),
                message,
                line,
            });
            if kind == NodeKind::SubProcess {
                self.container(child, &id);
            }
        }
    }

    fn lanes(&mut self, set: Node, process: &str) {
        for lane in set
            .children()
            .filter(|n| n.is_element() && in_model_ns(*n) && n.tag_name().name() == "lane")
        {
            let Some(id) = self.id(lane) else { continue };
            let nodes = lane
                .children()
                .filter(|n| n.is_element() && n.tag_name().name() == "flowNodeRef")
                .filter_map(|n| n.text())
                .map(|t| t.trim().to_string())
                .collect();
            self.graph.lanes.push(Lane {
                id,
                name: attr(lane, "name"),
                process: process.to_string(),
                nodes,
            });
            for nested in lane
                .children()
                .filter(|n| n.tag_name().name() == "childLaneSet")
            {
                self.warn(nested, "childLaneSet");
            }
        }
    }

    fn check_refs(&mut self) {
        let nodes: BTreeSet<&str> = self.graph.nodes.iter().map(|n| n.id.as_str()).collect();
        let participants: BTreeSet<&str> = self
            .graph
            .participants
            .iter()
            .map(|p| p.id.as_str())
            .collect();
        let processes: BTreeSet<&str> =
            self.graph.processes.iter().map(|p| p.id.as_str()).collect();
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let mut dangling = |what: &str, id: &str, r: &str| {
            errors.push(Diagnostic::error(
                codes::E_DANGLING_REF,
                format!("{what} `{id}` refers to unknown `{r}`"),
            ));
        };
        let skipped = &self.skipped;
        let mut keep_seq = Vec::new();
        for f in &self.graph.sequence_flows {
            let mut ok = true;
            for r in [&f.source, &f.target] {
                if skipped.contains(r) {
                    ok = false;
                } else if !nodes.contains(r.as_str()) {
                    dangling("sequenceFlow", &f.id, r);
                    ok = false;
                }
            }
            if !ok && (skipped.contains(&f.source) || skipped.contains(&f.target)) {
                warnings.push(Diagnostic::warning(
                    codes::W_UNSUPPORTED,
                    format!(
                        "sequenceFlow `{}` touches an unsupported element and is dropped",
                        f.id
                    ),
                ));
            }
            keep_seq.push(ok);
        }
        let mut keep_msg = Vec::new();
        for f in &self.graph.message_flows {
            let mut ok = true;
            for r in [&f.source, &f.target] {
                if skipped.contains(r) {
                    ok = false;
                } else if !nodes.contains(r.as_str()) && !participants.contains(r.as_str()) {
                    dangling("messageFlow", &f.id, r);
                    ok = false;
                }
            }
            keep_msg.push(ok);
        }
        for p in &self.graph.participants {
            if let Some(r) = &p.process {
                if !processes.contains(r.as_str()) {
                    dangling("participant", &p.id, r);
                }
            }
        }
        for l in &self.graph.lanes {
            for r in &l.nodes {
                if !nodes.contains(r.as_str()) && !skipped.contains(r) {
                    dangling("lane", &l.id, r);
                }
            }
        }
        for n in &self.graph.nodes {
            if let Some(m) = &n.message {
                if !self.graph.messages.contains_key(m) {
                    dangling("flow node", &n.id, m);
                }
            }
        }
        for f in &self.graph.message_flows {
            if let Some(m) = &f.message {
                if !self.graph.messages.contains_key(m) {
                    dangling("messageFlow", &f.id, m);
                }
            }
        }
        for e in errors {
            self.errors.push(e);
        }
        for w in warnings {
            self.graph.warnings.push(w);
        }
        let mut it = keep_seq.into_iter();
        self.graph.sequence_flows.retain(|_| it.next().unwrap());
        let mut it = keep_msg.into_iter();
        self.graph.message_flows.retain(|_| it.next().unwrap());
    }
}

/// Reads a BPMN 2.0 document. Diagram interchange is ignored; other
/// elements outside the supported subset produce `W_UNSUPPORTED` warnings
/// kept on the graph.
pub fn parse_bpmn(xml: &str) -> Result<BpmnGraph, Diagnostics> {
    let doc = Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        Diagnostics::from(Diagnostic::error(codes::E_XML, e.to_string()).at(Location {
            line: pos.row as usize,
            col: pos.col as usize,
        }))
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "definitions" || !in_model_ns(root) {
        return Err(Diagnostic::error(
            codes::E_XML,
            format!(
                "expected a BPMN `definitions` root, found `{}`",
                root.tag_name().name()
            ),
        )
        .into());
    }
    let mut reader = Reader {
        doc: &doc,
        graph: BpmnGraph::default(),
        errors: Diagnostics::new(),
        ids: BTreeSet::new(),
        skipped: BTreeSet::new(),
    };
    reader.definitions(root);
    reader.check_refs();
    if reader.errors.has_errors() {
        return Err(reader.errors);
    }
    Ok(reader.graph)
}

/// Turns free text into a thimac name: words joined in camel case.
pub fn sanitize_name(text: &str) -> String {
    let mut out = String::new();
    for word in text.split(|c: char| !c.is_ascii_alphanumeric() && c != '_') {
        let mut chars = word.chars();
        if let Some(first) = chars.next() {
            out.push(first.to_ascii_uppercase());
            out.extend(chars);
        }
    }
    if out.is_empty() {
        return "Unnamed".to_string();
    }
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    out
}

fn sanitize_label(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Stages a flow node contributes, and where sequence flow enters and
/// leaves them.
#[derive(Debug, Clone, Default)]
struct Mapped {
    stages: Vec<StageId>,
    entry: Option<StageId>,
    exit: Option<StageId>,
    send: Option<StageId>,
    receive: Option<StageId>,
}

struct Mapper<'g> {
    graph: &'g BpmnGraph,
    model: StaticModel,
    /// Process or sub-process id, or participant id, to its thimac.
    containers: BTreeMap<String, ThimacId>,
    lane_of: BTreeMap<String, ThimacId>,
    mapped: BTreeMap<String, Mapped>,
    /// Black-box boundary stages by message flow id.
    boundary: BTreeMap<String, StageId>,
}

fn err(e: impl std::fmt::Display) -> Diagnostics {
    Diagnostic::error(codes::E_UNSUPPORTED, e.to_string()).into()
}

impl<'g> Mapper<'g> {
    fn thimac(&mut self, parent: Option<ThimacId>, name: &str) -> Result<ThimacId, Diagnostics> {
        let base = sanitize_name(name);
        let mut candidate = base.clone();
        let mut n = 2;
        while self.model.child_by_name(parent, &candidate).is_some() {
            candidate = format!("{base}_{n}");
            n += 1;
        }
        self.model
            .add_thimac(parent, &candidate, ThingClassification::Subsisting)
            .map_err(err)
    }

    fn stage(
        &mut self,
        owner: ThimacId,
        kind: ActionKind,
        direction: Option<TransferDirection>,
        label: String,
    ) -> Result<StageId, Diagnostics> {
        self.model
            .add_stage(owner, kind, direction, Some(&label))
            .map_err(err)
    }

    fn owner_of(&self, node: &FlowNode) -> ThimacId {
        self.lane_of
            .get(&node.id)
            .copied()
            .unwrap_or(self.containers[&node.container])
    }

    fn sends(&self, node: &FlowNode) -> bool {
        matches!(
            node.kind,
            NodeKind::SendTask
                | NodeKind::ThrowEvent { message: true }
                | NodeKind::EndEvent { message: true }
        ) || self.graph.message_flows.iter().any(|m| m.source == node.id)
    }

    fn receives(&self, node: &FlowNode) -> bool {
        matches!(
            node.kind,
            NodeKind::ReceiveTask
                | NodeKind::CatchEvent { message: true }
                | NodeKind::StartEvent { message: true }
        ) || self.graph.message_flows.iter().any(|m| m.target == node.id)
    }

    fn message_name(&self, node: &FlowNode) -> String {
        let outgoing = self
            .graph
            .message_flows
            .iter()
            .filter(|m| m.source == node.id)
            .find_map(|m| m.message.as_ref());
        node.message
            .as_ref()
            .or(outgoing)
            .and_then(|m| self.graph.messages.get(m))
            .or(node.name.as_ref())
            .cloned()
            .unwrap_or_else(|| node.id.clone())
    }

    /// Create, Release, Transfer out in a fresh message thimac under `owner`.
    fn send_pattern(
        &mut self,
        owner: ThimacId,
        node: &FlowNode,
        m: &mut Mapped,
    ) -> Result<(), Diagnostics> {
        let name = self.message_name(node);
        let msg = self.thimac(Some(owner), &name)?;
        let id = sanitize_label(&node.id);
        let c = self.stage(msg, ActionKind::Create, None, format!("{id}.create"))?;
        let r = self.stage(msg, ActionKind::Release, None, format!("{id}.release"))?;
        let o = self.stage(
            msg,
            ActionKind::Transfer,
            Some(TransferDirection::Out),
            format!("{id}.out"),
        )?;
        self.model.add_flow(c, r).map_err(err)?;
        self.model.add_flow(r, o).map_err(err)?;
        m.stages.extend([c, r, o]);
        m.send = Some(o);
        m.entry.get_or_insert(c);
        m.exit = Some(o);
        Ok(())
    }

    fn receive_pattern(
        &mut self,
        owner: ThimacId,
        node: &FlowNode,
        m: &mut Mapped,
    ) -> Result<StageId, Diagnostics> {
        let id = sanitize_label(&node.id);
        let i = self.stage(
            owner,
            ActionKind::Transfer,
            Some(TransferDirection::In),
            format!("{id}.in"),
        )?;
        let r = self.stage(owner, ActionKind::Receive, None, format!("{id}.receive"))?;
        self.model.add_flow(i, r).map_err(err)?;
        m.stages.extend([i, r]);
        m.receive = Some(i);
        m.entry.get_or_insert(i);
        m.exit = Some(r);
        Ok(r)
    }

    fn map_node(&mut self, node: &FlowNode) -> Result<(), Diagnostics> {
        let owner = self.owner_of(node);
        let id = sanitize_label(&node.id);
        let mut m = Mapped::default();
        let sends = self.sends(node);
        let receives = self.receives(node);
        match node.kind {
            NodeKind::Task | NodeKind::SubProcess => {
                let host = if node.kind == NodeKind::SubProcess {
                    self.containers[&node.id]
                } else {
                    owner
                };
                let received = if receives {
                    Some(self.receive_pattern(host, node, &mut m)?)
                } else {
                    None
                };
                let p = self.stage(host, ActionKind::Process, None, format!("{id}.process"))?;
                if let Some(r) = received {
                    self.model.add_flow(r, p).map_err(err)?;
                }
                m.stages.push(p);
                m.entry.get_or_insert(p);
                if sends {
                    let mut s = Mapped::default();
                    self.send_pattern(host, node, &mut s)?;
                    self.model
                        .add_trigger(p, s.entry.unwrap(), None)
                        .map_err(err)?;
                    m.stages.extend(s.stages);
                    m.send = s.send;
                }
                m.exit = Some(p);
            }
            _ if node.kind.is_gateway() => {}
            NodeKind::SendTask
            | NodeKind::ThrowEvent { message: true }
            | NodeKind::EndEvent { message: true } => self.send_pattern(owner, node, &mut m)?,
            NodeKind::ReceiveTask
            | NodeKind::CatchEvent { message: true }
            | NodeKind::StartEvent { message: true } => {
                self.receive_pattern(owner, node, &mut m)?;
            }
            NodeKind::StartEvent { message: false } if receives => {
                self.receive_pattern(owner, node, &mut m)?;
            }
            NodeKind::StartEvent { message: false } => {
                let c = self.stage(owner, ActionKind::Create, None, format!("{id}.create"))?;
                m.stages.push(c);
                m.entry = Some(c);
                m.exit = Some(c);
            }
            _ if sends => self.send_pattern(owner, node, &mut m)?,
            _ if receives => {
                self.receive_pattern(owner, node, &mut m)?;
            }
            // plain end and plain intermediate events only route flow
            _ => {}
        }
        if !m.stages.is_empty() {
            self.mapped.insert(node.id.clone(), m);
        }
        Ok(())
    }
}

/// A sequence connection between two stage-bearing nodes after routing
/// through gateways and stageless events.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Route {
    from: String,
    to: String,
    guard: Option<String>,
    join: Option<String>,
}

fn routes(graph: &BpmnGraph, mapped: &BTreeMap<String, Mapped>) -> Vec<Route> {
    let outgoing = |id: &str| -> Vec<&SequenceFlow> {
        graph
            .sequence_flows
            .iter()
            .filter(|f| f.source == id)
            .collect()
    };
    let incoming = |id: &str| {
        graph
            .sequence_flows
            .iter()
            .filter(|f| f.target == id)
            .count()
    };
    let flow_guard = |f: &SequenceFlow| {
        f.name
            .clone()
            .or_else(|| f.condition.clone())
            .unwrap_or_else(|| f.id.clone())
    };
    let mut out: Vec<Route> = Vec::new();
    for node in &graph.nodes {
        if !mapped.contains_key(&node.id) {
            continue;
        }
        // (node, guard, join gateway)
        let mut stack: Vec<(String, Option<String>, Option<String>)> = Vec::new();
        for f in outgoing(&node.id) {
            let guard = f.condition.as_ref().map(|_| flow_guard(f));
            stack.push((f.target.clone(), guard, None));
        }
        let mut seen = BTreeSet::new();
        while let Some((at, guard, join)) = stack.pop() {
            if !seen.insert((at.clone(), guard.clone(), join.clone())) {
                continue;
            }
            if mapped.contains_key(&at) {
                let r = Route {
                    from: node.id.clone(),
                    to: at,
                    guard,
                    join,
                };
                if !out.contains(&r) {
                    out.push(r);
                }
                continue;
            }
            let Some(n) = graph.node(&at) else { continue };
            let outs = outgoing(&at);
            let join = if n.kind == NodeKind::ParallelGateway && incoming(&at) >= 2 {
                Some(at.clone())
            } else {
                join
            };
            let deciding = n.kind == NodeKind::ExclusiveGateway && outs.len() >= 2;
            for f in outs {
                let g = if deciding || f.condition.is_some() {
                    let here = flow_guard(f);
                    Some(match &guard {
                        Some(prev) => format!("{prev} and {here}"),
                        None => here,
                    })
                } else {
                    guard.clone()
                };
                stack.push((f.target.clone(), g, join.clone()));
            }
        }
    }
    out.sort_by_key(|r| {
        let pos = |id: &str| graph.nodes.iter().position(|n| n.id == id);
        (pos(&r.from), pos(&r.to), r.guard.clone(), r.join.clone())
    });
    out
}

/// Maps a parsed graph to a static model and event declarations: one event
/// per stage-bearing flow node, named `E1`, `E2`, ... in document order.
pub fn map_bpmn(graph: &BpmnGraph) -> Result<(StaticModel, DynamicDecls), Diagnostics> {
    let mut mapper = Mapper {
        graph,
        model: StaticModel::new(),
        containers: BTreeMap::new(),
        lane_of: BTreeMap::new(),
        mapped: BTreeMap::new(),
        boundary: BTreeMap::new(),
    };
    let mut pooled = BTreeSet::new();
    for p in &graph.participants {
        let t = mapper.thimac(None, p.name.as_deref().unwrap_or(&p.id))?;
        mapper.containers.insert(p.id.clone(), t);
        if let Some(proc_id) = &p.process {
            mapper.containers.insert(proc_id.clone(), t);
            pooled.insert(proc_id.clone());
        }
    }
    for proc in &graph.processes {
        if !pooled.contains(&proc.id) {
            let t = mapper.thimac(None, proc.name.as_deref().unwrap_or(&proc.id))?;
            mapper.containers.insert(proc.id.clone(), t);
        }
    }
    for lane in &graph.lanes {
        let parent = mapper.containers[&lane.process];
        let t = mapper.thimac(Some(parent), lane.name.as_deref().unwrap_or(&lane.id))?;
        for n in &lane.nodes {
            mapper.lane_of.insert(n.clone(), t);
        }
    }
    // sub-process thimacs, outermost first
    for node in &graph.nodes {
        if node.kind == NodeKind::SubProcess {
            let parent = mapper.owner_of(node);
            let t = mapper.thimac(Some(parent), node.name.as_deref().unwrap_or(&node.id))?;
            mapper.containers.insert(node.id.clone(), t);
        }
    }
    for node in &graph.nodes {
        mapper.map_node(node)?;
    }

    // message flows
    let participant = |id: &str| graph.participants.iter().any(|p| p.id == id);
    for mf in &graph.message_flows {
        let label = sanitize_label(&mf.id);
        let from = if participant(&mf.source) {
            let owner = mapper.containers[&mf.source];
            let s = mapper.stage(
                owner,
                ActionKind::Transfer,
                Some(TransferDirection::Out),
                format!("{label}.out"),
            )?;
            mapper.boundary.insert(format!("{}>", mf.id), s);
            s
        } else {
            mapper.mapped[&mf.source]
                .send
                .expect("sending node has an out stage")
        };
        let to = if participant(&mf.target) {
            let owner = mapper.containers[&mf.target];
            let s = mapper.stage(
                owner,
                ActionKind::Transfer,
                Some(TransferDirection::In),
                format!("{label}.in"),
            )?;
            mapper.boundary.insert(format!("{}<", mf.id), s);
            s
        } else {
            mapper.mapped[&mf.target]
                .receive
                .expect("receiving node has an in stage")
        };
        mapper.model.add_flow(from, to).map_err(err)?;
    }

    // sequence flow as triggers
    let routes = routes(graph, &mapper.mapped);
    let mut join_arcs: BTreeMap<(String, String), Vec<ArcId>> = BTreeMap::new();
    let mut seen_arcs: BTreeSet<(StageId, StageId, Option<String>)> = BTreeSet::new();
    for r in &routes {
        let from = mapper.mapped[&r.from].exit.unwrap();
        let to = mapper.mapped[&r.to].entry.unwrap();
        if r.join.is_none() && !seen_arcs.insert((from, to, r.guard.clone())) {
            continue;
        }
        let a = mapper
            .model
            .add_trigger(from, to, r.guard.as_deref())
            .map_err(err)?;
        if let Some(j) = &r.join {
            join_arcs
                .entry((j.clone(), r.to.clone()))
                .or_default()
                .push(a);
        }
    }
    for ((_, to), arcs) in &join_arcs {
        if arcs.len() >= 2 {
            let out = mapper.mapped[to].entry.unwrap();
            mapper
                .model
                .add_join(arcs.iter().copied(), out)
                .map_err(err)?;
        }
    }

    // events
    let mut decls = DynamicDecls::default();
    let mut event_of: BTreeMap<String, String> = BTreeMap::new();
    for node in &graph.nodes {
        let Some(m) = mapper.mapped.get(&node.id) else {
            continue;
        };
        let name = format!("E{}", decls.events.len() + 1);
        let mut stages = m.stages.clone();
        for mf in &graph.message_flows {
            if mf.source == node.id {
                stages.extend(mapper.boundary.get(&format!("{}<", mf.id)));
            }
            if mf.target == node.id {
                stages.extend(mapper.boundary.get(&format!("{}>", mf.id)));
            }
        }
        decls.events.push(EventDecl {
            name: name.clone(),
            description: node.name.clone().unwrap_or_else(|| node.id.clone()),
            region: stages.iter().map(|s| mapper.model.stage_ref(*s)).collect(),
            duration: None,
            extended: false,
            kind: EventKind::ProcessLike,
            instantaneous: node.kind.is_event(),
            measure: None,
        });
        event_of.insert(node.id.clone(), name);
    }

    // chronology
    let mut joins: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    let mut edges: Vec<(String, String, Option<String>)> = Vec::new();
    for r in &routes {
        let (from, to) = (event_of[&r.from].clone(), event_of[&r.to].clone());
        match &r.join {
            Some(j) => {
                let inputs = joins.entry((j.clone(), to)).or_default();
                if !inputs.contains(&from) {
                    inputs.push(from);
                }
            }
            None => {
                let e = (from, to, r.guard.clone());
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
    }
    for mf in &graph.message_flows {
        if let (Some(from), Some(to)) = (event_of.get(&mf.source), event_of.get(&mf.target)) {
            let preds: Vec<usize> = edges
                .iter()
                .enumerate()
                .filter(|(_, e)| &e.1 == to)
                .map(|(i, _)| i)
                .collect();
            if let [only] = preds[..] {
                if edges[only].2.is_none() {
                    let pred = edges.remove(only).0;
                    joins.insert((mf.id.clone(), to.clone()), vec![pred, from.clone()]);
                    continue;
                }
            }
            let e = (from.clone(), to.clone(), None);
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    for (from, to, guard) in edges {
        decls.chronology.push(ChronDecl::Edge { from, to, guard });
    }
    for ((_, output), inputs) in joins {
        if inputs.len() >= 2 {
            decls.chronology.push(ChronDecl::Join {
                inputs: inputs
                    .into_iter()
                    .map(|event| JoinInputDecl {
                        event,
                        optional: false,
                    })
                    .collect(),
                output,
            });
        } else {
            decls.chronology.push(ChronDecl::Edge {
                from: inputs[0].clone(),
                to: output,
                guard: None,
            });
        }
    }
    Ok((mapper.model, decls))
}

/// Parses and maps in one go; warnings are returned alongside the result.
pub fn import_bpmn(xml: &str) -> Result<(StaticModel, DynamicDecls, Diagnostics), Diagnostics> {
    let graph = parse_bpmn(xml)?;
    let (model, decls) = map_bpmn(&graph)?;
    Ok((model, decls, graph.warnings))
}
