//! In-memory graph of a static thinging-machine model.
//!
//! A [`StaticModel`] holds thimacs (thing/machines), their action stages, flow
//! and trigger arcs between stages, memory stores and join bars. Identifiers
//! are handed out in creation order and never reused, so every traversal that
//! walks the id-indexed maps is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(ThimacId, "t");
id_type!(StageId, "s");
id_type!(ArcId, "a");
id_type!(JoinId, "j");

/// The five actions of a thinging machine. Arrive and accept are folded into
/// `Receive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Create,
    Process,
    Release,
    Transfer,
    Receive,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Create,
        ActionKind::Process,
        ActionKind::Release,
        ActionKind::Transfer,
        ActionKind::Receive,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::Create => "create",
            ActionKind::Process => "process",
            ActionKind::Release => "release",
            ActionKind::Transfer => "transfer",
            ActionKind::Receive => "receive",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        ActionKind::ALL.into_iter().find(|k| k.keyword() == word)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransferDirection {
    In,
    Out,
    Both,
}

impl TransferDirection {
    pub fn keyword(self) -> &'static str {
        match self {
            TransferDirection::In => "in",
            TransferDirection::Out => "out",
            TransferDirection::Both => "both",
        }
    }

    pub fn accepts_input(self) -> bool {
        matches!(self, TransferDirection::In | TransferDirection::Both)
    }

    pub fn emits_output(self) -> bool {
        matches!(self, TransferDirection::Out | TransferDirection::Both)
    }
}

/// How a thing is created: as an existing, a subsisting or a merely
/// appearing object. Appearing things can never be part of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum ThingClassification {
    Existing,
    #[default]
    Subsisting,
    Appearing,
}

impl ThingClassification {
    pub fn keyword(self) -> &'static str {
        match self {
            ThingClassification::Existing => "existing",
            ThingClassification::Subsisting => "subsisting",
            ThingClassification::Appearing => "appearing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thimac {
    pub id: ThimacId,
    pub name: String,
    pub parent: Option<ThimacId>,
    pub classification: ThingClassification,
    pub stages: Vec<StageId>,
    pub children: Vec<ThimacId>,
    pub is_memory: bool,
    /// The stage a memory thimac is attached to.
    pub memory_of: Option<StageId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub id: StageId,
    pub owner: ThimacId,
    pub kind: ActionKind,
    pub direction: Option<TransferDirection>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArcKind {
    Flow,
    Trigger,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub id: ArcId,
    pub kind: ArcKind,
    pub from: StageId,
    pub to: StageId,
    pub guard: Option<String>,
}

/// Conjunctive synchronisation over two or more trigger arcs that share an
/// output stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinBar {
    pub id: JoinId,
    pub inputs: BTreeSet<ArcId>,
    pub output: StageId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown parent thimac {0}")]
    UnknownParent(ThimacId),
    #[error("unknown thimac {0}")]
    UnknownThimac(ThimacId),
    #[error("duplicate sibling name `{0}`")]
    DuplicateSiblingName(String),
    #[error("empty thimac name")]
    EmptyName,
    #[error("direction given on a non-transfer stage ({0})")]
    DirectionOnNonTransfer(ActionKind),
    #[error("transfer stage needs a direction")]
    MissingDirection,
    #[error("duplicate stage label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown stage {0}")]
    UnknownStage(StageId),
    #[error("unknown arc {0}")]
    UnknownArc(ArcId),
    #[error("guards are only allowed on trigger arcs")]
    GuardOnFlow,
    #[error("region is empty")]
    EmptyRegion,
    #[error("stage {0} does not belong to this model")]
    ForeignStage(StageId),
}

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

/// Identity token distinguishing model instances; ignored by equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelToken(u64);

impl ModelToken {
    fn fresh() -> Self {
        ModelToken(NEXT_TOKEN.fetch_add(1, Ordering::Relaxed))
    }
}

/// The subsistence level: thimacs and actions that are there but inactive.
#[derive(Debug, Clone)]
pub struct StaticModel {
    token: ModelToken,
    pub thimacs: BTreeMap<ThimacId, Thimac>,
    pub stages: BTreeMap<StageId, Stage>,
    pub arcs: BTreeMap<ArcId, Arc>,
    pub joins: BTreeMap<JoinId, JoinBar>,
    pub roots: Vec<ThimacId>,
    next_thimac: u32,
    next_stage: u32,
    next_arc: u32,
    next_join: u32,
}

impl PartialEq for StaticModel {
    fn eq(&self, other: &Self) -> bool {
        self.thimacs == other.thimacs
            && self.stages == other.stages
            && self.arcs == other.arcs
            && self.joins == other.joins
            && self.roots == other.roots
    }
}

impl Eq for StaticModel {}

impl Default for StaticModel {
    fn default() -> Self {
        Self::new()
    }
}

impl StaticModel {
    pub fn new() -> Self {
        StaticModel {
            token: ModelToken::fresh(),
            thimacs: BTreeMap::new(),
            stages: BTreeMap::new(),
            arcs: BTreeMap::new(),
            joins: BTreeMap::new(),
            roots: Vec::new(),
            next_thimac: 0,
            next_stage: 0,
            next_arc: 0,
            next_join: 0,
        }
    }

    pub fn token(&self) -> ModelToken {
        self.token
    }

    pub fn add_thimac(
        &mut self,
        parent: Option<ThimacId>,
        name: &str,
        classification: ThingClassification,
    ) -> Result<ThimacId, ModelError> {
        self.insert_thimac(parent, name, classification, None)
    }

    fn insert_thimac(
        &mut self,
        parent: Option<ThimacId>,
        name: &str,
        classification: ThingClassification,
        memory_of: Option<StageId>,
    ) -> Result<ThimacId, ModelError> {
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        let siblings = match parent {
            Some(p) => {
                &self
                    .thimacs
                    .get(&p)
                    .ok_or(ModelError::UnknownParent(p))?
                    .children
            }
            None => &self.roots,
        };
        if siblings.iter().any(|s| self.thimacs[s].name == name) {
            return Err(ModelError::DuplicateSiblingName(name.to_string()));
        }
        let id = ThimacId(self.next_thimac);
        self.next_thimac += 1;
        self.thimacs.insert(
            id,
            Thimac {
                id,
                name: name.to_string(),
                parent,
                classification,
                stages: Vec::new(),
                children: Vec::new(),
                is_memory: memory_of.is_some(),
                memory_of,
            },
        );
        match parent {
            Some(p) => self.thimacs.get_mut(&p).unwrap().children.push(id),
            None => self.roots.push(id),
        }
        Ok(id)
    }

    pub fn add_stage(
        &mut self,
        thimac: ThimacId,
        kind: ActionKind,
        direction: Option<TransferDirection>,
        label: Option<&str>,
    ) -> Result<StageId, ModelError> {
        if !self.thimacs.contains_key(&thimac) {
            return Err(ModelError::UnknownThimac(thimac));
        }
        match (kind, direction) {
            (ActionKind::Transfer, None) => return Err(ModelError::MissingDirection),
            (k, Some(_)) if k != ActionKind::Transfer => {
                return Err(ModelError::DirectionOnNonTransfer(k))
            }
            _ => {}
        }
        if let Some(label) = label {
            if self.stage_by_label(label).is_some() {
                return Err(ModelError::DuplicateLabel(label.to_string()));
            }
        }
        let id = StageId(self.next_stage);
        self.next_stage += 1;
        self.stages.insert(
            id,
            Stage {
                id,
                owner: thimac,
                kind,
                direction,
                label: label.map(str::to_string),
            },
        );
        self.thimacs.get_mut(&thimac).unwrap().stages.push(id);
        Ok(id)
    }

    pub fn add_flow(&mut self, from: StageId, to: StageId) -> Result<ArcId, ModelError> {
        self.add_arc(ArcKind::Flow, from, to, None)
    }

    pub fn add_trigger(
        &mut self,
        from: StageId,
        to: StageId,
        guard: Option<&str>,
    ) -> Result<ArcId, ModelError> {
        self.add_arc(ArcKind::Trigger, from, to, guard)
    }

    /// Adds an arc without checking adjacency; the validator reports illegal
    /// flows so partially built models remain representable.
    pub fn add_arc(
        &mut self,
        kind: ArcKind,
        from: StageId,
        to: StageId,
        guard: Option<&str>,
    ) -> Result<ArcId, ModelError> {
        for s in [from, to] {
            if !self.stages.contains_key(&s) {
                return Err(ModelError::UnknownStage(s));
            }
        }
        if kind == ArcKind::Flow && guard.is_some() {
            return Err(ModelError::GuardOnFlow);
        }
        let id = ArcId(self.next_arc);
        self.next_arc += 1;
        self.arcs.insert(
            id,
            Arc {
                id,
                kind,
                from,
                to,
                guard: guard.map(str::to_string),
            },
        );
        Ok(id)
    }

    /// Registers a join bar. Arity and shape are left to the validator.
    pub fn add_join(
        &mut self,
        inputs: impl IntoIterator<Item = ArcId>,
        output: StageId,
    ) -> Result<JoinId, ModelError> {
        if !self.stages.contains_key(&output) {
            return Err(ModelError::UnknownStage(output));
        }
        let inputs: BTreeSet<ArcId> = inputs.into_iter().collect();
        if let Some(missing) = inputs.iter().find(|a| !self.arcs.contains_key(a)) {
            return Err(ModelError::UnknownArc(*missing));
        }
        let id = JoinId(self.next_join);
        self.next_join += 1;
        self.joins.insert(id, JoinBar { id, inputs, output });
        Ok(id)
    }

    /// Creates a memory thimac attached to `stage`. The memory becomes a
    /// child of the stage's owner and starts without stages of its own.
    pub fn attach_memory(&mut self, stage: StageId, name: &str) -> Result<ThimacId, ModelError> {
        let owner = self
            .stages
            .get(&stage)
            .ok_or(ModelError::UnknownStage(stage))?
            .owner;
        self.insert_thimac(
            Some(owner),
            name,
            ThingClassification::Subsisting,
            Some(stage),
        )
    }

    /// Removes a stage together with every arc touching it. Joins lose the
    /// removed arcs; a join whose output disappears is removed as well.
    pub fn remove_stage(&mut self, stage: StageId) -> Result<(), ModelError> {
        let removed = self
            .stages
            .remove(&stage)
            .ok_or(ModelError::UnknownStage(stage))?;
        self.thimacs
            .get_mut(&removed.owner)
            .unwrap()
            .stages
            .retain(|s| *s != stage);
        let dead: BTreeSet<ArcId> = self
            .arcs
            .values()
            .filter(|a| a.from == stage || a.to == stage)
            .map(|a| a.id)
            .collect();
        self.arcs.retain(|id, _| !dead.contains(id));
        self.joins.retain(|_, j| j.output != stage);
        for join in self.joins.values_mut() {
            join.inputs.retain(|a| !dead.contains(a));
        }
        Ok(())
    }

    pub fn thimac(&self, id: ThimacId) -> Option<&Thimac> {
        self.thimacs.get(&id)
    }

    pub fn stage(&self, id: StageId) -> Option<&Stage> {
        self.stages.get(&id)
    }

    pub fn arc(&self, id: ArcId) -> Option<&Arc> {
        self.arcs.get(&id)
    }

    pub fn stage_by_label(&self, label: &str) -> Option<StageId> {
        self.stages
            .values()
            .find(|s| s.label.as_deref() == Some(label))
            .map(|s| s.id)
    }

    pub fn child_by_name(&self, parent: Option<ThimacId>, name: &str) -> Option<ThimacId> {
        let siblings = match parent {
            Some(p) => &self.thimacs.get(&p)?.children,
            None => &self.roots,
        };
        siblings
            .iter()
            .copied()
            .find(|c| self.thimacs[c].name == name)
    }

    /// Names from the root down to `id`.
    pub fn thimac_path(&self, id: ThimacId) -> Vec<&str> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(t) = cur {
            let thimac = &self.thimacs[&t];
            path.push(thimac.name.as_str());
            cur = thimac.parent;
        }
        path.reverse();
        path
    }

    /// Position of a stage among same-kind stages of its owner.
    pub fn stage_index(&self, id: StageId) -> usize {
        let stage = &self.stages[&id];
        self.thimacs[&stage.owner]
            .stages
            .iter()
            .filter(|s| self.stages[s].kind == stage.kind)
            .position(|s| *s == id)
            .expect("stage listed under its owner")
    }

    /// Canonical textual reference: the label if present, otherwise the
    /// dotted owner path with kind and index, e.g. `Customer.release[0]`.
    pub fn stage_ref(&self, id: StageId) -> String {
        let stage = &self.stages[&id];
        match &stage.label {
            Some(l) => l.clone(),
            None => self.stage_path(id),
        }
    }

    pub fn stage_path(&self, id: StageId) -> String {
        let stage = &self.stages[&id];
        format!(
            "{}.{}[{}]",
            self.thimac_path(stage.owner).join("."),
            stage.kind,
            self.stage_index(id)
        )
    }

    /// Resolves a stage reference: a label first, then a dotted path of the
    /// form `A.B.kind` or `A.B.kind[n]`.
    pub fn resolve_stage_ref(&self, text: &str) -> Result<StageId, String> {
        let text = text.strip_prefix('@').unwrap_or(text);
        if let Some(id) = self.stage_by_label(text) {
            return Ok(id);
        }
        let (body, index) = match text.strip_suffix(']').and_then(|t| t.rsplit_once('[')) {
            Some((body, idx)) => (
                body,
                Some(
                    idx.parse::<usize>()
                        .map_err(|_| format!("bad stage index in `{text}`"))?,
                ),
            ),
            None => (text, None),
        };
        let mut segments: Vec<&str> = body.split('.').collect();
        let kind = segments
            .pop()
            .and_then(ActionKind::from_keyword)
            .ok_or_else(|| format!("`{text}` is neither a stage label nor a stage path"))?;
        if segments.is_empty() {
            return Err(format!("stage path `{text}` names no thimac"));
        }
        let mut cur = None;
        for seg in &segments {
            cur = Some(
                self.child_by_name(cur, seg)
                    .ok_or_else(|| format!("no thimac `{seg}` in `{text}`"))?,
            );
        }
        let owner = cur.unwrap();
        let candidates: Vec<StageId> = self.thimacs[&owner]
            .stages
            .iter()
            .copied()
            .filter(|s| self.stages[s].kind == kind)
            .collect();
        match index {
            Some(i) => candidates
                .get(i)
                .copied()
                .ok_or_else(|| format!("`{text}`: index out of range")),
            None if candidates.len() == 1 => Ok(candidates[0]),
            None if candidates.is_empty() => Err(format!("`{text}`: no {kind} stage")),
            None => Err(format!("`{text}` is ambiguous; add an index such as [0]")),
        }
    }

    /// Pre-order walk over the thimac forest.
    pub fn thimacs_preorder(&self) -> Vec<ThimacId> {
        fn walk(model: &StaticModel, id: ThimacId, out: &mut Vec<ThimacId>) {
            out.push(id);
            for c in &model.thimacs[&id].children {
                walk(model, *c, out);
            }
        }
        let mut out = Vec::with_capacity(self.thimacs.len());
        for r in &self.roots {
            walk(self, *r, &mut out);
        }
        out
    }

    /// The join bar an arc feeds, if any.
    pub fn join_of(&self, arc: ArcId) -> Option<JoinId> {
        self.joins
            .values()
            .find(|j| j.inputs.contains(&arc))
            .map(|j| j.id)
    }

    pub fn induced_subdiagram(
        &self,
        nodes: impl IntoIterator<Item = StageId>,
    ) -> Result<Region, ModelError> {
        let nodes: BTreeSet<StageId> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(ModelError::EmptyRegion);
        }
        if let Some(foreign) = nodes.iter().find(|s| !self.stages.contains_key(s)) {
            return Err(ModelError::ForeignStage(*foreign));
        }
        let arcs = self
            .arcs
            .values()
            .filter(|a| nodes.contains(&a.from) && nodes.contains(&a.to))
            .map(|a| a.id)
            .collect();
        Ok(Region {
            model: self.token,
            nodes,
            arcs,
        })
    }
}

/// An induced subdiagram of a static model; the locus of an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub model: ModelToken,
    pub nodes: BTreeSet<StageId>,
    pub arcs: BTreeSet<ArcId>,
}

impl Region {
    pub fn contains(&self, stage: StageId) -> bool {
        self.nodes.contains(&stage)
    }

    /// True when the region's nodes are weakly connected through its arcs.
    pub fn is_connected(&self, model: &StaticModel) -> bool {
        let Some(&first) = self.nodes.iter().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([first]);
        let mut stack = vec![first];
        while let Some(n) = stack.pop() {
            for a in &self.arcs {
                let arc = &model.arcs[a];
                let other = if arc.from == n {
                    arc.to
                } else if arc.to == n {
                    arc.from
                } else {
                    continue;
                };
                if seen.insert(other) {
                    stack.push(other);
                }
            }
        }
        seen.len() == self.nodes.len()
    }
}
