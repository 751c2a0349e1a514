//! Deterministic discrete-event engine over a compiled [`DynamicModel`].
//!
//! Every process instance walks the chronology on its own. Firing an event
//! actualizes its region for `duration` ticks; when it completes, outgoing
//! edges whose guard holds schedule their targets at the completion tick. An
//! edge into a negative event emits an extentless negative occurrence and
//! potentializes the paired region for the rest of that instance.
//!
//! Pending work sits in a priority queue ordered by
//! `(tick, instance, phase, event name)`, where within one tick completions
//! run before negative markings, and those before new firings. The order is
//! total, so a run is a pure function of the model and the scenario.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicModel;

pub const DEFAULT_TICK_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuardValue {
    Bool(bool),
    Probability { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuardAssignments {
    Uniform(BTreeMap<String, GuardValue>),
    /// One map per instance; instances past the end reuse the last map.
    PerInstance(Vec<BTreeMap<String, GuardValue>>),
}

impl Default for GuardAssignments {
    fn default() -> Self {
        GuardAssignments::Uniform(BTreeMap::new())
    }
}

impl GuardAssignments {
    fn for_instance(&self, i: usize) -> Option<&BTreeMap<String, GuardValue>> {
        match self {
            GuardAssignments::Uniform(m) => Some(m),
            GuardAssignments::PerInstance(v) => v.get(i).or(v.last()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub arrivals: Vec<u64>,
    #[serde(default)]
    pub guards: GuardAssignments,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn single(guards: &[(&str, bool)]) -> Self {
        Scenario {
            arrivals: vec![0],
            guards: GuardAssignments::Uniform(
                guards
                    .iter()
                    .map(|(k, v)| (k.to_string(), GuardValue::Bool(*v)))
                    .collect(),
            ),
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("guard \"{guard}\" is not resolved for instance {instance}")]
    UnresolvedGuard { guard: String, instance: u32 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("tick budget of {0} exceeded")]
    TickBudgetExceeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub instance: InstanceId,
    pub name: String,
    pub start: u64,
    /// Exclusive; equals `start` for negative occurrences.
    pub end: u64,
    pub negative: bool,
    /// Event whose region this occurrence actualizes (or marks, if negative).
    #[serde(skip)]
    pub region: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub occurrences: Vec<Occurrence>,
}

impl Trace {
    /// JSON lines, one occurrence per line, keys in a fixed order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for o in &self.occurrences {
            writeln!(out, "{}", serde_json::to_string(o).expect("plain struct")).unwrap();
        }
        out
    }

    pub fn for_instance(&self, instance: InstanceId) -> impl Iterator<Item = &Occurrence> {
        self.occurrences
            .iter()
            .filter(move |o| o.instance == instance)
    }

    pub fn positives(&self) -> impl Iterator<Item = &Occurrence> {
        self.occurrences.iter().filter(|o| !o.negative)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &Occurrence> {
        self.occurrences.iter().filter(|o| o.negative)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RegionCounters {
    pub active: u64,
    pub activations: u64,
    pub negatives: u64,
}

/// Per event region: how many instances currently actualize it, how often it
/// was actualized, how often it was negatively marked.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct RegionStats(pub BTreeMap<String, RegionCounters>);

impl RegionStats {
    pub fn get(&self, event: &str) -> RegionCounters {
        self.0.get(event).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Complete,
    Negative,
    Fire,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Entry {
    tick: u64,
    instance: u32,
    phase: Phase,
    name: String,
    occurrence: usize,
}

#[derive(Debug, Clone)]
struct Record {
    occurrence: Occurrence,
    open: bool,
    cancelled: bool,
}

#[derive(Debug, Clone)]
struct Instance {
    guards: BTreeMap<String, bool>,
    /// Events reachable under this instance's guard values.
    plan: BTreeSet<String>,
    active: BTreeMap<String, usize>,
    blocked: BTreeSet<String>,
    last_negative: Option<u64>,
    tokens: Vec<BTreeMap<String, u32>>,
    pending: usize,
    arrived: bool,
    finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunBound {
    Quiescence,
    Until(u64),
}

pub struct SimState<'a> {
    dynamic: &'a DynamicModel,
    clock: u64,
    budget: u64,
    queue: BinaryHeap<Reverse<Entry>>,
    instances: Vec<Instance>,
    records: Vec<Record>,
    activations: BTreeMap<String, u64>,
    negatives: BTreeMap<String, u64>,
    out_edges: BTreeMap<String, Vec<usize>>,
    joins_by_input: BTreeMap<String, Vec<usize>>,
}

/// Resolves guard values for one instance. Guards on edges leaving the same
/// event form a group: once one of them holds the unassigned rest are false,
/// and when all but one of a group of two or more are false the last holds.
/// Guards left open on edges the instance never reaches count as false.
fn resolve_guards(
    dynamic: &DynamicModel,
    assigned: BTreeMap<String, bool>,
    instance: u32,
) -> Result<BTreeMap<String, bool>, SimError> {
    let chron = &dynamic.chronology;
    let mut groups: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &chron.edges {
        if let Some(g) = &e.guard {
            groups.entry(&e.from).or_default().insert(g);
        }
    }
    let mut values: BTreeMap<&str, Option<bool>> = chron
        .guards()
        .into_iter()
        .map(|g| (g, assigned.get(g).copied()))
        .collect();
    loop {
        let mut changed = false;
        for group in groups.values() {
            let unknown: Vec<&str> = group
                .iter()
                .copied()
                .filter(|g| values[g].is_none())
                .collect();
            if unknown.is_empty() {
                continue;
            }
            if group.iter().any(|g| values[g] == Some(true)) {
                for g in unknown {
                    values.insert(g, Some(false));
                }
                changed = true;
            } else if group.len() >= 2 && unknown.len() == 1 {
                values.insert(unknown[0], Some(true));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // a guard only needs a value if an event the instance can reach uses it
    let partial: BTreeMap<String, bool> = values
        .iter()
        .map(|(g, v)| (g.to_string(), v.unwrap_or(false)))
        .collect();
    let reach = plan(dynamic, &partial);
    for e in &chron.edges {
        if let Some(g) = &e.guard {
            if values[g.as_str()].is_none() && reach.contains(&e.from) {
                return Err(SimError::UnresolvedGuard {
                    guard: g.clone(),
                    instance,
                });
            }
        }
    }
    Ok(partial)
}

fn plan(dynamic: &DynamicModel, guards: &BTreeMap<String, bool>) -> BTreeSet<String> {
    let chron = &dynamic.chronology;
    let mut reach: BTreeSet<String> = chron.start_events().into_iter().map(String::from).collect();
    loop {
        let before = reach.len();
        for e in &chron.edges {
            let open = e.guard.as_ref().is_none_or(|g| guards[g]);
            if open && reach.contains(&e.from) && chron.nodes.contains(&e.to) {
                reach.insert(e.to.clone());
            }
        }
        for j in &chron.joins {
            if j.inputs
                .iter()
                .all(|(i, optional)| *optional || reach.contains(i))
            {
                reach.insert(j.output.clone());
            }
        }
        if reach.len() == before {
            return reach;
        }
    }
}

impl<'a> SimState<'a> {
    /// Sets up instances at the subsistence level: nothing actualized, no
    /// occurrences, clock at zero.
    pub fn init(dynamic: &'a DynamicModel, scenario: &Scenario) -> Result<Self, SimError> {
        let chron = &dynamic.chronology;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let mut instances = Vec::with_capacity(scenario.arrivals.len());
        for i in 0..scenario.arrivals.len() {
            let mut assigned = BTreeMap::new();
            for (name, value) in scenario.guards.for_instance(i).into_iter().flatten() {
                let b = match *value {
                    GuardValue::Bool(b) => b,
                    GuardValue::Probability { p } => {
                        if !(0.0..=1.0).contains(&p) {
                            return Err(SimError::InvalidScenario(format!(
                                "probability {p} for guard \"{name}\" is outside [0, 1]"
                            )));
                        }
                        rng.gen_bool(p)
                    }
                };
                assigned.insert(name.clone(), b);
            }
            let guards = resolve_guards(dynamic, assigned, i as u32)?;
            let plan = plan(dynamic, &guards);
            instances.push(Instance {
                guards,
                plan,
                active: BTreeMap::new(),
                blocked: BTreeSet::new(),
                last_negative: None,
                tokens: vec![BTreeMap::new(); chron.joins.len()],
                pending: 0,
                arrived: false,
                finished: false,
            });
        }
        let mut out_edges: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in chron.edges.iter().enumerate() {
            out_edges.entry(e.from.clone()).or_default().push(i);
        }
        let mut joins_by_input: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (j, join) in chron.joins.iter().enumerate() {
            for (input, _) in &join.inputs {
                let v = joins_by_input.entry(input.clone()).or_default();
                if !v.contains(&j) {
                    v.push(j);
                }
            }
        }
        let mut state = SimState {
            dynamic,
            clock: 0,
            budget: DEFAULT_TICK_BUDGET,
            queue: BinaryHeap::new(),
            instances,
            records: Vec::new(),
            activations: BTreeMap::new(),
            negatives: BTreeMap::new(),
            out_edges,
            joins_by_input,
        };
        let starts: Vec<String> = chron.start_events().into_iter().map(String::from).collect();
        for (i, &arrival) in scenario.arrivals.iter().enumerate() {
            for s in &starts {
                state.schedule(arrival, i as u32, Phase::Fire, s, 0);
            }
            if starts.is_empty() {
                state.instances[i].arrived = true;
                state.instances[i].finished = true;
            }
        }
        Ok(state)
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    /// Resolved guard values of an instance.
    pub fn guards(&self, instance: InstanceId) -> Option<&BTreeMap<String, bool>> {
        self.instances.get(instance.0 as usize).map(|i| &i.guards)
    }

    fn schedule(&mut self, tick: u64, instance: u32, phase: Phase, name: &str, occurrence: usize) {
        self.instances[instance as usize].pending += 1;
        self.queue.push(Reverse(Entry {
            tick,
            instance,
            phase,
            name: name.to_string(),
            occurrence,
        }));
    }

    /// Processes queued work up to and including the next occurrence and
    /// returns it; `None` once the state is quiescent.
    pub fn step(&mut self) -> Option<Occurrence> {
        while let Some(Reverse(entry)) = self.queue.pop() {
            self.clock = entry.tick;
            let idx = entry.instance as usize;
            self.instances[idx].arrived = true;
            self.instances[idx].pending -= 1;
            let produced = match entry.phase {
                Phase::Complete => {
                    self.complete(entry.instance, &entry.name, entry.occurrence);
                    None
                }
                Phase::Negative => Some(self.negative(entry.instance, &entry.name)),
                Phase::Fire => self.fire(entry.instance, &entry.name),
            };
            if self.instances[idx].pending == 0 {
                self.finish(idx);
            }
            if let Some(r) = produced {
                return Some(self.records[r].occurrence.clone());
            }
        }
        None
    }

    /// Steps until quiescence or until the next work lies beyond `bound`.
    pub fn run(&mut self, bound: RunBound) -> Result<Trace, SimError> {
        while let Some(Reverse(next)) = self.queue.peek() {
            if let RunBound::Until(t) = bound {
                if next.tick > t {
                    self.clock = self.clock.max(t);
                    break;
                }
            }
            if next.tick > self.budget {
                return Err(SimError::TickBudgetExceeded(self.budget));
            }
            self.step();
        }
        Ok(self.trace())
    }

    /// Occurrences so far, sorted by start tick, instance and name. Regions
    /// still actualized are reported as ending at the current clock.
    pub fn trace(&self) -> Trace {
        let mut occurrences: Vec<Occurrence> = self
            .records
            .iter()
            .map(|r| {
                let mut o = r.occurrence.clone();
                if r.open {
                    o.end = self.clock.max(o.start);
                }
                o
            })
            .collect();
        occurrences
            .sort_by(|a, b| (a.start, a.instance, &a.name).cmp(&(b.start, b.instance, &b.name)));
        Trace { occurrences }
    }

    pub fn stats(&self) -> RegionStats {
        let mut out = BTreeMap::new();
        for e in &self.dynamic.events {
            let active = self
                .instances
                .iter()
                .filter(|i| i.active.contains_key(&e.name))
                .count() as u64;
            out.insert(
                e.name.clone(),
                RegionCounters {
                    active,
                    activations: self.activations.get(&e.name).copied().unwrap_or(0),
                    negatives: self.negatives.get(&e.name).copied().unwrap_or(0),
                },
            );
        }
        RegionStats(out)
    }

    fn fire(&mut self, instance: u32, name: &str) -> Option<usize> {
        let dynamic = self.dynamic;
        let event = dynamic.event(name).expect("chronology nodes are events");
        let tick = self.clock;
        let inst = &mut self.instances[instance as usize];
        if inst.blocked.contains(name) {
            return None;
        }
        if let Some(&prev) = inst.active.get(name) {
            if event.extended {
                let start = self.records[prev].occurrence.start;
                // re-actualizing an extended region needs a negative in between
                if inst.last_negative.is_some_and(|n| n >= start) {
                    inst.active.remove(name);
                    let r = &mut self.records[prev];
                    r.open = false;
                    r.occurrence.end = tick;
                } else {
                    return None;
                }
            } else {
                let end = self.records[prev].occurrence.end;
                self.schedule(end, instance, Phase::Fire, name, 0);
                return None;
            }
        }
        let idx = self.records.len();
        self.records.push(Record {
            occurrence: Occurrence {
                instance: InstanceId(instance),
                name: name.to_string(),
                start: tick,
                end: tick + event.duration,
                negative: false,
                region: name.to_string(),
            },
            open: event.extended,
            cancelled: false,
        });
        self.instances[instance as usize]
            .active
            .insert(name.to_string(), idx);
        *self.activations.entry(name.to_string()).or_default() += 1;
        self.schedule(tick + event.duration, instance, Phase::Complete, name, idx);
        Some(idx)
    }

    fn complete(&mut self, instance: u32, name: &str, occurrence: usize) {
        if self.records[occurrence].cancelled {
            return;
        }
        let dynamic = self.dynamic;
        let extended = dynamic.event(name).is_some_and(|e| e.extended);
        let tick = self.clock;
        let inst = &mut self.instances[instance as usize];
        if !extended && inst.active.get(name) == Some(&occurrence) {
            inst.active.remove(name);
        }
        let chron = &dynamic.chronology;
        let edges = self.out_edges.get(name).cloned().unwrap_or_default();
        for e in edges {
            let edge = &chron.edges[e];
            let open = edge
                .guard
                .as_ref()
                .is_none_or(|g| self.instances[instance as usize].guards[g]);
            if !open {
                continue;
            }
            let phase = if dynamic.negative(&edge.to).is_some() {
                Phase::Negative
            } else {
                Phase::Fire
            };
            self.schedule(tick, instance, phase, &edge.to, 0);
        }
        let joins = self.joins_by_input.get(name).cloned().unwrap_or_default();
        for j in joins {
            *self.instances[instance as usize].tokens[j]
                .entry(name.to_string())
                .or_default() += 1;
            self.try_join(instance, j);
        }
    }

    fn try_join(&mut self, instance: u32, j: usize) {
        let join = &self.dynamic.chronology.joins[j];
        loop {
            let inst = &mut self.instances[instance as usize];
            let mut required = Vec::new();
            for (input, optional) in &join.inputs {
                let live = inst.plan.contains(input) && !inst.blocked.contains(input);
                if !live && !optional {
                    return;
                }
                if live {
                    required.push(input);
                }
            }
            let ready = required
                .iter()
                .all(|i| inst.tokens[j].get(*i).copied().unwrap_or(0) > 0);
            if !ready {
                return;
            }
            for i in &required {
                *inst.tokens[j].get_mut(*i).unwrap() -= 1;
            }
            let tick = self.clock;
            self.schedule(tick, instance, Phase::Fire, &join.output, 0);
        }
    }

    fn negative(&mut self, instance: u32, name: &str) -> usize {
        let dynamic = self.dynamic;
        let paired = dynamic
            .negative(name)
            .expect("edge target is a negative event")
            .paired
            .clone();
        let tick = self.clock;
        let idx = self.records.len();
        self.records.push(Record {
            occurrence: Occurrence {
                instance: InstanceId(instance),
                name: name.to_string(),
                start: tick,
                end: tick,
                negative: true,
                region: paired.clone(),
            },
            open: false,
            cancelled: false,
        });
        *self.negatives.entry(paired.clone()).or_default() += 1;
        let inst = &mut self.instances[instance as usize];
        inst.blocked.insert(paired.clone());
        inst.last_negative = Some(tick);
        // actualizing the negative potentializes the paired region
        if let Some(active) = inst.active.remove(&paired) {
            let r = &mut self.records[active];
            r.open = false;
            r.cancelled = true;
            r.occurrence.end = r.occurrence.end.min(tick);
        }
        for j in 0..dynamic.chronology.joins.len() {
            self.try_join(instance, j);
        }
        idx
    }

    fn finish(&mut self, idx: usize) {
        let tick = self.clock;
        let inst = &mut self.instances[idx];
        inst.finished = true;
        for (_, occ) in std::mem::take(&mut inst.active) {
            let r = &mut self.records[occ];
            if r.open {
                r.open = false;
                r.occurrence.end = tick.max(r.occurrence.start);
            }
        }
    }
}
