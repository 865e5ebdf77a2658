//! STRIPS-style fluent layer over the tabletop domain and a lazy generator of
//! symbolic plans over actions crossed with specializer indices.
//!
//! Planning states are closed-world fluent sets; the generator enumerates
//! discrete-level solutions in nondecreasing length, lexicographic within a
//! length by per-step (object id, schema order, specializer index).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::worldsim::{ObjId, OpName, Pose2, Surface, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum SymbolicError {
    #[error("step {op}({obj}) not applicable")]
    NotApplicable { op: OpName, obj: ObjId },
    #[error("unknown schema {0}")]
    UnknownSchema(OpName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Predicate {
    HandEmpty,
    Holding,
    OnStart,
    OnGoal,
    ReadyToGrasp,
    ReadyToPlace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Fluent {
    HandEmpty,
    Holding(ObjId),
    OnStart(ObjId),
    OnGoal(ObjId),
    ReadyToGrasp(ObjId),
    ReadyToPlace(ObjId),
}

impl Fluent {
    pub fn predicate(&self) -> Predicate {
        match self {
            Fluent::HandEmpty => Predicate::HandEmpty,
            Fluent::Holding(_) => Predicate::Holding,
            Fluent::OnStart(_) => Predicate::OnStart,
            Fluent::OnGoal(_) => Predicate::OnGoal,
            Fluent::ReadyToGrasp(_) => Predicate::ReadyToGrasp,
            Fluent::ReadyToPlace(_) => Predicate::ReadyToPlace,
        }
    }

    pub fn obj(&self) -> Option<ObjId> {
        match self {
            Fluent::HandEmpty => None,
            Fluent::Holding(o)
            | Fluent::OnStart(o)
            | Fluent::OnGoal(o)
            | Fluent::ReadyToGrasp(o)
            | Fluent::ReadyToPlace(o) => Some(*o),
        }
    }

    fn is_ready(&self) -> bool {
        matches!(self, Fluent::ReadyToGrasp(_) | Fluent::ReadyToPlace(_))
    }
}

/// Closed-world set of fluents: anything not present is false.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanningState {
    pub fluents: BTreeSet<Fluent>,
}

impl PlanningState {
    pub fn new(fluents: impl IntoIterator<Item = Fluent>) -> Self {
        PlanningState { fluents: fluents.into_iter().collect() }
    }

    pub fn contains(&self, f: &Fluent) -> bool {
        self.fluents.contains(f)
    }

    pub fn satisfies(&self, goal: &BTreeSet<Fluent>) -> bool {
        goal.is_subset(&self.fluents)
    }

    pub fn objects(&self) -> Vec<ObjId> {
        let ids: BTreeSet<ObjId> = self.fluents.iter().filter_map(Fluent::obj).collect();
        ids.into_iter().collect()
    }
}

/// Abstraction of a world state into its basis fluents (no Ready* fluents;
/// those are planner bookkeeping introduced by move actions).
pub fn initial_planning_state(w: &WorldState) -> PlanningState {
    let mut fl = BTreeSet::new();
    match w.held {
        Some(h) => {
            fl.insert(Fluent::Holding(h));
        }
        None => {
            fl.insert(Fluent::HandEmpty);
        }
    }
    for o in &w.objects {
        match o.surface {
            Surface::StartTable => {
                fl.insert(Fluent::OnStart(o.spec.id));
            }
            Surface::GoalTable => {
                fl.insert(Fluent::OnGoal(o.spec.id));
            }
            Surface::InHand => {}
        }
    }
    PlanningState { fluents: fl }
}

/// Goal of the standard task: everything on the goal table.
pub fn all_on_goal(ids: &[ObjId]) -> BTreeSet<Fluent> {
    ids.iter().map(|&o| Fluent::OnGoal(o)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: OpName,
    pub discrete_arity: usize,
    pub continuous_arity: usize,
}

impl ActionSchema {
    pub fn pre(&self, o: ObjId) -> Vec<Fluent> {
        match self.name {
            OpName::MoveToGrasp => vec![Fluent::HandEmpty, Fluent::OnStart(o)],
            OpName::Grasp => vec![Fluent::HandEmpty, Fluent::ReadyToGrasp(o)],
            OpName::MoveToPlace => vec![Fluent::Holding(o)],
            OpName::Place => vec![Fluent::Holding(o), Fluent::ReadyToPlace(o)],
        }
    }

    pub fn eff_plus(&self, o: ObjId) -> Vec<Fluent> {
        match self.name {
            OpName::MoveToGrasp => vec![Fluent::ReadyToGrasp(o)],
            OpName::Grasp => vec![Fluent::Holding(o)],
            OpName::MoveToPlace => vec![Fluent::ReadyToPlace(o)],
            OpName::Place => vec![Fluent::OnGoal(o), Fluent::HandEmpty],
        }
    }

    pub fn eff_minus(&self, o: ObjId) -> Vec<Fluent> {
        match self.name {
            OpName::MoveToGrasp | OpName::MoveToPlace => vec![],
            OpName::Grasp => vec![Fluent::HandEmpty, Fluent::OnStart(o), Fluent::ReadyToGrasp(o)],
            OpName::Place => vec![Fluent::Holding(o), Fluent::ReadyToPlace(o)],
        }
    }

    /// Move actions clear every other Ready* fluent: the Ready flags are
    /// mutually exclusive snapshots of where the ee last moved.
    pub fn clears_other_ready(&self) -> bool {
        matches!(self.name, OpName::MoveToGrasp | OpName::MoveToPlace)
    }
}

#[derive(Debug, Clone)]
pub struct Domain {
    schemas: Vec<ActionSchema>,
}

impl Domain {
    pub fn schemas(&self) -> &[ActionSchema] {
        &self.schemas
    }

    pub fn schema(&self, op: OpName) -> &ActionSchema {
        self.schemas.iter().find(|s| s.name == op).expect("domain covers all ops")
    }

    /// Position of a schema in the canonical domain order.
    pub fn schema_rank(&self, op: OpName) -> usize {
        self.schemas.iter().position(|s| s.name == op).expect("domain covers all ops")
    }
}

/// The four tabletop operators, each over one object and one target pose.
pub fn build_tabletop_domain() -> Domain {
    Domain {
        schemas: OpName::ALL
            .iter()
            .map(|&name| ActionSchema { name, discrete_arity: 1, continuous_arity: 1 })
            .collect(),
    }
}

/// One step of a plan skeleton: operator, object, specializer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SkeletonStep {
    pub op: OpName,
    pub obj: ObjId,
    pub spec: usize,
}

/// A skeleton step with its continuous parameter bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub op: OpName,
    pub obj: ObjId,
    pub spec: usize,
    pub theta: Pose2,
}

impl PlanStep {
    pub fn skeleton(&self) -> SkeletonStep {
        SkeletonStep { op: self.op, obj: self.obj, spec: self.spec }
    }
}

pub fn applicable(domain: &Domain, state: &PlanningState, step: &SkeletonStep) -> bool {
    domain.schema(step.op).pre(step.obj).iter().all(|f| state.contains(f))
}

pub fn successor(domain: &Domain, state: &PlanningState, step: &SkeletonStep) -> Result<PlanningState, SymbolicError> {
    if !applicable(domain, state, step) {
        return Err(SymbolicError::NotApplicable { op: step.op, obj: step.obj });
    }
    let schema = domain.schema(step.op);
    let mut fl = state.fluents.clone();
    for f in schema.eff_minus(step.obj) {
        fl.remove(&f);
    }
    let plus = schema.eff_plus(step.obj);
    if schema.clears_other_ready() {
        fl.retain(|f| !f.is_ready() || plus.contains(f));
    }
    for f in plus {
        fl.insert(f);
    }
    Ok(PlanningState { fluents: fl })
}

/// Candidate pruned from the stream: (schema, object, specializer, 1-based step).
pub type BlockEntry = (OpName, ObjId, usize, usize);

/// Lazy, ordered stream of skeleton candidates (specializer indices bound,
/// continuous parameters not). Yields every discrete-level solution up to
/// `max_len`, in nondecreasing length; within a length, depth-first in
/// per-step key order (object id, schema order, specializer index). Never
/// yields duplicates; deterministic.
pub struct PlanGen<'a> {
    domain: &'a Domain,
    pool_sizes: BTreeMap<OpName, usize>,
    init: PlanningState,
    goal: BTreeSet<Fluent>,
    objects: Vec<ObjId>,
    blocklist: BTreeSet<BlockEntry>,
    /// Exact action distance to a goal-satisfying state, per reachable state.
    dist_to_goal: BTreeMap<PlanningState, usize>,
    max_len: usize,
    target_len: usize,
    stack: Vec<Frame>,
    done: bool,
}

struct Frame {
    state: PlanningState,
    children: Vec<SkeletonStep>,
    next_child: usize,
}

impl<'a> PlanGen<'a> {
    pub fn new(
        domain: &'a Domain,
        pool_sizes: BTreeMap<OpName, usize>,
        init: &PlanningState,
        goal: BTreeSet<Fluent>,
    ) -> Self {
        let objects = init.objects();
        let dist_to_goal = goal_distances(domain, init, &goal, &objects);
        let min_len = dist_to_goal.get(init).copied();
        let max_len = min_len.map(|l| l + 4).unwrap_or(0);
        PlanGen {
            domain,
            pool_sizes,
            init: init.clone(),
            goal,
            objects,
            blocklist: BTreeSet::new(),
            dist_to_goal,
            max_len,
            target_len: min_len.unwrap_or(0),
            stack: Vec::new(),
            done: min_len.is_none(),
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn with_blocklist(mut self, blocklist: impl IntoIterator<Item = BlockEntry>) -> Self {
        self.blocklist = blocklist.into_iter().collect();
        self
    }

    /// Prune a grounded choice at a step (1-based) from all future yields.
    pub fn block(&mut self, entry: BlockEntry) {
        self.blocklist.insert(entry);
    }

    fn children_of(&self, state: &PlanningState, depth: usize) -> Vec<SkeletonStep> {
        let remaining = self.target_len - depth;
        if remaining == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for &obj in &self.objects {
            for schema in self.domain.schemas() {
                let step0 = SkeletonStep { op: schema.name, obj, spec: 0 };
                if !applicable(self.domain, state, &step0) {
                    continue;
                }
                let succ = successor(self.domain, state, &step0).expect("applicable");
                match self.dist_to_goal.get(&succ) {
                    Some(&d) if d <= remaining - 1 => {}
                    _ => continue,
                }
                let n = self.pool_sizes.get(&schema.name).copied().unwrap_or(1);
                for spec in 0..n {
                    if self.blocklist.contains(&(schema.name, obj, spec, depth + 1)) {
                        continue;
                    }
                    out.push(SkeletonStep { op: schema.name, obj, spec });
                }
            }
        }
        out
    }

    /// Pop exhausted frames; when the round at `target_len` is spent, advance
    /// the length (the stack is left empty for `next` to reseed).
    fn backtrack(&mut self) {
        self.stack.pop();
        while let Some(top) = self.stack.last() {
            if top.next_child < top.children.len() {
                return;
            }
            self.stack.pop();
        }
        if self.target_len < self.max_len {
            self.target_len += 1;
        } else {
            self.done = true;
        }
    }
}

impl Iterator for PlanGen<'_> {
    type Item = Vec<SkeletonStep>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            if self.stack.is_empty() {
                if self.target_len > self.max_len {
                    self.done = true;
                    break;
                }
                let children = self.children_of(&self.init.clone(), 0);
                self.stack.push(Frame { state: self.init.clone(), children, next_child: 0 });
            }
            // Depth == stack.len() - 1; leaf when depth == target_len.
            if self.stack.len() == self.target_len + 1 {
                let achieved = self.stack.last().expect("nonempty").state.satisfies(&self.goal);
                let steps: Vec<SkeletonStep> =
                    self.stack[..self.target_len].iter().map(|f| f.children[f.next_child - 1]).collect();
                self.backtrack();
                if achieved {
                    return Some(steps);
                }
                continue;
            }
            let frame = self.stack.last_mut().expect("nonempty stack");
            if frame.next_child < frame.children.len() {
                let step = frame.children[frame.next_child];
                frame.next_child += 1;
                let state = successor(self.domain, &frame.state, &step).expect("applicable child");
                let depth = self.stack.len();
                let children = self.children_of(&state, depth);
                self.stack.push(Frame { state, children, next_child: 0 });
            } else {
                self.backtrack();
            }
        }
        None
    }
}

/// Exact distance (number of actions) from every reachable state to the
/// nearest goal-satisfying state; absent key means the goal is unreachable
/// from that state. The spec-index dimension is irrelevant symbolically.
fn goal_distances(
    domain: &Domain,
    init: &PlanningState,
    goal: &BTreeSet<Fluent>,
    objects: &[ObjId],
) -> BTreeMap<PlanningState, usize> {
    // Forward closure from init.
    let mut seen: BTreeSet<PlanningState> = BTreeSet::new();
    let mut frontier = VecDeque::new();
    seen.insert(init.clone());
    frontier.push_back(init.clone());
    let mut edges: BTreeMap<PlanningState, Vec<PlanningState>> = BTreeMap::new();
    while let Some(state) = frontier.pop_front() {
        let mut succs = Vec::new();
        for &obj in objects {
            for schema in domain.schemas() {
                let step = SkeletonStep { op: schema.name, obj, spec: 0 };
                if applicable(domain, &state, &step) {
                    let next = successor(domain, &state, &step).expect("applicable");
                    if seen.insert(next.clone()) {
                        frontier.push_back(next.clone());
                    }
                    succs.push(next);
                }
            }
        }
        edges.insert(state, succs);
    }
    // Backward BFS from goal-satisfying states over reversed edges.
    let mut rev: BTreeMap<&PlanningState, Vec<&PlanningState>> = BTreeMap::new();
    for (from, tos) in &edges {
        for to in tos {
            rev.entry(to).or_default().push(from);
        }
    }
    let mut dist: BTreeMap<PlanningState, usize> = BTreeMap::new();
    let mut frontier = VecDeque::new();
    for state in seen.iter() {
        if state.satisfies(goal) {
            dist.insert(state.clone(), 0);
            frontier.push_back(state.clone());
        }
    }
    while let Some(state) = frontier.pop_front() {
        let d = dist[&state];
        if let Some(preds) = rev.get(&state) {
            let preds: Vec<PlanningState> = preds.iter().map(|p| (*p).clone()).collect();
            for p in preds {
                if !dist.contains_key(&p) {
                    dist.insert(p.clone(), d + 1);
                    frontier.push_back(p);
                }
            }
        }
    }
    dist
}
