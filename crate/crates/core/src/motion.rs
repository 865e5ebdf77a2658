//! Collision-free ee path search with a bounded-effort feasibility contract.
//!
//! Queries are pure functions of (world, endpoints, budget, seed); restart r
//! always uses the same RNG stream regardless of the restart budget, so
//! enlarging the budget never flips a feasible query to infeasible.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::symbolic::PlanStep;
use crate::worldsim::{apply_action, ActionInstance, ObjId, OpName, Pose2, Surface, WorldState, EE_FOOTPRINT, WORKSPACE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MotionBudget {
    pub max_restarts: usize,
    pub max_nodes_per_tree: usize,
    pub step_size: f64,
    pub goal_tol: f64,
}

impl Default for MotionBudget {
    fn default() -> Self {
        // Sized so an infeasible query costs well under 10 ms.
        MotionBudget { max_restarts: 3, max_nodes_per_tree: 500, step_size: 0.2, goal_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionResult {
    pub path: Vec<Pose2>,
    pub feasible: bool,
}

impl MotionResult {
    fn infeasible_line(c1: Pose2, c2: Pose2) -> Self {
        MotionResult { path: vec![c1, c2], feasible: false }
    }
}

const SHORTCUT_ATTEMPTS: usize = 50;

fn point_clear(w: &WorldState, p: &Pose2, footprint: f64) -> bool {
    w.objects
        .iter()
        .filter(|o| o.surface != Surface::InHand)
        .all(|o| p.dist(&o.pose) >= footprint + o.spec.radius)
}

/// True iff the swept disc along c1→c2 intersects no non-held object,
/// sampled at half the default step size.
pub fn segment_clear(w: &WorldState, c1: &Pose2, c2: &Pose2, footprint: f64) -> bool {
    segment_clear_res(w, c1, c2, footprint, MotionBudget::default().step_size / 2.0)
}

fn segment_clear_res(w: &WorldState, c1: &Pose2, c2: &Pose2, footprint: f64, res: f64) -> bool {
    let len = c1.dist(c2);
    let n = (len / res).ceil().max(1.0) as usize;
    for i in 0..=n {
        let s = i as f64 / n as f64;
        let p = Pose2::new(c1.x + s * (c2.x - c1.x), c1.y + s * (c2.y - c1.y));
        if !point_clear(w, &p, footprint) {
            return false;
        }
    }
    true
}

/// Split a→b into pieces no longer than `step` and collision-check each piece
/// with the standard resolution. Returns all waypoints including `a` and `b`.
fn checked_pieces(w: &WorldState, a: &Pose2, b: &Pose2, footprint: f64, budget: &MotionBudget) -> Option<Vec<Pose2>> {
    let len = a.dist(b);
    let n = (len / budget.step_size).ceil().max(1.0) as usize;
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(*a);
    for i in 1..n {
        let s = i as f64 / n as f64;
        pts.push(Pose2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)));
    }
    pts.push(*b);
    for pair in pts.windows(2) {
        if !segment_clear_res(w, &pair[0], &pair[1], footprint, budget.step_size / 2.0) {
            return None;
        }
    }
    Some(pts)
}

struct Tree {
    nodes: Vec<Pose2>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: Pose2) -> Self {
        Tree { nodes: vec![root], parents: vec![0] }
    }

    fn nearest(&self, q: &Pose2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.dist(q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Pose2> {
        let mut out = vec![self.nodes[i]];
        while self.parents[i] != i {
            i = self.parents[i];
            out.push(self.nodes[i]);
        }
        out
    }
}

enum Extend {
    Added(usize),
    Reached(usize),
    Blocked,
}

fn extend(tree: &mut Tree, w: &WorldState, q: &Pose2, footprint: f64, budget: &MotionBudget) -> Extend {
    let near = tree.nearest(q);
    let from = tree.nodes[near];
    let d = from.dist(q);
    let target = if d <= budget.step_size {
        *q
    } else {
        Pose2::new(from.x + budget.step_size * (q.x - from.x) / d, from.y + budget.step_size * (q.y - from.y) / d)
    };
    if !segment_clear_res(w, &from, &target, footprint, budget.step_size / 2.0) {
        return Extend::Blocked;
    }
    tree.nodes.push(target);
    tree.parents.push(near);
    let idx = tree.nodes.len() - 1;
    if target.dist(q) <= budget.goal_tol {
        Extend::Reached(idx)
    } else {
        Extend::Added(idx)
    }
}

/// Greedy connect: keep stepping toward `q` until reached, blocked, or the
/// node cap is hit.
fn connect(tree: &mut Tree, w: &WorldState, q: &Pose2, footprint: f64, budget: &MotionBudget) -> Option<usize> {
    loop {
        if tree.nodes.len() >= budget.max_nodes_per_tree {
            return None;
        }
        match extend(tree, w, q, footprint, budget) {
            Extend::Reached(i) => return Some(i),
            Extend::Added(_) => {}
            Extend::Blocked => return None,
        }
    }
}

/// Bidirectional RRT-Connect between ee configurations. On success the path is
/// shortcut-smoothed; after `max_restarts` failed attempts the straight-line
/// result is returned with `feasible: false`. Deterministic given the rng.
pub fn rrt_connect<R: Rng>(
    w: &WorldState,
    c1: &Pose2,
    c2: &Pose2,
    footprint: f64,
    budget: &MotionBudget,
    rng: &mut R,
) -> MotionResult {
    let base_seed = rng.next_u64();
    if !WORKSPACE.contains(c1) || !WORKSPACE.contains(c2) {
        return MotionResult::infeasible_line(*c1, *c2);
    }
    if !point_clear(w, c1, footprint) || !point_clear(w, c2, footprint) {
        return MotionResult::infeasible_line(*c1, *c2);
    }
    // Trivial query: the straight line already works.
    if let Some(path) = checked_pieces(w, c1, c2, footprint, budget) {
        return MotionResult { path, feasible: true };
    }
    for restart in 0..budget.max_restarts {
        let mut rrt_rng = ChaCha8Rng::seed_from_u64(base_seed);
        rrt_rng.set_stream(restart as u64);
        if let Some(path) = grow_bidirectional(w, c1, c2, footprint, budget, &mut rrt_rng) {
            let path = shortcut_smooth(w, path, footprint, budget, &mut rrt_rng);
            return MotionResult { path, feasible: true };
        }
    }
    MotionResult::infeasible_line(*c1, *c2)
}

fn grow_bidirectional<R: Rng>(
    w: &WorldState,
    c1: &Pose2,
    c2: &Pose2,
    footprint: f64,
    budget: &MotionBudget,
    rng: &mut R,
) -> Option<Vec<Pose2>> {
    let mut ta = Tree::new(*c1);
    let mut tb = Tree::new(*c2);
    let mut a_is_start = true;
    for _ in 0..budget.max_nodes_per_tree * 2 {
        if ta.nodes.len() >= budget.max_nodes_per_tree || tb.nodes.len() >= budget.max_nodes_per_tree {
            break;
        }
        let sample = Pose2::new(
            rng.random_range(WORKSPACE.xmin..WORKSPACE.xmax),
            rng.random_range(WORKSPACE.ymin..WORKSPACE.ymax),
        );
        match extend(&mut ta, w, &sample, footprint, budget) {
            Extend::Blocked => {}
            Extend::Added(i) | Extend::Reached(i) => {
                let q_new = ta.nodes[i];
                if let Some(j) = connect(&mut tb, w, &q_new, footprint, budget) {
                    // Both trees contain the exact join point (extend lands
                    // exactly on the target inside one step).
                    let mut start_half = ta.path_to_root(i);
                    start_half.reverse(); // root_a -> i
                    let mut goal_half = tb.path_to_root(j); // j -> root_b
                    if !a_is_start {
                        std::mem::swap(&mut start_half, &mut goal_half);
                        start_half.reverse(); // root_b -> j
                        goal_half.reverse(); // i -> root_a
                    }
                    start_half.extend(goal_half.into_iter().skip(1));
                    return Some(start_half);
                }
            }
        }
        std::mem::swap(&mut ta, &mut tb);
        a_is_start = !a_is_start;
    }
    None
}

/// One deterministic global shortcut attempt, then random shortcuts. Spliced
/// segments are re-subdivided so consecutive waypoints stay within step size.
fn shortcut_smooth<R: Rng>(
    w: &WorldState,
    mut path: Vec<Pose2>,
    footprint: f64,
    budget: &MotionBudget,
    rng: &mut R,
) -> Vec<Pose2> {
    if let Some(direct) = checked_pieces(w, &path[0], &path[path.len() - 1], footprint, budget) {
        return direct;
    }
    for _ in 0..SHORTCUT_ATTEMPTS {
        let n = path.len();
        if n < 3 {
            break;
        }
        let i = rng.random_range(0..n - 2);
        let j = rng.random_range(i + 2..n);
        if let Some(pieces) = checked_pieces(w, &path[i], &path[j], footprint, budget) {
            let mut new_path = path[..i].to_vec();
            new_path.extend(pieces);
            new_path.extend(path[j + 1..].iter().copied());
            path = new_path;
        }
    }
    path
}

/// Replay a bound plan through the world and check that collision-free paths
/// exist between consecutive ee configurations. The footprint grows to the
/// held object's radius while holding. Per-query obstacle exemptions: the
/// target of a moveToGrasp (its legal grasp poses sit within the combined
/// footprint) and any object already in contact with the start configuration.
pub fn motion_plans_exist<R: Rng>(
    w0: &WorldState,
    plan: &[PlanStep],
    budget: &MotionBudget,
    rng: &mut R,
) -> (bool, Vec<MotionResult>) {
    let mut results = Vec::with_capacity(plan.len());
    let mut w = w0.clone();
    for step in plan {
        match step.op {
            OpName::MoveToGrasp | OpName::MoveToPlace => {
                let footprint = held_footprint(&w);
                let exempt_target = (step.op == OpName::MoveToGrasp).then_some(step.obj);
                let query_world = filtered_world(&w, exempt_target, footprint);
                let res = rrt_connect(&query_world, &w.ee_conf, &step.theta, footprint, budget, rng);
                let ok = res.feasible;
                results.push(res);
                if !ok {
                    return (false, results);
                }
            }
            OpName::Grasp | OpName::Place => {
                // The ee does not move; trivially feasible.
                results.push(MotionResult { path: vec![w.ee_conf], feasible: true });
            }
        }
        w = match apply_action(&w, &ActionInstance { op: step.op, obj: step.obj, theta: step.theta }) {
            Ok(next) => next,
            Err(_) => return (false, results),
        };
    }
    (true, results)
}

pub fn held_footprint(w: &WorldState) -> f64 {
    match w.held.and_then(|h| w.object(h).ok()) {
        Some(o) => EE_FOOTPRINT.max(o.spec.radius),
        None => EE_FOOTPRINT,
    }
}

/// Drop the exempt target object and anything already overlapping the current
/// ee disc from the obstacle set for one query.
pub fn filtered_world(w: &WorldState, exempt: Option<ObjId>, footprint: f64) -> WorldState {
    let mut q = w.clone();
    q.objects.retain(|o| {
        if Some(o.spec.id) == exempt {
            return false;
        }
        if o.surface == Surface::InHand {
            return true; // already ignored by collision checks
        }
        w.ee_conf.dist(&o.pose) >= footprint + o.spec.radius
    });
    q
}
