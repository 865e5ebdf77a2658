//! The Plan algorithm over a parameter strategy, and the random-sampling
//! backtracking baseline sharing the same success contract and accounting.

use std::collections::BTreeSet;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::losses::{register_domain_losses, rollout, PredicateLossRegistry};
use crate::motion::{motion_plans_exist, MotionBudget, MotionResult};
use crate::specializer::{random_sampler, ParamStrategy};
use crate::symbolic::{initial_planning_state, successor, Domain, Fluent, PlanGen, PlanStep, SkeletonStep};
use crate::worldsim::{apply_action, ActionInstance, OpName, WorldState};

use super::LearnError;

#[derive(Debug, Clone, Copy)]
pub struct PlanBudget {
    /// Maximum candidates (skeleton + specializer assignment) to consider.
    pub candidates: usize,
    pub motion: MotionBudget,
    /// Optional wall-clock deadline; the candidate budget is authoritative
    /// for tests, the deadline exists for realistic timeout runs.
    pub deadline: Option<Instant>,
}

impl Default for PlanBudget {
    fn default() -> Self {
        PlanBudget { candidates: 64, motion: MotionBudget::default(), deadline: None }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: Vec<PlanStep>,
    pub motion: Vec<MotionResult>,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub solution: Option<Solution>,
    /// Candidates considered (bound and scored), including any winner.
    pub search_effort: usize,
    /// Candidates that reached motion checking.
    pub motion_attempts: usize,
}

impl PlanOutcome {
    pub fn solved(&self) -> bool {
        self.solution.is_some()
    }
}

/// Iterate symbolic candidates, bind θ̄ via the strategy, and return the first
/// plan with zero trajectory loss and feasible motion. Exhaustion is a result,
/// not an error.
pub fn plan(
    domain: &Domain,
    w0: &WorldState,
    goal: &BTreeSet<Fluent>,
    strategy: &dyn ParamStrategy,
    registry: &PredicateLossRegistry,
    budget: &PlanBudget,
    rng: &mut ChaCha8Rng,
) -> Result<PlanOutcome, LearnError> {
    let init = initial_planning_state(w0);
    let gen = PlanGen::new(domain, strategy.pool_sizes(), &init, goal.clone());
    let mut effort = 0usize;
    let mut motion_attempts = 0usize;
    for skeleton in gen {
        if effort >= budget.candidates {
            break;
        }
        if let Some(deadline) = budget.deadline {
            if Instant::now() >= deadline {
                break;
            }
        }
        effort += 1;
        let roll = rollout(strategy, registry, domain, w0, &skeleton)?;
        if roll.total != 0.0 {
            continue;
        }
        motion_attempts += 1;
        let (feasible, motion) = motion_plans_exist(w0, &roll.bound, &budget.motion, rng);
        if feasible {
            return Ok(PlanOutcome {
                solution: Some(Solution { plan: roll.bound, motion }),
                search_effort: effort,
                motion_attempts,
            });
        }
    }
    Ok(PlanOutcome { solution: None, search_effort: effort, motion_attempts })
}

/// Depth-first backtracking baseline: bind each step with the conditional
/// random sampler (one draw per step), reject the candidate on any nonzero
/// step residual, and motion-check complete bindings. Skeletons are visited
/// round-robin so early orders do not consume the entire budget.
pub fn random_backtrack_plan(
    domain: &Domain,
    w0: &WorldState,
    goal: &BTreeSet<Fluent>,
    budget: &PlanBudget,
    rng: &mut ChaCha8Rng,
) -> Result<PlanOutcome, LearnError> {
    const BINDINGS_PER_SKELETON_ROUND: usize = 4;
    let registry = register_domain_losses();
    let init = initial_planning_state(w0);
    let sizes = OpName::ALL.iter().map(|&op| (op, 1usize)).collect();
    let n_skeletons = budget.candidates.div_ceil(BINDINGS_PER_SKELETON_ROUND).max(1);
    let skeletons: Vec<Vec<SkeletonStep>> =
        PlanGen::new(domain, sizes, &init, goal.clone()).take(n_skeletons).collect();
    if skeletons.is_empty() {
        return Ok(PlanOutcome { solution: None, search_effort: 0, motion_attempts: 0 });
    }
    let mut effort = 0usize;
    let mut motion_attempts = 0usize;
    'rounds: for _round in 0..budget.candidates {
        for skeleton in &skeletons {
            if effort >= budget.candidates {
                break 'rounds;
            }
            if let Some(deadline) = budget.deadline {
                if Instant::now() >= deadline {
                    break 'rounds;
                }
            }
            effort += 1;
            if let Some(bound) = bind_randomly(domain, &registry, w0, skeleton, rng)? {
                motion_attempts += 1;
                let (feasible, motion) = motion_plans_exist(w0, &bound, &budget.motion, rng);
                if feasible {
                    return Ok(PlanOutcome {
                        solution: Some(Solution { plan: bound, motion }),
                        search_effort: effort,
                        motion_attempts,
                    });
                }
            }
        }
    }
    Ok(PlanOutcome { solution: None, search_effort: effort, motion_attempts })
}

/// Sample θ̄ for every step; abandon on the first step whose positive-effect
/// residuals are nonzero.
fn bind_randomly(
    domain: &Domain,
    registry: &PredicateLossRegistry,
    w0: &WorldState,
    skeleton: &[SkeletonStep],
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<PlanStep>>, LearnError> {
    let mut w = w0.clone();
    let mut bound = Vec::with_capacity(skeleton.len());
    for (i, step) in skeleton.iter().enumerate() {
        let theta = random_sampler(&w, step.obj, step.op, rng)?;
        for fluent in domain.schema(step.op).eff_plus(step.obj) {
            let f = registry.get(fluent.predicate())?;
            let (value, _) = f(&w, step.obj, &theta)
                .map_err(|source| LearnError::Loss(crate::losses::LossError::World { step: i + 1, source }))?;
            if value != 0.0 {
                return Ok(None);
            }
        }
        w = apply_action(&w, &ActionInstance { op: step.op, obj: step.obj, theta })
            .map_err(|source| LearnError::Loss(crate::losses::LossError::World { step: i + 1, source }))?;
        bound.push(PlanStep { op: step.op, obj: step.obj, spec: step.spec, theta });
    }
    Ok(Some(bound))
}

/// Replay a claimed solution independently: symbolic applicability, world
/// transitions, accumulated legality, goal achievement, and returned motion
/// paths re-validated segment by segment.
pub fn validate_solution(domain: &Domain, w0: &WorldState, goal: &BTreeSet<Fluent>, solution: &Solution) -> bool {
    use crate::motion::{filtered_world, held_footprint, segment_clear};
    let mut sym = initial_planning_state(w0);
    let mut w = w0.clone();
    if solution.motion.len() != solution.plan.len() {
        return false;
    }
    for (step, motion) in solution.plan.iter().zip(solution.motion.iter()) {
        let sk = step.skeleton();
        sym = match successor(domain, &sym, &sk) {
            Ok(next) => next,
            Err(_) => return false,
        };
        if matches!(step.op, OpName::MoveToGrasp | OpName::MoveToPlace) {
            if !motion.feasible {
                return false;
            }
            let footprint = held_footprint(&w);
            let exempt = (step.op == OpName::MoveToGrasp).then_some(step.obj);
            let query_world = filtered_world(&w, exempt, footprint);
            if motion.path.first() != Some(&w.ee_conf) || motion.path.last() != Some(&step.theta) {
                return false;
            }
            for pair in motion.path.windows(2) {
                if !segment_clear(&query_world, &pair[0], &pair[1], footprint) {
                    return false;
                }
            }
        }
        w = match apply_action(&w, &ActionInstance { op: step.op, obj: step.obj, theta: step.theta }) {
            Ok(next) => next,
            Err(_) => return false,
        };
    }
    crate::worldsim::solved(&w) && sym.satisfies(goal)
}
