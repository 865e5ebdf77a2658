//! Predicate losses and the trajectory loss, with gradients into specializer
//! weights.
//!
//! For each step j of a plan, every positive-effect fluent contributes a
//! residual evaluated at θ̄_j against the pre-action state s_{j-1} (the state
//! the action executes in; identical to the post-state evaluation for move
//! ops, and the only state where grasp/place residual preconditions hold).
//! Gradients stop at the world state: θ̄_j is differentiated, s_{j-1} is a
//! constant.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::specializer::{ParamStrategy, SpecError, SpecializerPool};
use crate::symbolic::{
    applicable, initial_planning_state, successor, Domain, Fluent, PlanStep, Predicate, SkeletonStep,
};
use crate::worldsim::{
    apply_action, grasp_residual_grad, place_region_residual_grad, place_residual_grad, ActionInstance, ObjId, Pose2,
    WorldError, WorldState,
};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("no loss registered for predicate {0:?}")]
    Unregistered(Predicate),
    #[error("plan not applicable at step {step}: {op}({obj})")]
    NotApplicable { step: usize, op: crate::worldsim::OpName, obj: ObjId },
    #[error("world error at step {step}: {source}")]
    World {
        step: usize,
        #[source]
        source: WorldError,
    },
    #[error("specializer error at step {step}: {source}")]
    Spec {
        step: usize,
        #[source]
        source: SpecError,
    },
}

/// A differentiable residual of (object args, θ, pre-action world state):
/// value plus gradient with respect to θ.
pub type ResidualFn = fn(&WorldState, ObjId, &Pose2) -> Result<(f64, [f64; 2]), WorldError>;

pub struct PredicateLossRegistry {
    map: BTreeMap<Predicate, ResidualFn>,
}

fn const_zero(_w: &WorldState, _o: ObjId, _t: &Pose2) -> Result<(f64, [f64; 2]), WorldError> {
    Ok((0.0, [0.0, 0.0]))
}

fn grasp_loss(w: &WorldState, o: ObjId, t: &Pose2) -> Result<(f64, [f64; 2]), WorldError> {
    grasp_residual_grad(w, o, t)
}

fn place_loss(w: &WorldState, o: ObjId, t: &Pose2) -> Result<(f64, [f64; 2]), WorldError> {
    place_residual_grad(w, o, t)
}

fn place_region_loss(w: &WorldState, o: ObjId, t: &Pose2) -> Result<(f64, [f64; 2]), WorldError> {
    place_region_residual_grad(w, o, t)
}

/// Loss functions for every positive-effect predicate of the tabletop domain:
/// ReadyToGrasp and Holding score the grasp residual at θ, ReadyToPlace the
/// relaxed (region-only) placement residual, OnGoal the full placement
/// residual, and HandEmpty (a purely discrete effect) is constant zero.
pub fn register_domain_losses() -> PredicateLossRegistry {
    let mut map: BTreeMap<Predicate, ResidualFn> = BTreeMap::new();
    map.insert(Predicate::ReadyToGrasp, grasp_loss);
    map.insert(Predicate::Holding, grasp_loss);
    map.insert(Predicate::ReadyToPlace, place_region_loss);
    map.insert(Predicate::OnGoal, place_loss);
    map.insert(Predicate::HandEmpty, const_zero);
    PredicateLossRegistry { map }
}

impl PredicateLossRegistry {
    pub fn get(&self, p: Predicate) -> Result<ResidualFn, LossError> {
        self.map.get(&p).copied().ok_or(LossError::Unregistered(p))
    }

    pub fn covers(&self, p: Predicate) -> bool {
        self.map.contains_key(&p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepLoss {
    pub step: usize,
    pub fluent: Fluent,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLossReport {
    pub total: f64,
    pub per_step: Vec<StepLoss>,
    /// Aligned to the pool's flat weight vector; zero outside specializers
    /// used by the plan.
    pub grad_w: Vec<f64>,
}

/// A skeleton rolled forward through the world with θ̄ bound by a strategy.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub bound: Vec<PlanStep>,
    /// s_0 .. s_k.
    pub states: Vec<WorldState>,
    pub total: f64,
    pub per_step: Vec<StepLoss>,
}

impl Rollout {
    pub fn final_state(&self) -> &WorldState {
        self.states.last().expect("at least s_0")
    }
}

/// Bind θ̄ step by step via `strategy` while applying optimistic transitions,
/// scoring every positive effect's residual in the pre-action state. Checks
/// symbolic applicability along the way.
pub fn rollout(
    strategy: &dyn ParamStrategy,
    registry: &PredicateLossRegistry,
    domain: &Domain,
    w0: &WorldState,
    skeleton: &[SkeletonStep],
) -> Result<Rollout, LossError> {
    let k_max = skeleton.len().max(1);
    let mut states = Vec::with_capacity(skeleton.len() + 1);
    states.push(w0.clone());
    let mut sym = initial_planning_state(w0);
    let mut bound = Vec::with_capacity(skeleton.len());
    let mut per_step = Vec::new();
    let mut total = 0.0;
    for (i, step) in skeleton.iter().enumerate() {
        let j = i + 1;
        if !applicable(domain, &sym, step) {
            return Err(LossError::NotApplicable { step: j, op: step.op, obj: step.obj });
        }
        let pre = states.last().expect("pre-state").clone();
        let theta = strategy
            .propose(step.op, step.spec, &pre, step.obj, j, k_max)
            .map_err(|source| LossError::Spec { step: j, source })?;
        for fluent in domain.schema(step.op).eff_plus(step.obj) {
            let f = registry.get(fluent.predicate())?;
            let (value, _) = f(&pre, step.obj, &theta).map_err(|source| LossError::World { step: j, source })?;
            total += value;
            per_step.push(StepLoss { step: j, fluent, value });
        }
        let next = apply_action(&pre, &ActionInstance { op: step.op, obj: step.obj, theta })
            .map_err(|source| LossError::World { step: j, source })?;
        sym = successor(domain, &sym, step).expect("checked applicable");
        bound.push(PlanStep { op: step.op, obj: step.obj, spec: step.spec, theta });
        states.push(next);
    }
    Ok(Rollout { bound, states, total, per_step })
}

/// Trajectory loss of a skeleton-with-indices under a neural pool, with the
/// gradient backpropagated through each step's θ̄_j only.
pub fn trajectory_loss(
    pool: &SpecializerPool,
    registry: &PredicateLossRegistry,
    domain: &Domain,
    w0: &WorldState,
    skeleton: &[SkeletonStep],
) -> Result<TrajectoryLossReport, LossError> {
    let roll = rollout(pool, registry, domain, w0, skeleton)?;
    let k_max = skeleton.len().max(1);
    let mut grad_w = vec![0.0; pool.weight_count()];
    for (i, step) in skeleton.iter().enumerate() {
        let j = i + 1;
        let pre = &roll.states[i];
        let spec = pool.get(step.op, step.spec).map_err(|source| LossError::Spec { step: j, source })?;
        let (features, raw, theta) =
            spec.specialize_parts(pre, step.obj, j, k_max).map_err(|source| LossError::Spec { step: j, source })?;
        let mut dl_dtheta = [0.0, 0.0];
        for fluent in domain.schema(step.op).eff_plus(step.obj) {
            let f = registry.get(fluent.predicate())?;
            let (_, g) = f(pre, step.obj, &theta).map_err(|source| LossError::World { step: j, source })?;
            dl_dtheta[0] += g[0];
            dl_dtheta[1] += g[1];
        }
        if dl_dtheta == [0.0, 0.0] {
            continue;
        }
        let diag = spec.dtheta_draw(&raw);
        let upstream = [dl_dtheta[0] * diag[0], dl_dtheta[1] * diag[1]];
        let (gw, _) = spec.net.backward(&features, &upstream).map_err(|e| LossError::Spec { step: j, source: e.into() })?;
        let range = pool.slice_range(step.op, step.spec);
        for (slot, g) in grad_w[range].iter_mut().zip(gw.iter()) {
            *slot += g;
        }
    }
    Ok(TrajectoryLossReport { total: roll.total, per_step: roll.per_step, grad_w })
}
