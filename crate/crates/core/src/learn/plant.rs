//! PlanT: annealed Boltzmann selection over symbolic plan candidates scored by
//! negative trajectory loss, with random re-initialization when nothing is
//! motion-feasible.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::losses::{register_domain_losses, rollout};
use crate::motion::motion_plans_exist;
use crate::specializer::{feature_len, fresh_net, ParamStrategy, SpecializerPool, SubsetStrategy};
use crate::symbolic::{initial_planning_state, Domain, Fluent, PlanGen, PlanStep, SkeletonStep};
use crate::worldsim::{OpName, WorldState};

use super::{LearnError, LearnerConfig, Subset};

const MAX_REINIT_ROUNDS: usize = 10;

/// Annealing temperature: T(t) = max(t0 * decay^t, floor).
pub fn temperature(t: u64, cfg: &LearnerConfig) -> f64 {
    (cfg.t0 * cfg.temp_decay.powf(t as f64)).max(cfg.temp_floor)
}

/// Sample an index from the Boltzmann distribution over `scores` at `temp`.
pub fn boltzmann_pick<R: Rng>(scores: &[f64], temp: f64, rng: &mut R) -> usize {
    debug_assert!(!scores.is_empty());
    if scores.len() == 1 {
        return 0;
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temp).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..1.0) * z;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    scores.len() - 1
}

#[derive(Debug, Clone)]
pub struct PlanTOutcome {
    /// Chosen candidate, specializer indices absolute in the pool.
    pub skeleton: Vec<SkeletonStep>,
    pub bound: Vec<PlanStep>,
    pub loss: f64,
    /// Motion-feasible candidates scored this call.
    pub n_scored: usize,
    pub reinit_rounds: usize,
}

/// Draw up to `n_plans` symbolic candidates (not required to be loss-zero),
/// score each motion-feasible one as -L_τ, and sample one from the Boltzmann
/// distribution at T(t). When nothing is feasible and `allow_reinit` is set,
/// the freshest (highest-index) specializer of every schema is re-initialized
/// with new random weights and the draw repeats, up to 10 rounds.
#[allow(clippy::too_many_arguments)]
pub fn plan_t(
    domain: &Domain,
    w0: &WorldState,
    goal: &BTreeSet<Fluent>,
    pool: &mut SpecializerPool,
    subset: Option<&Subset>,
    t: u64,
    n_plans: usize,
    cfg: &LearnerConfig,
    allow_reinit: bool,
    rng: &mut ChaCha8Rng,
) -> Result<PlanTOutcome, LearnError> {
    let registry = register_domain_losses();
    let init = initial_planning_state(w0);
    for round in 0..=MAX_REINIT_ROUNDS {
        let mut scored: Vec<(Vec<SkeletonStep>, Vec<PlanStep>, f64)> = Vec::new();
        {
            let strategy: Box<dyn ParamStrategy + '_> = match subset {
                Some(sel) => Box::new(SubsetStrategy { pool, selected: sel }),
                None => Box::new(&*pool as &SpecializerPool),
            };
            let gen = PlanGen::new(domain, strategy.pool_sizes(), &init, goal.clone());
            for skeleton in gen.take(n_plans) {
                let roll = rollout(strategy.as_ref(), &registry, domain, w0, &skeleton)?;
                let (feasible, _) = motion_plans_exist(w0, &roll.bound, &cfg.motion, rng);
                if feasible {
                    // Record absolute indices so gradients address the pool.
                    let absolute: Vec<SkeletonStep> = match subset {
                        Some(sel) => skeleton
                            .iter()
                            .map(|s| SkeletonStep {
                                op: s.op,
                                obj: s.obj,
                                spec: sel.get(&s.op).map(|v| v[s.spec]).unwrap_or(s.spec),
                            })
                            .collect(),
                        None => skeleton.clone(),
                    };
                    let bound = absolute
                        .iter()
                        .zip(roll.bound.iter())
                        .map(|(abs, b)| PlanStep { op: abs.op, obj: abs.obj, spec: abs.spec, theta: b.theta })
                        .collect();
                    scored.push((absolute, bound, roll.total));
                }
            }
        }
        if !scored.is_empty() {
            let temp = temperature(t, cfg);
            let scores: Vec<f64> = scored.iter().map(|(_, _, loss)| -loss).collect();
            let idx = boltzmann_pick(&scores, temp, rng);
            let (skeleton, bound, loss) = scored.swap_remove(idx);
            return Ok(PlanTOutcome { skeleton, bound, loss, n_scored: scores.len(), reinit_rounds: round });
        }
        if !allow_reinit || round == MAX_REINIT_ROUNDS {
            break;
        }
        reinit_freshest(pool, cfg, rng);
    }
    Err(LearnError::NoFeasiblePlan)
}

/// Replace the highest-index specializer of every schema with fresh random
/// weights. Keeps W's dimensionality fixed so meta-gradients stay aligned.
fn reinit_freshest(pool: &mut SpecializerPool, cfg: &LearnerConfig, rng: &mut ChaCha8Rng) {
    let mut layer_sizes = vec![feature_len()];
    layer_sizes.extend_from_slice(&cfg.hidden);
    layer_sizes.push(2);
    for op in OpName::ALL {
        let n = pool.size(op);
        if n == 0 {
            continue;
        }
        if let Ok(spec) = pool.get_mut(op, n - 1) {
            spec.net = fresh_net(&layer_sizes, rng);
        }
    }
}
