//! First-order meta-learning outer loop and the test-gradient estimator.
//!
//! The outer gradient is taken with respect to the adapted weights W_j and
//! applied to the initialization W (Hessian term dropped); there is no
//! second-order path anywhere in this module.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::losses::{register_domain_losses, trajectory_loss};
use crate::specializer::SpecializerPool;
use crate::symbolic::Domain;

use super::{plan_t, InnerLearner, LearnError, LearnerConfig, Problem, Subset, TaskDataset};

/// Accumulated ∇_{W_j} L_τ over sampled test problems, planned with PlanT at
/// the temperature floor and the candidate-budget allowance. Problems with no
/// feasible plan are skipped; it is an error only if every sample failed.
pub fn estimate_test_grad(
    domain: &Domain,
    test: &[Problem],
    pool: &mut SpecializerPool,
    subset: Option<&Subset>,
    cfg: &LearnerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, usize), LearnError> {
    if test.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let registry = register_domain_losses();
    let mut grad = vec![0.0; pool.weight_count()];
    let mut ok = 0usize;
    for _ in 0..cfg.n_grad_est {
        let (w0, goal) = &test[rng.random_range(0..test.len())];
        let picked = match plan_t(
            domain,
            w0,
            goal,
            pool,
            subset,
            u64::MAX,
            cfg.candidate_budget,
            cfg,
            subset.is_none(),
            rng,
        ) {
            Ok(p) => p,
            Err(LearnError::NoFeasiblePlan) => continue,
            Err(e) => return Err(e),
        };
        let report = trajectory_loss(pool, &registry, domain, w0, &picked.skeleton)?;
        for (g, r) in grad.iter_mut().zip(report.grad_w.iter()) {
            *g += r;
        }
        ok += 1;
    }
    if ok == 0 {
        return Err(LearnError::NoFeasiblePlan);
    }
    Ok((grad, ok))
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetaRecord {
    pub outer: u64,
    pub task_id: String,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurvePoint {
    pub iter: u64,
    pub eval_solve_pct: f64,
}

#[derive(Debug)]
pub struct MetaOutcome {
    pub pool: SpecializerPool,
    pub curve: Vec<CurvePoint>,
    pub trace: Vec<MetaRecord>,
}

/// Stochastic first-order meta-training: sample a task, run the inner learner
/// on its train split, estimate the trajectory-loss gradient on its test
/// split at the adapted weights, and step the initialization.
#[allow(clippy::too_many_arguments)]
pub fn meta_learn(
    domain: &Domain,
    tasks: &[TaskDataset],
    mut pool: SpecializerPool,
    cfg: &LearnerConfig,
    outer_iters: u64,
    learner: &dyn InnerLearner,
    mut probe: Option<(u64, &mut dyn FnMut(&SpecializerPool) -> f64)>,
    rng: &mut ChaCha8Rng,
) -> Result<MetaOutcome, LearnError> {
    if tasks.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut curve = Vec::new();
    let mut trace = Vec::with_capacity(outer_iters as usize);
    if let Some((_, f)) = probe.as_mut() {
        curve.push(CurvePoint { iter: 0, eval_solve_pct: f(&pool) });
    }
    for outer in 1..=outer_iters {
        let j = rng.random_range(0..tasks.len());
        let task = &tasks[j];
        let adapted = learner.inner_adapt(domain, &pool, &task.train, cfg, rng)?;
        let mut adapted_pool = adapted.pool;
        let (grad, _ok) = estimate_test_grad(domain, &task.test, &mut adapted_pool, adapted.active.as_ref(), cfg, rng)?;
        let mut w = pool.flat_weights();
        match &adapted.active {
            None => {
                for (wi, gi) in w.iter_mut().zip(grad.iter()) {
                    *wi -= cfg.beta * gi;
                }
            }
            Some(subset) => {
                // Only the selected specializers receive the outer update.
                for (&op, indices) in subset.iter() {
                    for &idx in indices {
                        let range = pool.slice_range(op, idx);
                        for i in range {
                            w[i] -= cfg.beta * grad[i];
                        }
                    }
                }
            }
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::NonFiniteUpdate(format!("weight {i} after outer step {outer}")));
        }
        pool.set_flat_weights(&w);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        trace.push(MetaRecord { outer, task_id: task.task_id.clone(), grad_norm });
        if let Some((every, f)) = probe.as_mut() {
            if *every > 0 && outer % *every == 0 {
                curve.push(CurvePoint { iter: outer, eval_solve_pct: f(&pool) });
            }
        }
    }
    Ok(MetaOutcome { pool, curve, trace })
}
