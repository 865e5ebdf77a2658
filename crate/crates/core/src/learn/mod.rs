//! Planners and learners: Plan, PlanT, alternating descent, subset selection,
//! the first-order meta-learning outer loop, and the test-gradient estimator.

mod ad;
mod meta;
mod planner;
mod plant;
mod ss;

pub use ad::{ad_learn, AdOutcome, IterRecord};
pub use meta::{estimate_test_grad, meta_learn, CurvePoint, MetaOutcome, MetaRecord};
pub use planner::{plan, random_backtrack_plan, validate_solution, PlanBudget, PlanOutcome, Solution};
pub use plant::{boltzmann_pick, plan_t, temperature, PlanTOutcome};
pub use ss::{ss_learn, SsOutcome, Subset};

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::LossError;
use crate::motion::MotionBudget;
use crate::nn::NnError;
use crate::specializer::{SpecError, SpecializerPool};
use crate::symbolic::{Domain, Fluent};
use crate::worldsim::WorldState;

/// A planning problem instance: initial world plus goal fluents.
pub type Problem = (WorldState, BTreeSet<Fluent>);

/// Problems drawn from one task, split for meta-learning.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task_id: String,
    pub train: Vec<Problem>,
    pub test: Vec<Problem>,
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no feasible plan after re-initialization rounds")]
    NoFeasiblePlan,
    #[error("non-finite update: {0}")]
    NonFiniteUpdate(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// All tunables of the training stack. Serialized as part of run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LearnerConfig {
    /// AD iterations (one sampled problem each).
    pub n_iters: u64,
    /// Symbolic plans drawn per PlanT call.
    pub n_plans: usize,
    /// Annealing schedule T(t) = max(t0 * temp_decay^t, temp_floor).
    pub t0: f64,
    pub temp_decay: f64,
    pub temp_floor: f64,
    /// Inner (AD) learning rate.
    pub alpha: f64,
    /// Outer (meta) learning rate.
    pub beta: f64,
    /// Test problems sampled per outer gradient estimate.
    pub n_grad_est: usize,
    /// Subset size per operator for SS.
    pub k: usize,
    /// Candidate allowance per planning call.
    pub candidate_budget: usize,
    pub seed: u64,
    /// AD iterations inside one meta inner loop.
    pub n_iters_inner: u64,
    /// Problems per SS inner selection batch.
    pub ss_inner_batch: usize,
    /// Problems per "batch" of training data.
    pub batch_size: usize,
    /// Hidden layer sizes of every specializer net.
    pub hidden: Vec<usize>,
    pub motion: MotionBudget,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            n_iters: 320,
            n_plans: 32,
            t0: 1.0,
            temp_decay: 0.999,
            temp_floor: 1e-3,
            alpha: 1e-2,
            beta: 1e-3,
            n_grad_est: 2,
            k: 1,
            candidate_budget: 64,
            seed: 0,
            n_iters_inner: 10,
            ss_inner_batch: 4,
            batch_size: 32,
            hidden: vec![100, 50, 20],
            motion: MotionBudget::default(),
        }
    }
}

impl LearnerConfig {
    pub fn plan_budget(&self) -> PlanBudget {
        PlanBudget { candidates: self.candidate_budget, motion: self.motion, deadline: None }
    }
}

/// What an inner Learn pass hands to the meta loop: adapted weights and,
/// for subset selection, the chosen active specializers.
#[derive(Debug, Clone)]
pub struct InnerAdapted {
    pub pool: SpecializerPool,
    pub active: Option<Subset>,
}

/// A single-task learner usable inside MetaLearn, selected by name.
pub trait InnerLearner: Sync {
    fn name(&self) -> &'static str;

    fn inner_adapt(
        &self,
        domain: &Domain,
        pool: &SpecializerPool,
        train: &[Problem],
        cfg: &LearnerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<InnerAdapted, LearnError>;
}

/// Alternating descent: a short gradient-training run on the task's train split.
pub struct AdLearner;

impl InnerLearner for AdLearner {
    fn name(&self) -> &'static str {
        "ad"
    }

    fn inner_adapt(
        &self,
        domain: &Domain,
        pool: &SpecializerPool,
        train: &[Problem],
        cfg: &LearnerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<InnerAdapted, LearnError> {
        let mut inner_cfg = cfg.clone();
        inner_cfg.n_iters = cfg.n_iters_inner;
        let out = ad_learn(domain, train, pool.clone(), &inner_cfg, None, rng)?;
        Ok(InnerAdapted { pool: out.pool, active: None })
    }
}

/// Subset selection: pick the best k specializers per operator on a sampled
/// batch, adjusting no weights.
pub struct SsLearner;

impl InnerLearner for SsLearner {
    fn name(&self) -> &'static str {
        "ss"
    }

    fn inner_adapt(
        &self,
        domain: &Domain,
        pool: &SpecializerPool,
        train: &[Problem],
        cfg: &LearnerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<InnerAdapted, LearnError> {
        if train.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        use rand::{Rng, RngCore};
        let batch: Vec<Problem> = (0..cfg.ss_inner_batch.min(train.len()))
            .map(|_| train[rng.random_range(0..train.len())].clone())
            .collect();
        let seed = rng.next_u64();
        let out = ss_learn(domain, &batch, pool, cfg.k, &cfg.plan_budget(), seed)?;
        Ok(InnerAdapted { pool: pool.clone(), active: Some(out.subset) })
    }
}

static AD: AdLearner = AdLearner;
static SS: SsLearner = SsLearner;
static LEARNERS: [&dyn InnerLearner; 2] = [&AD, &SS];

/// Registry of inner learners by name.
pub fn learners() -> &'static [&'static dyn InnerLearner] {
    &LEARNERS
}

pub fn learner_by_name(name: &str) -> Option<&'static dyn InnerLearner> {
    learners().iter().copied().find(|l| l.name() == name)
}
