//! Solve systems behind a common trait, registered by name and selected at
//! runtime (`random` | `hand` | `checkpoint`).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use rand_chacha::ChaCha8Rng;

use tamp_core::learn::{plan, random_backtrack_plan, LearnError, PlanBudget, PlanOutcome, Subset};
use tamp_core::losses::register_domain_losses;
use tamp_core::specializer::{HandCraftedStrategy, SpecializerPool, SubsetStrategy};
use tamp_core::symbolic::{Domain, Fluent};
use tamp_core::worldsim::WorldState;

use std::collections::BTreeSet;

/// A complete problem-solving strategy: given a problem, produce a plan (or
/// exhaust the budget). `task_id` lets adapted systems dispatch per task.
pub trait SolveSystem: Send + Sync {
    fn name(&self) -> &str;

    fn solve(
        &self,
        task_id: &str,
        domain: &Domain,
        w0: &WorldState,
        goal: &BTreeSet<Fluent>,
        budget: &PlanBudget,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlanOutcome, LearnError>;
}

/// Conditional random sampling with backtracking.
pub struct RandomSystem;

impl SolveSystem for RandomSystem {
    fn name(&self) -> &str {
        "random"
    }

    fn solve(
        &self,
        _task_id: &str,
        domain: &Domain,
        w0: &WorldState,
        goal: &BTreeSet<Fluent>,
        budget: &PlanBudget,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlanOutcome, LearnError> {
        random_backtrack_plan(domain, w0, goal, budget, rng)
    }
}

/// Fixed task-agnostic rules.
pub struct HandSystem;

impl SolveSystem for HandSystem {
    fn name(&self) -> &str {
        "hand"
    }

    fn solve(
        &self,
        _task_id: &str,
        domain: &Domain,
        w0: &WorldState,
        goal: &BTreeSet<Fluent>,
        budget: &PlanBudget,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlanOutcome, LearnError> {
        let registry = register_domain_losses();
        plan(domain, w0, goal, &HandCraftedStrategy, &registry, budget, rng)
    }
}

/// A specializer pool checkpoint, optionally restricted to a subset.
pub struct PoolSystem {
    pub label: String,
    pub pool: SpecializerPool,
    pub subset: Option<Subset>,
}

impl SolveSystem for PoolSystem {
    fn name(&self) -> &str {
        &self.label
    }

    fn solve(
        &self,
        _task_id: &str,
        domain: &Domain,
        w0: &WorldState,
        goal: &BTreeSet<Fluent>,
        budget: &PlanBudget,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlanOutcome, LearnError> {
        let registry = register_domain_losses();
        match &self.subset {
            Some(sel) => {
                let strategy = SubsetStrategy { pool: &self.pool, selected: sel };
                plan(domain, w0, goal, &strategy, &registry, budget, rng)
            }
            None => plan(domain, w0, goal, &self.pool, &registry, budget, rng),
        }
    }
}

/// Per-evaluation-task adapted pools (final-task adaptation produces one
/// artifact per task).
pub struct AdaptedSystem {
    pub label: String,
    pub per_task: BTreeMap<String, PoolSystem>,
}

impl SolveSystem for AdaptedSystem {
    fn name(&self) -> &str {
        &self.label
    }

    fn solve(
        &self,
        task_id: &str,
        domain: &Domain,
        w0: &WorldState,
        goal: &BTreeSet<Fluent>,
        budget: &PlanBudget,
        rng: &mut ChaCha8Rng,
    ) -> Result<PlanOutcome, LearnError> {
        let sys = self
            .per_task
            .get(task_id)
            .unwrap_or_else(|| panic!("no adapted pool for task {task_id}"));
        sys.solve(task_id, domain, w0, goal, budget, rng)
    }
}

/// Everything a registered constructor may need.
#[derive(Debug, Default)]
pub struct SystemArgs<'a> {
    pub checkpoint: Option<&'a Path>,
    pub subset: Option<&'a Path>,
}

type SystemCtor = fn(&SystemArgs) -> anyhow::Result<Box<dyn SolveSystem>>;

fn build_random(_args: &SystemArgs) -> anyhow::Result<Box<dyn SolveSystem>> {
    Ok(Box::new(RandomSystem))
}

fn build_hand(_args: &SystemArgs) -> anyhow::Result<Box<dyn SolveSystem>> {
    Ok(Box::new(HandSystem))
}

fn build_checkpoint(args: &SystemArgs) -> anyhow::Result<Box<dyn SolveSystem>> {
    let path = args.checkpoint.context("--checkpoint is required for system `checkpoint`")?;
    let pool = load_pool(path)?;
    let subset = match args.subset {
        Some(p) => Some(load_subset(p)?),
        None => None,
    };
    Ok(Box::new(PoolSystem { label: "checkpoint".into(), pool, subset }))
}

/// Name → constructor registry consulted by the CLI.
pub fn registry() -> &'static [(&'static str, SystemCtor)] {
    &[("random", build_random), ("hand", build_hand), ("checkpoint", build_checkpoint)]
}

pub fn build_system(name: &str, args: &SystemArgs) -> anyhow::Result<Box<dyn SolveSystem>> {
    let ctor = registry()
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .with_context(|| format!("unknown system `{name}`; expected one of random|hand|checkpoint"))?;
    ctor(args)
}

pub fn load_pool(path: &Path) -> anyhow::Result<SpecializerPool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))
}

pub fn save_pool(path: &Path, pool: &SpecializerPool) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(pool)?)?;
    Ok(())
}

pub fn load_subset(path: &Path) -> anyhow::Result<Subset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading subset {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing subset {}", path.display()))
}

pub fn save_subset(path: &Path, subset: &Subset) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(subset)?)?;
    Ok(())
}
