//! Subset selection: exhaustively evaluate every per-schema size-k specializer
//! combination on the 0-1 planning loss and keep the argmin, adjusting no
//! weights.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::losses::register_domain_losses;
use crate::specializer::{SpecializerPool, SubsetStrategy};
use crate::symbolic::Domain;
use crate::worldsim::OpName;

use super::{plan, LearnError, PlanBudget, Problem};

/// Chosen specializer indices per schema (absolute in the pool, sorted).
pub type Subset = BTreeMap<OpName, Vec<usize>>;

#[derive(Debug, Clone)]
pub struct SsOutcome {
    pub subset: Subset,
    /// 0-1 loss of the winning subset over the dataset.
    pub loss: usize,
    pub combos_evaluated: usize,
}

/// Exhaustive argmin over all per-schema k-combinations; ties break toward
/// the lexicographically first combination. Each (combination, problem)
/// planning call uses an independent derived rng stream.
pub fn ss_learn(
    domain: &Domain,
    problems: &[Problem],
    pool: &SpecializerPool,
    k: usize,
    budget: &PlanBudget,
    seed: u64,
) -> Result<SsOutcome, LearnError> {
    if problems.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let registry = register_domain_losses();
    let per_op: Vec<(OpName, Vec<Vec<usize>>)> = OpName::ALL
        .iter()
        .map(|&op| {
            let n = pool.size(op);
            let kk = k.min(n);
            (op, (0..n).combinations(kk).collect())
        })
        .collect();
    let mut best: Option<(Subset, usize)> = None;
    let mut combo_idx = 0usize;
    // Cartesian product over schemas in domain order, lexicographic.
    let combos = per_op.iter().map(|(_, c)| c.iter()).multi_cartesian_product();
    for combo in combos {
        let subset: Subset =
            per_op.iter().map(|(op, _)| *op).zip(combo.iter().map(|v| (*v).clone())).collect();
        let strategy = SubsetStrategy { pool, selected: &subset };
        let mut loss = 0usize;
        for (p_idx, (w0, goal)) in problems.iter().enumerate() {
            // Early exit: this combination can no longer beat the best.
            if let Some((_, best_loss)) = &best {
                if loss > *best_loss {
                    break;
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((combo_idx * problems.len() + p_idx) as u64);
            let out = plan(domain, w0, goal, &strategy, &registry, budget, &mut rng)?;
            if !out.solved() {
                loss += 1;
            }
        }
        match &best {
            Some((_, best_loss)) if *best_loss <= loss => {}
            _ => best = Some((subset, loss)),
        }
        combo_idx += 1;
    }
    let (subset, loss) = best.expect("at least one combination");
    Ok(SsOutcome { subset, loss, combos_evaluated: combo_idx })
}
