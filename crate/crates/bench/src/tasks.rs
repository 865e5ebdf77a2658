//! Task-suite generation and problem sampling.
//!
//! A task fixes the object roster (kinds, sizes) and the clutter profile;
//! problems within a task vary the initial layout. Start layouts are drawn in
//! a vertical band of the start table whose width and spacing shrink with
//! `placement_density`, so dense tasks put objects in tight north-south
//! columns where side approaches matter.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::SeedableRng;
use tamp_core::learn::{Problem, TaskDataset};
use tamp_core::symbolic::all_on_goal;
use tamp_core::worldsim::{ObjectKind, ObjectSpec, PlacedObject, Pose2, Surface, WorldState, START_TABLE};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("could not place {placed} of {total} objects within {attempts} attempts (density too high)")]
    PlacementFailure { placed: usize, total: usize, attempts: usize },
    #[error("world error: {0}")]
    World(#[from] tamp_core::worldsim::WorldError),
    #[error(transparent)]
    Learn(#[from] tamp_core::learn::LearnError),
}

pub const EE_HOME: Pose2 = Pose2::new(5.0, 1.0);
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Per-task fixed geometry multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeometryJitter {
    pub lip_radius_scale: f64,
    pub radius_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSpec {
    pub task_id: String,
    pub n_objects: usize,
    /// Sampling probabilities for cylinder / bowl / vase.
    pub kind_mix: [f64; 3],
    pub radius_range: (f64, f64),
    pub geometry_jitter: GeometryJitter,
    pub placement_density: f64,
    /// Fixes the roster and per-problem layout streams.
    pub seed: u64,
}

impl TaskSpec {
    /// The task's fixed object roster, derived deterministically.
    pub fn roster(&self) -> Vec<ObjectSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0xA0);
        (0..self.n_objects)
            .map(|id| {
                let u: f64 = rng.random_range(0.0..1.0);
                let kind = if u < self.kind_mix[0] {
                    ObjectKind::Cylinder
                } else if u < self.kind_mix[0] + self.kind_mix[1] {
                    ObjectKind::Bowl
                } else {
                    ObjectKind::Vase
                };
                let r = rng.random_range(self.radius_range.0..self.radius_range.1)
                    * self.geometry_jitter.radius_scale;
                let r = r.clamp(0.18, 0.5);
                let mut spec = match kind {
                    ObjectKind::Cylinder => ObjectSpec::cylinder(id, r),
                    ObjectKind::Bowl => ObjectSpec::bowl(id, r),
                    ObjectKind::Vase => ObjectSpec::vase(id, r),
                };
                spec.lip_radius = (spec.lip_radius * self.geometry_jitter.lip_radius_scale).clamp(0.08, spec.radius);
                spec
            })
            .collect()
    }
}

/// Deterministic suite with per-task geometry drawn from disjoint strata so
/// evaluation tasks are unseen: the radius-scale axis is cut into
/// n_train + n_eval bins, shuffled by the suite seed, and dealt out.
pub fn gen_task_suite(seed: u64, n_train: usize, n_eval: usize, n_objects: usize) -> (Vec<TaskSpec>, Vec<TaskSpec>) {
    let total = n_train + n_eval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (lo, hi) = (0.85f64, 1.25f64);
    let mut bins: Vec<usize> = (0..total).collect();
    // Fisher-Yates with the suite stream.
    for i in (1..total).rev() {
        let j = rng.random_range(0..=i);
        bins.swap(i, j);
    }
    let make = |role: &str, idx: usize, bin: usize, rng: &mut ChaCha8Rng| -> TaskSpec {
        let width = (hi - lo) / total as f64;
        // Center of the bin plus a small intra-bin jitter.
        let radius_scale = lo + width * (bin as f64 + 0.25 + rng.random_range(0.0..0.5));
        let lip_radius_scale = rng.random_range(0.9..1.1);
        let raw = [
            0.25 + rng.random_range(0.0..1.0),
            0.15 + rng.random_range(0.0..0.8),
            0.15 + rng.random_range(0.0..0.8),
        ];
        let z: f64 = raw.iter().sum();
        TaskSpec {
            task_id: format!("{role}-{idx}"),
            n_objects,
            kind_mix: [raw[0] / z, raw[1] / z, raw[2] / z],
            radius_range: (0.3, 0.5),
            geometry_jitter: GeometryJitter { lip_radius_scale, radius_scale },
            placement_density: rng.random_range(0.6..0.95),
            seed: seed ^ (0x9E3779B97F4A7C15u64.wrapping_mul(1 + idx as u64 + if role == "eval" { 101 } else { 0 })),
        }
    };
    let train = (0..n_train).map(|i| make("train", i, bins[i], &mut rng)).collect();
    let eval = (0..n_eval).map(|i| make("eval", i, bins[n_train + i], &mut rng)).collect();
    (train, eval)
}

/// Draw one problem: a near-contact chain of objects running roughly
/// north-south on the start table (density controls chaining probability and
/// gap size), goal = everything on the goal table, ee at the fixed home pose.
pub fn sample_problem(task: &TaskSpec, rng: &mut ChaCha8Rng) -> Result<Problem, BenchError> {
    let roster = task.roster();
    let d = task.placement_density.clamp(0.0, 1.0);
    let gap = 0.02 + 0.1 * (1.0 - d);
    let inner = |r: f64| {
        (START_TABLE.xmin + r, START_TABLE.xmax - r, START_TABLE.ymin + r, START_TABLE.ymax - r)
    };
    let mut placed: Vec<(Pose2, f64)> = Vec::with_capacity(roster.len());
    let mut attempts = 0;
    for (i, spec) in roster.iter().enumerate() {
        loop {
            attempts += 1;
            if attempts > MAX_PLACEMENT_ATTEMPTS {
                return Err(BenchError::PlacementFailure {
                    placed: placed.len(),
                    total: roster.len(),
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                });
            }
            let (x0, x1, y0, y1) = inner(spec.radius);
            let p = if i == 0 || rng.random_range(0.0..1.0) > d {
                // Scatter draw (always used for the first object).
                Pose2::new(rng.random_range(x0..x1), rng.random_range(y0..y1))
            } else {
                // Chain off a previously placed object at near-contact range,
                // in a cone around north or south.
                let (anchor, ar) = placed[rng.random_range(0..placed.len())];
                let dist = spec.radius + ar + gap;
                let north = if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { -1.0 };
                let ang = std::f64::consts::FRAC_PI_2 * north
                    + rng.random_range(-1.05..1.05);
                Pose2::new(anchor.x + dist * ang.cos(), anchor.y + dist * ang.sin())
            };
            if p.x < x0 || p.x > x1 || p.y < y0 || p.y > y1 {
                continue;
            }
            if placed.iter().all(|(q, r)| p.dist(q) >= spec.radius + r + gap - 1e-9) {
                placed.push((p, spec.radius));
                break;
            }
        }
    }
    let objects: Vec<PlacedObject> = roster
        .into_iter()
        .zip(placed.iter())
        .map(|(spec, (pose, _))| PlacedObject { spec, pose: *pose, surface: Surface::StartTable })
        .collect();
    let ids: Vec<usize> = objects.iter().map(|o| o.spec.id).collect();
    let w = WorldState::new(EE_HOME, objects);
    debug_assert!(w.validate().is_ok());
    Ok((w, all_on_goal(&ids)))
}

/// Materialize a task's train/test splits from disjoint rng streams.
pub fn build_dataset(task: &TaskSpec, n_train: usize, n_test: usize) -> Result<TaskDataset, BenchError> {
    let mut problems = Vec::with_capacity(n_train + n_test);
    let mut i = 0u64;
    while problems.len() < n_train + n_test {
        let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
        rng.set_stream(0x7A5C0000 + i);
        i += 1;
        // Oversampled layouts that fail to place are skipped.
        match sample_problem(task, &mut rng) {
            Ok(p) => problems.push(p),
            Err(BenchError::PlacementFailure { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let test = problems.split_off(n_train);
    Ok(TaskDataset { task_id: task.task_id.clone(), train: problems, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_deterministic_and_stratified() {
        let (train_a, eval_a) = gen_task_suite(7, 6, 3, 3);
        let (train_b, eval_b) = gen_task_suite(7, 6, 3, 3);
        assert_eq!(train_a, train_b);
        assert_eq!(eval_a, eval_b);
        assert_eq!(train_a.len(), 6);
        assert_eq!(eval_a.len(), 3);
        let mut scales: Vec<f64> = train_a
            .iter()
            .chain(eval_a.iter())
            .map(|t| t.geometry_jitter.radius_scale)
            .collect();
        scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in scales.windows(2) {
            assert!(w[1] > w[0], "geometry parameters must be pairwise distinct");
        }
        // Disjoint strata: no eval scale equals a train scale.
        for e in &eval_a {
            assert!(train_a.iter().all(|t| t.geometry_jitter.radius_scale != e.geometry_jitter.radius_scale));
        }
        // Different seeds give different suites.
        let (train_c, _) = gen_task_suite(8, 6, 3, 3);
        assert_ne!(train_a, train_c);
    }

    #[test]
    fn roster_is_fixed_within_a_task() {
        let (train, _) = gen_task_suite(3, 2, 1, 3);
        let a = train[0].roster();
        let b = train[0].roster();
        assert_eq!(a, b);
        for spec in &a {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn sampled_problems_are_valid_and_vary() {
        let (train, _) = gen_task_suite(5, 3, 1, 3);
        let task = &train[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w1, goal) = sample_problem(task, &mut rng).unwrap();
        w1.validate().unwrap();
        assert_eq!(goal.len(), 3);
        assert_eq!(w1.ee_conf, EE_HOME);
        let (w2, _) = sample_problem(task, &mut rng).unwrap();
        // Same geometry, different layout.
        for (a, b) in w1.objects.iter().zip(w2.objects.iter()) {
            assert_eq!(a.spec, b.spec);
        }
        assert!(w1.objects.iter().zip(w2.objects.iter()).any(|(a, b)| a.pose != b.pose));
    }

    #[test]
    fn dense_tasks_produce_tighter_layouts() {
        let base = TaskSpec {
            task_id: "t".into(),
            n_objects: 3,
            kind_mix: [1.0, 0.0, 0.0],
            radius_range: (0.3, 0.3001),
            geometry_jitter: GeometryJitter { lip_radius_scale: 1.0, radius_scale: 1.0 },
            placement_density: 0.9,
            seed: 11,
        };
        let sparse = TaskSpec { placement_density: 0.1, ..base.clone() };
        let mean_nn = |task: &TaskSpec| -> f64 {
            let mut total = 0.0;
            let mut n = 0;
            for s in 0..40u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                if let Ok((w, _)) = sample_problem(task, &mut rng) {
                    for a in &w.objects {
                        let nn = w
                            .objects
                            .iter()
                            .filter(|b| b.spec.id != a.spec.id)
                            .map(|b| a.pose.dist(&b.pose))
                            .fold(f64::INFINITY, f64::min);
                        total += nn;
                        n += 1;
                    }
                }
            }
            total / n as f64
        };
        assert!(mean_nn(&base) < mean_nn(&sparse));
    }

    #[test]
    fn datasets_are_disjoint_and_sized() {
        let (train, _) = gen_task_suite(9, 1, 1, 2);
        let ds = build_dataset(&train[0], 8, 4).unwrap();
        assert_eq!(ds.train.len(), 8);
        assert_eq!(ds.test.len(), 4);
        for (wa, _) in &ds.train {
            for (wb, _) in &ds.test {
                assert_ne!(
                    serde_json::to_string(wa).unwrap(),
                    serde_json::to_string(wb).unwrap(),
                    "train/test problems must be disjoint"
                );
            }
        }
    }
}
