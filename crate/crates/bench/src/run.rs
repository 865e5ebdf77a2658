//! Experiment orchestration: suite generation, meta-training with periodic
//! eval probes, final-task adaptation, four-system evaluation, and report
//! files. Every artifact except wall-clock timings (manifest only) is a pure
//! function of the run config.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tamp_core::learn::{
    ad_learn, learner_by_name, meta_learn, ss_learn, CurvePoint, LearnerConfig, PlanBudget, Subset, TaskDataset,
};
use tamp_core::specializer::{default_pool_sizes, SpecializerPool};
use tamp_core::symbolic::build_tabletop_domain;

use crate::eval::{evaluate, EvalReport};
use crate::report::{write_curve_csv, write_table_csv, TableRow};
use crate::svg;
use crate::systems::{save_pool, save_subset, AdaptedSystem, HandSystem, PoolSystem, RandomSystem, SolveSystem};
use crate::tasks::{build_dataset, gen_task_suite, BenchError, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub learner: LearnerConfig,
    pub suite_seed: u64,
    pub n_train_tasks: usize,
    pub n_eval_tasks: usize,
    pub n_objects: usize,
    /// Meta-training outer iterations.
    pub outer_iters: u64,
    /// Probe the eval solve rate every this many outer iterations.
    pub probe_every: u64,
    pub probe_problems: usize,
    /// Final-task evaluation problem count.
    pub eval_problems: usize,
    /// Final-task adaptation: AD trains on this many batches, SS selects on one.
    pub adapt_batches_ad: u64,
    pub adapt_batches_ss: u64,
    pub train_problems_per_task: usize,
    pub test_problems_per_task: usize,
    /// Per-problem wall timeout (the candidate budget is authoritative).
    pub wall_timeout_secs: f64,
    /// Nonempty list switches on the task-diversity ablation (one AD
    /// meta-training per entry, using that many training tasks).
    pub ablation_train_tasks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            learner: LearnerConfig::default(),
            suite_seed: 0,
            n_train_tasks: 6,
            n_eval_tasks: 3,
            n_objects: 3,
            outer_iters: 2000,
            probe_every: 50,
            probe_problems: 20,
            eval_problems: 50,
            adapt_batches_ad: 10,
            adapt_batches_ss: 1,
            train_problems_per_task: 48,
            test_problems_per_task: 24,
            wall_timeout_secs: 30.0,
            ablation_train_tasks: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn plan_budget(&self) -> PlanBudget {
        self.learner.plan_budget()
    }

    pub fn wall_timeout(&self) -> Option<Duration> {
        (self.wall_timeout_secs > 0.0).then(|| Duration::from_secs_f64(self.wall_timeout_secs))
    }

    pub fn config_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn fresh_pool(cfg: &RunConfig) -> SpecializerPool {
    let mut rng = rng_stream(cfg.learner.seed, 0x11);
    SpecializerPool::tabletop(&cfg.learner.hidden, &default_pool_sizes(), &mut rng)
}

pub struct MetaTrainOutput {
    pub pool: SpecializerPool,
    pub curve: Vec<CurvePoint>,
    pub wall_seconds: f64,
}

/// Meta-train one learner over the given training tasks, probing the final
/// task solve rate periodically for the learning curve.
pub fn meta_train(
    cfg: &RunConfig,
    learner_name: &str,
    train_tasks: &[TaskSpec],
    eval_tasks: &[TaskSpec],
) -> Result<MetaTrainOutput, BenchError> {
    let domain = build_tabletop_domain();
    let learner = learner_by_name(learner_name)
        .unwrap_or_else(|| panic!("unknown learner {learner_name}; registry has ad|ss"));
    let datasets: Vec<TaskDataset> = train_tasks
        .iter()
        .map(|t| build_dataset(t, cfg.train_problems_per_task, cfg.test_problems_per_task))
        .collect::<Result<_, _>>()?;
    let pool = fresh_pool(cfg);
    let budget = cfg.plan_budget();
    let mut probe_counter = 0u64;
    let probe_seed_base = cfg.learner.seed ^ 0x5EED_0001;
    let mut probe_fn = |pool: &SpecializerPool| -> f64 {
        probe_counter += 1;
        let system = PoolSystem { label: "probe".into(), pool: pool.clone(), subset: None };
        evaluate(&system, eval_tasks, cfg.probe_problems, &budget, None, probe_seed_base.wrapping_add(probe_counter))
            .map(|r| r.solve_pct)
            .unwrap_or(0.0)
    };
    let stream = if learner_name == "ad" { 0x12 } else { 0x13 };
    let mut rng = rng_stream(cfg.learner.seed, stream);
    let started = Instant::now();
    let out = meta_learn(
        &domain,
        &datasets,
        pool,
        &cfg.learner,
        cfg.outer_iters,
        learner,
        Some((cfg.probe_every, &mut probe_fn)),
        &mut rng,
    )?;
    Ok(MetaTrainOutput { pool: out.pool, curve: out.curve, wall_seconds: started.elapsed().as_secs_f64() })
}

pub struct AdaptedAd {
    pub pool: SpecializerPool,
    /// (batch index, probe solve pct) when probing was requested.
    pub curve: Vec<(u64, f64)>,
}

/// Final-task AD adaptation: `batches` batches of sampled training data, one
/// AD iteration per problem. Optionally probes the task solve rate after
/// every batch (for adaptation curves).
pub fn adapt_ad(
    cfg: &RunConfig,
    pool: &SpecializerPool,
    task: &TaskSpec,
    batches: u64,
    probe: bool,
) -> Result<AdaptedAd, BenchError> {
    let domain = build_tabletop_domain();
    let n_problems = (batches * cfg.learner.batch_size as u64) as usize;
    let dataset = build_dataset(task, n_problems.max(1), 0)?;
    let mut inner_cfg = cfg.learner.clone();
    inner_cfg.n_iters = cfg.learner.batch_size as u64;
    let mut current = pool.clone();
    let mut curve = Vec::new();
    let budget = cfg.plan_budget();
    let mut rng = rng_stream(cfg.learner.seed ^ task.seed, 0x21);
    for b in 1..=batches {
        let out = ad_learn(&domain, &dataset.train, current, &inner_cfg, Some(&task.task_id), &mut rng)?;
        current = out.pool;
        if probe {
            let system = PoolSystem { label: "adapt-probe".into(), pool: current.clone(), subset: None };
            let solve = evaluate(
                &system,
                std::slice::from_ref(task),
                cfg.probe_problems,
                &budget,
                None,
                cfg.learner.seed ^ task.seed ^ (0xAB00 + b),
            )?
            .solve_pct;
            curve.push((b, solve));
        }
    }
    Ok(AdaptedAd { pool: current, curve })
}

/// Final-task SS adaptation: choose the best k specializers per operator on
/// one batch of training data.
pub fn adapt_ss(cfg: &RunConfig, pool: &SpecializerPool, task: &TaskSpec) -> Result<Subset, BenchError> {
    let domain = build_tabletop_domain();
    let batch = (cfg.adapt_batches_ss * cfg.learner.batch_size as u64) as usize;
    let dataset = build_dataset(task, batch.max(1), 0)?;
    let out = ss_learn(&domain, &dataset.train, pool, cfg.learner.k, &cfg.plan_budget(), cfg.learner.seed ^ task.seed)?;
    Ok(out.subset)
}

/// Build the per-task adapted systems for final evaluation.
pub fn adapted_systems(
    cfg: &RunConfig,
    ad_pool: &SpecializerPool,
    ss_pool: &SpecializerPool,
    eval_tasks: &[TaskSpec],
) -> Result<(AdaptedSystem, AdaptedSystem, Vec<(String, Subset)>), BenchError> {
    let mut ad_map = BTreeMap::new();
    let mut ss_map = BTreeMap::new();
    let mut subsets = Vec::new();
    for task in eval_tasks {
        let adapted = adapt_ad(cfg, ad_pool, task, cfg.adapt_batches_ad, false)?;
        ad_map.insert(
            task.task_id.clone(),
            PoolSystem { label: format!("meta-ad/{}", task.task_id), pool: adapted.pool, subset: None },
        );
        let subset = adapt_ss(cfg, ss_pool, task)?;
        ss_map.insert(
            task.task_id.clone(),
            PoolSystem { label: format!("meta-ss/{}", task.task_id), pool: ss_pool.clone(), subset: Some(subset.clone()) },
        );
        subsets.push((task.task_id.clone(), subset));
    }
    Ok((
        AdaptedSystem { label: "meta-ad".into(), per_task: ad_map },
        AdaptedSystem { label: "meta-ss".into(), per_task: ss_map },
        subsets,
    ))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub config_hash: String,
    pub suite_seed: u64,
    pub learner_seed: u64,
    pub wall_seconds: BTreeMap<String, f64>,
}

pub struct ExperimentSummary {
    pub reports: BTreeMap<String, EvalReport>,
    pub rows: Vec<TableRow>,
    pub out_dir: PathBuf,
}

pub fn iters_to_half(curve: &[CurvePoint]) -> Option<u64> {
    curve.iter().find(|p| p.eval_solve_pct >= 50.0).map(|p| p.iter)
}

/// The full pipeline: suite → meta-train (AD, SS) → final-task adaptation →
/// evaluation of all four systems → CSV/SVG reports under `out_dir`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<ExperimentSummary> {
    fs::create_dir_all(out_dir)?;
    fs::create_dir_all(out_dir.join("plots"))?;
    let mut wall = BTreeMap::new();
    let (train_tasks, eval_tasks) = gen_task_suite(cfg.suite_seed, cfg.n_train_tasks, cfg.n_eval_tasks, cfg.n_objects);
    write_tasks(out_dir, &train_tasks, &eval_tasks)?;

    // Meta-training, both learners.
    let mut curves: Vec<(String, Vec<CurvePoint>)> = Vec::new();
    let mut pools = BTreeMap::new();
    for learner in ["ad", "ss"] {
        let out = meta_train(cfg, learner, &train_tasks, &eval_tasks)?;
        let dir = out_dir.join("train").join(learner);
        fs::create_dir_all(&dir)?;
        save_pool(&dir.join("checkpoint.json"), &out.pool)?;
        write_curve_csv(&dir.join("curve.csv"), &out.curve)?;
        wall.insert(format!("train-{learner}"), out.wall_seconds);
        curves.push((format!("meta-{learner}"), out.curve.clone()));
        pools.insert(learner.to_string(), (out.pool, out.curve));
    }

    // Final-task adaptation artifacts.
    let started = Instant::now();
    let (ad_system, ss_system, subsets) = adapted_systems(cfg, &pools["ad"].0, &pools["ss"].0, &eval_tasks)?;
    let adapt_dir = out_dir.join("adapt");
    fs::create_dir_all(adapt_dir.join("ad"))?;
    fs::create_dir_all(adapt_dir.join("ss"))?;
    for (task_id, system) in &ad_system.per_task {
        save_pool(&adapt_dir.join("ad").join(format!("{task_id}.json")), &system.pool)?;
    }
    for (task_id, subset) in &subsets {
        save_pool(&adapt_dir.join("ss").join(format!("{task_id}.json")), &pools["ss"].0)?;
        save_subset(&adapt_dir.join("ss").join(format!("{task_id}.subset.json")), subset)?;
    }
    wall.insert("adapt".into(), started.elapsed().as_secs_f64());

    // Evaluate all four systems on the same problem stream.
    let budget = cfg.plan_budget();
    let eval_seed = cfg.suite_seed ^ 0xEA11;
    let systems: Vec<&dyn SolveSystem> = vec![&RandomSystem, &HandSystem, &ad_system, &ss_system];
    let mut reports: BTreeMap<String, EvalReport> = BTreeMap::new();
    let started = Instant::now();
    for system in systems {
        let mut report = evaluate(system, &eval_tasks, cfg.eval_problems, &budget, cfg.wall_timeout(), eval_seed)?;
        if let Some((_, curve)) = pools.get(system.name().trim_start_matches("meta-")) {
            report.train_iters_to50 = iters_to_half(curve);
        }
        report.wall_train_seconds = wall.get(&format!("train-{}", system.name().trim_start_matches("meta-"))).copied();
        let eval_dir = out_dir.join("eval");
        fs::create_dir_all(&eval_dir)?;
        fs::write(eval_dir.join(format!("{}.json", system.name())), serde_json::to_string_pretty(&report)?)?;
        reports.insert(system.name().to_string(), report);
    }
    wall.insert("eval".into(), started.elapsed().as_secs_f64());

    // Table-I style CSV.
    let setting = format!("{} obj.", cfg.n_objects);
    let rows: Vec<TableRow> = ["random", "hand", "meta-ad", "meta-ss"]
        .iter()
        .map(|name| {
            let r = &reports[*name];
            TableRow {
                setting: setting.clone(),
                system: name.to_string(),
                solve_pct: r.solve_pct,
                train_iters_to50: r.train_iters_to50,
                search_effort: r.search_effort,
                train_hours: r.wall_train_seconds.map(|s| s / 3600.0),
            }
        })
        .collect();
    write_table_csv(&out_dir.join("eval").join("table.csv"), &rows)?;

    // Task-diversity ablation: AD meta-training with the first n tasks.
    if !cfg.ablation_train_tasks.is_empty() {
        let ab_dir = out_dir.join("ablation");
        fs::create_dir_all(&ab_dir)?;
        let mut summary = String::from("nTrainTasks,finalSolvePct\n");
        let mut ab_curves = Vec::new();
        for &n in &cfg.ablation_train_tasks {
            let n = n.min(train_tasks.len());
            let out = meta_train(cfg, "ad", &train_tasks[..n], &eval_tasks)?;
            write_curve_csv(&ab_dir.join(format!("curve-n{n}.csv")), &out.curve)?;
            let (ad_sys, _, _) = adapted_systems(cfg, &out.pool, &out.pool, &eval_tasks)?;
            let report = evaluate(&ad_sys, &eval_tasks, cfg.eval_problems, &budget, cfg.wall_timeout(), eval_seed)?;
            summary.push_str(&format!("{n},{:.1}\n", report.solve_pct));
            ab_curves.push((format!("n={n}"), out.curve));
        }
        fs::write(ab_dir.join("summary.csv"), summary)?;
        fs::write(out_dir.join("plots").join("ablation.svg"), curve_svg(&ab_curves))?;
    }

    // Learning-curve plot.
    fs::write(out_dir.join("plots").join("curves.svg"), curve_svg(&curves))?;

    let manifest = Manifest {
        config_hash: cfg.config_hash(),
        suite_seed: cfg.suite_seed,
        learner_seed: cfg.learner.seed,
        wall_seconds: wall,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let _ = fs::write(out_dir.join("config.json"), serde_json::to_string_pretty(cfg)?);

    Ok(ExperimentSummary { reports, rows, out_dir: out_dir.to_path_buf() })
}

fn curve_svg(curves: &[(String, Vec<CurvePoint>)]) -> String {
    let series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|(name, c)| (name.clone(), c.iter().map(|p| (p.iter as f64, p.eval_solve_pct)).collect()))
        .collect();
    svg::line_plot(&series, "eval solve rate during meta-training", "outer iteration", "solve %")
}

fn write_tasks(out_dir: &Path, train: &[TaskSpec], eval: &[TaskSpec]) -> anyhow::Result<()> {
    let dir = out_dir.join("tasks");
    fs::create_dir_all(&dir)?;
    let suite = serde_json::json!({ "train": train, "eval": eval });
    fs::write(dir.join("suite.json"), serde_json::to_string_pretty(&suite)?)?;
    for t in train.iter().chain(eval.iter()) {
        fs::write(dir.join(format!("{}.json", t.task_id)), serde_json::to_string_pretty(t)?)?;
    }
    Ok(())
}

/// Append JSON-lines records to a trace file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}
