//! Command-line front end: task generation, meta-training, final-task
//! adaptation, evaluation, and report assembly.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

use tamp_bench::eval::evaluate;
use tamp_bench::report::{write_curve_csv, write_table_csv, TableRow};
use tamp_bench::run::{adapt_ad, adapt_ss, iters_to_half, meta_train, run_experiment, write_jsonl, RunConfig};
use tamp_bench::systems::{build_system, load_pool, save_pool, save_subset, SystemArgs};
use tamp_bench::tasks::{gen_task_suite, TaskSpec};

#[derive(Parser)]
#[command(name = "tamp", about = "Tabletop TAMP with learned specializers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic task suite under --out.
    GenTasks {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        n_train: usize,
        #[arg(long, default_value_t = 3)]
        n_eval: usize,
        #[arg(long, default_value_t = 3)]
        n_objects: usize,
    },
    /// Meta-train a specializer pool across the config's training tasks.
    TrainMeta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["ad", "ss"])]
        learner: String,
        #[arg(long)]
        checkpoint_out: PathBuf,
        /// Where to write the learning curve (defaults next to the checkpoint).
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Adapt a meta-trained checkpoint to one task.
    Adapt {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task file produced by gen-tasks.
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["ad", "ss"], default_value = "ad")]
        learner: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a system on problems drawn from a task.
    Eval {
        #[arg(long, value_parser = ["random", "hand", "checkpoint"])]
        system: String,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, short = 'n', default_value_t = 50)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        subset: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-problem CSV written here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the summary table from a finished run directory.
    Report {
        #[arg(long)]
        runs_dir: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Full pipeline: suite, meta-training, adaptation, evaluation, reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_task(path: &Path) -> anyhow::Result<TaskSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading task {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing task {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::GenTasks { seed, out, n_train, n_eval, n_objects } => {
            let (train, eval_tasks) = gen_task_suite(seed, n_train, n_eval, n_objects);
            fs::create_dir_all(&out)?;
            let suite = serde_json::json!({ "train": train, "eval": eval_tasks });
            fs::write(out.join("suite.json"), serde_json::to_string_pretty(&suite)?)?;
            for t in train.iter().chain(eval_tasks.iter()) {
                fs::write(out.join(format!("{}.json", t.task_id)), serde_json::to_string_pretty(t)?)?;
            }
            println!("wrote {} tasks to {}", n_train + n_eval, out.display());
        }
        Command::TrainMeta { config, learner, checkpoint_out, curve_out } => {
            let cfg = RunConfig::load(&config)?;
            let (train, eval_tasks) = gen_task_suite(cfg.suite_seed, cfg.n_train_tasks, cfg.n_eval_tasks, cfg.n_objects);
            let out = meta_train(&cfg, &learner, &train, &eval_tasks)?;
            if let Some(dir) = checkpoint_out.parent() {
                fs::create_dir_all(dir)?;
            }
            save_pool(&checkpoint_out, &out.pool)?;
            let curve_path = curve_out.unwrap_or_else(|| checkpoint_out.with_extension("curve.csv"));
            write_curve_csv(&curve_path, &out.curve)?;
            println!(
                "trained {} for {} outer iters in {:.1}s; iters-to-50% {}",
                learner,
                cfg.outer_iters,
                out.wall_seconds,
                iters_to_half(&out.curve).map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
            );
        }
        Command::Adapt { checkpoint, task, out, learner, config } => {
            let cfg = load_config(config.as_deref())?;
            let pool = load_pool(&checkpoint)?;
            let task = load_task(&task)?;
            if let Some(dir) = out.parent() {
                fs::create_dir_all(dir)?;
            }
            match learner.as_str() {
                "ad" => {
                    let adapted = adapt_ad(&cfg, &pool, &task, cfg.adapt_batches_ad, true)?;
                    save_pool(&out, &adapted.pool)?;
                    let curve: Vec<tamp_core::learn::CurvePoint> = adapted
                        .curve
                        .iter()
                        .map(|(b, s)| tamp_core::learn::CurvePoint { iter: *b, eval_solve_pct: *s })
                        .collect();
                    write_curve_csv(&out.with_extension("curve.csv"), &curve)?;
                    println!("adapted (ad, {} batches) -> {}", cfg.adapt_batches_ad, out.display());
                }
                "ss" => {
                    let subset = adapt_ss(&cfg, &pool, &task)?;
                    save_pool(&out, &pool)?;
                    let subset_path = out.with_extension("subset.json");
                    save_subset(&subset_path, &subset)?;
                    println!("selected subset -> {}", subset_path.display());
                }
                other => anyhow::bail!("unknown learner {other}"),
            }
        }
        Command::Eval { system, task, n, seed, checkpoint, subset, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let task = load_task(&task)?;
            let args = SystemArgs { checkpoint: checkpoint.as_deref(), subset: subset.as_deref() };
            let sys = build_system(&system, &args)?;
            let report = evaluate(
                sys.as_ref(),
                std::slice::from_ref(&task),
                n,
                &cfg.plan_budget(),
                cfg.wall_timeout(),
                seed,
            )?;
            println!(
                "system={} task={} n={} solve%={:.1} searchEffort={}",
                system,
                task.task_id,
                n,
                report.solve_pct,
                report.search_effort.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
            );
            if let Some(path) = out {
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir)?;
                }
                let mut csv = String::from("problem,taskId,solved,searchEffort\n");
                for t in &report.per_problem {
                    csv.push_str(&format!("{},{},{},{}\n", t.index, t.task_id, t.solved, t.search_effort));
                }
                fs::write(&path, csv)?;
                write_jsonl(&path.with_extension("trace.jsonl"), &report.per_problem)?;
            }
        }
        Command::Report { runs_dir, csv, svg } => {
            let rows = assemble_rows(&runs_dir)?;
            write_table_csv(&csv, &rows)?;
            println!("wrote {} rows to {}", rows.len(), csv.display());
            if let Some(svg_dir) = svg {
                fs::create_dir_all(&svg_dir)?;
                for learner in ["ad", "ss"] {
                    let src = runs_dir.join("train").join(learner).join("curve.csv");
                    if let Ok(curve) = read_curve_csv(&src) {
                        let series = vec![(
                            format!("meta-{learner}"),
                            curve.iter().map(|p| (p.iter as f64, p.eval_solve_pct)).collect::<Vec<_>>(),
                        )];
                        let plot = tamp_bench::svg::line_plot(&series, "meta-training curve", "outer iteration", "solve %");
                        fs::write(svg_dir.join(format!("curve-{learner}.svg")), plot)?;
                    }
                }
            }
        }
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let summary = run_experiment(&cfg, &out)?;
            println!("run complete: {}", out.display());
            for row in &summary.rows {
                println!(
                    "  {:8} solve%={:5.1} effort={}",
                    row.system,
                    row.solve_pct,
                    row.search_effort.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
                );
            }
        }
    }
    Ok(())
}

/// Rebuild Table rows from a run directory's eval reports and manifest.
fn assemble_rows(runs_dir: &Path) -> anyhow::Result<Vec<TableRow>> {
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs_dir.join("manifest.json")).context("manifest.json")?)?;
    let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(runs_dir.join("config.json")).context("config.json")?)?;
    let setting = format!("{} obj.", cfg.n_objects);
    let mut rows = Vec::new();
    for name in ["random", "hand", "meta-ad", "meta-ss"] {
        let path = runs_dir.join("eval").join(format!("{name}.json"));
        let report: tamp_bench::EvalReport = serde_json::from_str(&fs::read_to_string(&path).with_context(|| path.display().to_string())?)?;
        let train_key = format!("train-{}", name.trim_start_matches("meta-"));
        let hours = manifest["wallSeconds"].get(&train_key).and_then(|v| v.as_f64()).map(|s| s / 3600.0);
        rows.push(TableRow {
            setting: setting.clone(),
            system: name.to_string(),
            solve_pct: report.solve_pct,
            train_iters_to50: report.train_iters_to50,
            search_effort: report.search_effort,
            train_hours: if name.starts_with("meta-") { hours } else { None },
        });
    }
    Ok(rows)
}

fn read_curve_csv(path: &Path) -> anyhow::Result<Vec<tamp_core::learn::CurvePoint>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let iter: u64 = parts.next().context("iteration column")?.parse()?;
        let pct: f64 = parts.next().context("solve column")?.parse()?;
        out.push(tamp_core::learn::CurvePoint { iter, eval_solve_pct: pct });
    }
    Ok(out)
}
