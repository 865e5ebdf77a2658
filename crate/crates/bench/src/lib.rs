//! Benchmark harness for the tabletop TAMP stack: task suites, the four
//! solve systems, the evaluation loop with independent replay validation,
//! experiment orchestration, and CSV/SVG reporting.

pub mod eval;
pub mod report;
pub mod run;
pub mod svg;
pub mod systems;
pub mod tasks;

pub use eval::{evaluate, EvalReport, ProblemTrace};
pub use run::{run_experiment, RunConfig};
pub use systems::{build_system, SolveSystem, SystemArgs};
pub use tasks::{build_dataset, gen_task_suite, sample_problem, BenchError, TaskSpec};
