use std::time::Instant;
use tamp_bench::run::{adapted_systems, fresh_pool, meta_train, RunConfig};
use tamp_bench::systems::{HandSystem, PoolSystem, RandomSystem, SolveSystem};
use tamp_bench::{evaluate, gen_task_suite};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let outer: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    for seed in 0..seeds {
        let mut cfg = RunConfig::default();
        cfg.suite_seed = seed;
        cfg.learner.seed = seed;
        cfg.outer_iters = outer;
        cfg.eval_problems = 50;
        let (train_tasks, eval_tasks) = gen_task_suite(cfg.suite_seed, cfg.n_train_tasks, cfg.n_eval_tasks, cfg.n_objects);
        let budget = cfg.plan_budget();
        let t0 = Instant::now();
        let rnd = evaluate(&RandomSystem, &eval_tasks, cfg.eval_problems, &budget, None, seed ^ 0xEA11).unwrap();
        let t_rnd = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let hand = evaluate(&HandSystem, &eval_tasks, cfg.eval_problems, &budget, None, seed ^ 0xEA11).unwrap();
        let t_hand = t0.elapsed().as_secs_f64();
        let fmt = |r: &tamp_bench::EvalReport| {
            format!("solve {:5.1}% effort {}", r.solve_pct, r.search_effort.map(|v| format!("{v:6.2}")).unwrap_or("   n/a".into()))
        };
        println!("seed {seed}: random {} ({t_rnd:.1}s) | hand {} ({t_hand:.1}s)", fmt(&rnd), fmt(&hand));
        // untrained pool for reference
        let pool = fresh_pool(&cfg);
        let unt = PoolSystem { label: "untrained".into(), pool, subset: None };
        let r = evaluate(&unt, &eval_tasks, cfg.eval_problems, &budget, None, seed ^ 0xEA11).unwrap();
        println!("          untrained-pool {}", fmt(&r));
        if outer > 0 {
            let t0 = Instant::now();
            let ad = meta_train(&cfg, "ad", &train_tasks, &eval_tasks).unwrap();
            println!("          meta-ad trained {:.1}s, curve: {:?}", t0.elapsed().as_secs_f64(),
                     ad.curve.iter().map(|p| (p.iter, p.eval_solve_pct as i32)).collect::<Vec<_>>());
            let t0 = Instant::now();
            let ss = meta_train(&cfg, "ss", &train_tasks, &eval_tasks).unwrap();
            println!("          meta-ss trained {:.1}s, curve: {:?}", t0.elapsed().as_secs_f64(),
                     ss.curve.iter().map(|p| (p.iter, p.eval_solve_pct as i32)).collect::<Vec<_>>());
            let t0 = Instant::now();
            let (ad_sys, ss_sys, _) = adapted_systems(&cfg, &ad.pool, &ss.pool, &eval_tasks).unwrap();
            println!("          adaptation {:.1}s", t0.elapsed().as_secs_f64());
            let r_ad = evaluate(&ad_sys, &eval_tasks, cfg.eval_problems, &budget, None, seed ^ 0xEA11).unwrap();
            let r_ss = evaluate(&ss_sys, &eval_tasks, cfg.eval_problems, &budget, None, seed ^ 0xEA11).unwrap();
            println!("          meta-ad {} | meta-ss {}", fmt(&r_ad), fmt(&r_ss));
        }
    }
}
