//! `pm` — classify partial monitoring games, verify their estimators, and
//! run seeded learner episodes from JSON configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use pm_core::env::EnvSpec;
use pm_core::estimation::{build_estimator_for, verify_estimator};
use pm_core::game::{catalog_game, load_game_file, Game};
use pm_core::geometry::{
    classification_report, classify_given, pareto_and_neighbors, GameClassTag, ObsMode,
};
use pm_core::harness::{
    exit_code, prepare, run_all, run_episode, summarize, write_outputs,
    RunConfig, RunError,
};

#[derive(Parser)]
#[command(name = "pm", version, about = "partial monitoring toolkit")]
struct Cli {
    /// Worker threads for parallel episodes (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run config (JSON).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Replace the config's seed list with `base..base+n` (format `base:n`).
    #[arg(long)]
    seeds: Option<String>,
    /// Turn invariant violations into hard errors.
    #[arg(long)]
    debug_asserts: bool,
    /// Override a config key, e.g. `c1=2.5`, `budget=100`, `horizon=1000`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the observability class and geometry of a game.
    Classify {
        /// Game file (JSON) or catalog name.
        game: String,
        /// Emit the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check the estimator identity and witness replays of a game.
    Verify {
        /// Game file (JSON) or catalog name.
        game: String,
    },
    /// Run the episodes of a config and write traces and a summary.
    Run(RunArgs),
    /// Grid a config over horizons or corruption budgets.
    Sweep(RunArgs),
    /// Time the per-round loop of both learners on catalog games.
    Bench,
}

fn load_game(arg: &str) -> Result<Game, RunError> {
    let path = Path::new(arg);
    if path.exists() {
        load_game_file(path).map_err(|e| RunError::Game(e.to_string()))
    } else {
        catalog_game(arg).map_err(|e| RunError::Game(e.to_string()))
    }
}

fn apply_overrides(config: &mut RunConfig, args: &RunArgs) -> Result<(), RunError> {
    if let Some(spec) = &args.seeds {
        let (base, n) = spec
            .split_once(':')
            .ok_or_else(|| RunError::Config(format!("--seeds wants base:n, got `{spec}`")))?;
        let base: u64 = base
            .parse()
            .map_err(|_| RunError::Config(format!("bad seed base `{base}`")))?;
        let n: u64 = n
            .parse()
            .map_err(|_| RunError::Config(format!("bad seed count `{n}`")))?;
        config.seeds = (base..base + n).collect();
    }
    if args.debug_asserts {
        config.debug_asserts = true;
    }
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("--override wants key=value, got `{kv}`")))?;
        let float = || -> Result<f64, RunError> {
            value
                .parse::<f64>()
                .map_err(|_| RunError::Config(format!("bad value for `{key}`: `{value}`")))
        };
        match key {
            "c1" => config.rates.c1 = Some(float()?),
            "c2" => config.rates.c2 = Some(float()?),
            "b" => config.rates.b = Some(float()?),
            "beta1" => config.rates.beta1 = Some(float()?),
            "gamma0" => config.rates.gamma0 = Some(float()?),
            "step_scale" => config.solver.step_scale = Some(float()?),
            "budget" => config.solver.budget = float()? as usize,
            "solve_every" => config.solver.solve_every = float()? as usize,
            "horizon" => config.horizon = float()? as usize,
            other => {
                return Err(RunError::Config(format!("unknown override key `{other}`")))
            }
        }
    }
    Ok(())
}

fn cmd_classify(game: &str, json: bool) -> Result<(), RunError> {
    let game = load_game(game)?;
    let geom = pareto_and_neighbors(&game).map_err(|e| RunError::Numeric(e.to_string()))?;
    let class = classify_given(&game, &geom).map_err(|e| RunError::Numeric(e.to_string()))?;
    let report = classification_report(&game, &geom, &class);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
        return Ok(());
    }
    println!("{}: {}", game.name(), class.tag);
    println!("  pareto: {:?} (k_pi = {})", geom.pareto, geom.k_pi);
    println!("  cell dims: {:?}", geom.cell_dims);
    if !geom.dominated.is_empty() {
        println!("  dominated: {:?}", geom.dominated);
    }
    if !geom.degenerate.is_empty() {
        println!("  degenerate: {:?}", geom.degenerate);
    }
    if !geom.duplicates.is_empty() {
        println!("  duplicate groups: {:?}", geom.duplicates);
    }
    for e in &report.edges {
        match e.witness_inf_norm {
            Some(norm) => println!("  edge {:?}: |w|_inf = {:.6}", e.edge, norm),
            None => println!("  edge {:?}: no witness", e.edge),
        }
    }
    Ok(())
}

fn cmd_verify(game: &str) -> Result<(), RunError> {
    let game = load_game(game)?;
    let geom = pareto_and_neighbors(&game).map_err(|e| RunError::Numeric(e.to_string()))?;
    let class = classify_given(&game, &geom).map_err(|e| RunError::Numeric(e.to_string()))?;
    println!("{}: {}", game.name(), class.tag);
    if matches!(class.tag, GameClassTag::Trivial | GameClassTag::Hopeless) {
        println!("  nothing to verify for this class");
        return Ok(());
    }

    let mut worst_replay = 0.0f64;
    for (edge, w) in &class.witnesses {
        let r = w.replay_residual(&game);
        worst_replay = worst_replay.max(r);
        println!("  edge {:?}: replay residual {r:.3e}, |w|_inf = {:.6}", edge, w.inf_norm);
    }

    let mode = if class.tag == GameClassTag::LocallyObservable {
        ObsMode::Local
    } else {
        ObsMode::Global
    };
    let est = build_estimator_for(&game, &geom, mode).map_err(RunError::Numeric)?;
    let residual = verify_estimator(&game, &geom, &est.table);
    println!("  estimator identity residual: {residual:.3e}");
    println!("  c_G = {:.6}", est.c_g);
    if class.tag == GameClassTag::LocallyObservable {
        let est = build_estimator_for(&game, &geom, ObsMode::Global).map_err(RunError::Numeric)?;
        let r = verify_estimator(&game, &geom, &est.table);
        println!("  global-mode estimator residual: {r:.3e} (c_G = {:.6})", est.c_g);
    }

    if residual < 1e-9 && worst_replay < 1e-9 {
        println!("  OK");
        Ok(())
    } else {
        Err(RunError::Numeric(format!(
            "residuals above tolerance: identity {residual:.3e}, replay {worst_replay:.3e}"
        )))
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), RunError> {
    let mut config = RunConfig::load(&args.config)?;
    apply_overrides(&mut config, args)?;
    let started = Instant::now();
    let (setup, traces) = run_all(&config)?;
    let agg = write_outputs(&args.out_dir, &config, &setup, &traces)?;
    println!(
        "{} on {} ({}): T={}, {} seeds in {:.1}s",
        agg.algorithm,
        agg.game,
        setup.class.tag,
        agg.horizon,
        agg.n_seeds,
        started.elapsed().as_secs_f64()
    );
    println!(
        "  mean regret {:.2} (std {:.2}); violations {}",
        agg.mean_final_regret, agg.std_final_regret, agg.total_violations
    );
    if let Some(m) = agg.min_entropy_bound_margin {
        println!("  entropy-bound margin >= {m:.3}");
    }
    println!("  outputs in {}", args.out_dir.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<(), RunError> {
    let mut base = RunConfig::load(&args.config)?;
    apply_overrides(&mut base, args)?;
    let sweep = base
        .sweep
        .take()
        .ok_or_else(|| RunError::Config("sweep command needs a `sweep` section".into()))?;

    let mut points: Vec<(String, RunConfig)> = Vec::new();
    let horizons = sweep.horizons.unwrap_or_else(|| vec![base.horizon]);
    let budgets = sweep.budgets;
    for &t in &horizons {
        let mut cfg = base.clone();
        cfg.horizon = t;
        match &budgets {
            None => points.push((format!("T{t}"), cfg)),
            Some(bs) => {
                for &c in bs {
                    let mut cfg = cfg.clone();
                    match &mut cfg.env {
                        EnvSpec::Corrupted { budget, .. } => *budget = c,
                        _ => {
                            return Err(RunError::Config(
                                "budget sweep needs a corrupted environment".into(),
                            ))
                        }
                    }
                    points.push((format!("T{t}_C{c}"), cfg));
                }
            }
        }
    }

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| RunError::Io(format!("{}: {e}", args.out_dir.display())))?;
    let mut rows = String::from("point,horizon,seed,final_regret,gap_sum_regret,violations\n");
    for (name, cfg) in &points {
        let (setup, traces) = run_all(cfg)?;
        let agg = write_outputs(&args.out_dir.join(name), cfg, &setup, &traces)?;
        for s in &agg.per_seed {
            let gap = s
                .gap_sum_regret
                .map(|g| g.to_string())
                .unwrap_or_default();
            rows.push_str(&format!(
                "{name},{},{},{},{gap},{}\n",
                agg.horizon, s.seed, s.final_regret, s.invariant_violations
            ));
        }
        println!(
            "{name}: mean regret {:.2} (std {:.2})",
            agg.mean_final_regret, agg.std_final_regret
        );
    }
    let path = args.out_dir.join("sweep.csv");
    std::fs::write(&path, rows).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    println!("sweep table in {}", path.display());
    Ok(())
}

fn cmd_bench() -> Result<(), RunError> {
    let specs = [
        ("bandit2", "bobw_local"),
        ("bandit3", "bobw_local"),
        ("dynamic_pricing_small", "bobw_global"),
        ("dynamic_pricing_small", "fixed_rate_baseline"),
    ];
    for (game, algorithm) in specs {
        let nu = match game {
            "dynamic_pricing_small" => vec![0.6, 0.25, 0.15],
            _ => {
                let k = catalog_game(game).unwrap().d();
                let mut v = vec![0.0; k];
                v[0] = 0.7;
                v[1] = 0.3;
                v
            }
        };
        let config = RunConfig::from_json(&format!(
            r#"{{
                "game": {{"catalog": "{game}"}},
                "algorithm": "{algorithm}",
                "horizon": 2000,
                "env": {{"kind": "stochastic", "nu": {nu:?}}},
                "seeds": [1]
            }}"#
        ))?;
        let setup = prepare(&config)?;
        let started = Instant::now();
        let trace = run_episode(&setup, 1)?;
        let per_round = started.elapsed().as_secs_f64() * 1e6 / trace.horizon as f64;
        let agg = summarize(std::slice::from_ref(&trace), &setup)?;
        println!(
            "{algorithm:>20} on {game:<22} {per_round:8.2} us/round (regret {:.1})",
            agg.mean_final_regret
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let result = match &cli.command {
        Command::Classify { game, json } => cmd_classify(game, *json),
        Command::Verify { game } => cmd_verify(game),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench => cmd_bench(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
