//! Acceptance suite: one test per exit criterion, each printing a PASS line
//! with the measured values. Run with `cargo test --test acceptance --
//! --nocapture` to see the report; several criteria run long-horizon
//! episode batches and take a few minutes total.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pm_core::env::{CorruptionSpec, EnvSpec, GeneratorSpec};
use pm_core::estimation::{build_estimator_for, verify_estimator, EstTable};
use pm_core::exobopt::{
    objective_branches, objective_eval, objective_with_subgradient, project_restricted_simplex,
    solve,
};
use pm_core::ftrl;
use pm_core::game::{catalog_game, symbol_stats, validate_game, CATALOG};
use pm_core::geometry::{classify_given, pareto_and_neighbors, GameClassTag, ObsMode};
use pm_core::harness::{
    run_all, summarize, theoretical_bounds, trace_csv, Aggregate, Algorithm, BoundRegime,
    GameRef, RateOverrides, RunConfig, SolverConfig,
};

fn config(
    game: &str,
    algorithm: Algorithm,
    horizon: usize,
    env: EnvSpec,
    seeds: Vec<u64>,
) -> RunConfig {
    RunConfig {
        game: GameRef::Catalog(game.into()),
        algorithm,
        horizon,
        env,
        seeds,
        rates: RateOverrides::default(),
        solver: SolverConfig::default(),
        debug_asserts: false,
        sweep: None,
    }
}

/// Schedule constants used by the long-horizon acceptance runs: the
/// theorem-shaped defaults keep only the growth orders, so the scale factor
/// is calibrated once here and pinned.
const LOCAL_C1_SCALE: f64 = 0.125;
const GLOBAL_C2_SCALE: f64 = 0.25;

fn local_c1(horizon: usize) -> f64 {
    LOCAL_C1_SCALE * ftrl::local_c1_default(2, 2, 2, horizon)
}

fn pricing_c2(horizon: usize) -> f64 {
    let g = catalog_game("dynamic_pricing_small").unwrap();
    let geom = pareto_and_neighbors(&g).unwrap();
    let est = build_estimator_for(&g, &geom, ObsMode::Global).unwrap();
    GLOBAL_C2_SCALE * ftrl::global_c2_default(est.c_g, horizon)
}

fn run_agg(cfg: &RunConfig) -> Aggregate {
    let (setup, traces) = run_all(cfg).unwrap();
    summarize(&traces, &setup).unwrap()
}

fn slope(r_small: f64, t_small: usize, r_big: f64, t_big: usize) -> f64 {
    (r_big / r_small).ln() / (t_big as f64 / t_small as f64).ln()
}

#[test]
fn criterion_01_estimator_identity() {
    let mut worst: f64 = 0.0;
    for name in CATALOG {
        if name == "hopeless_small" {
            continue;
        }
        let game = catalog_game(name).unwrap();
        let geom = pareto_and_neighbors(&game).unwrap();
        let est = build_estimator_for(&game, &geom, ObsMode::Global).unwrap();
        let r = verify_estimator(&game, &geom, &est.table);
        assert!(r < 1e-9, "{name}: global-mode residual {r}");
        worst = worst.max(r);
        if classify_given(&game, &geom).unwrap().tag == GameClassTag::LocallyObservable {
            let est = build_estimator_for(&game, &geom, ObsMode::Local).unwrap();
            let r = verify_estimator(&game, &geom, &est.table);
            assert!(r < 1e-9, "{name}: local-mode residual {r}");
            worst = worst.max(r);
        }
    }
    println!("ACCEPTANCE 1 PASS: estimator identity, max residual {worst:.3e} < 1e-9");
}

#[test]
fn criterion_02_observability_replay() {
    let mut worst: f64 = 0.0;
    for name in CATALOG {
        let game = catalog_game(name).unwrap();
        let geom = pareto_and_neighbors(&game).unwrap();
        let class = classify_given(&game, &geom).unwrap();
        for (edge, w) in &class.witnesses {
            let r = w.replay_residual(&game);
            assert!(r < 1e-9, "{name} edge {edge:?}: replay residual {r}");
            worst = worst.max(r);
            if class.tag == GameClassTag::LocallyObservable {
                for (action, _) in w.entries.keys() {
                    assert!(
                        *action == edge.0 || *action == edge.1,
                        "{name}: local witness supported off its edge"
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 2 PASS: witness replay, max residual {worst:.3e} < 1e-9");
}

#[test]
fn criterion_03_classification_regression() {
    let expected = [
        ("bandit2", GameClassTag::LocallyObservable),
        ("bandit3", GameClassTag::LocallyObservable),
        ("apple_tasting", GameClassTag::LocallyObservable),
        ("full_info_small", GameClassTag::LocallyObservable),
        ("dynamic_pricing_small", GameClassTag::GloballyObservable),
        ("hopeless_small", GameClassTag::Hopeless),
    ];
    for (name, tag) in expected {
        let game = catalog_game(name).unwrap();
        let got = pm_core::classify(&game).unwrap().tag;
        assert_eq!(got, tag, "{name}");
    }
    // A strictly dominated second action leaves a single Pareto action.
    let trivial = validate_game("trivial", 2, 2, &[0.0, 0.0, 1.0, 1.0], &[0, 1, 0, 1]).unwrap();
    assert_eq!(pm_core::classify(&trivial).unwrap().tag, GameClassTag::Trivial);
    println!("ACCEPTANCE 3 PASS: catalog classification matches the pinned regression");
}

fn random_pareto_point(rng: &mut ChaCha8Rng, k: usize, pareto: &[usize]) -> Vec<f64> {
    let mut q = vec![0.0; k];
    let mut z = 0.0;
    for &a in pareto {
        let e: f64 = -(rng.gen::<f64>().max(1e-12)).ln();
        q[a] = e;
        z += e;
    }
    for &a in pareto {
        q[a] /= z;
    }
    q
}

#[test]
fn criterion_04_solver_value_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for name in ["bandit2", "bandit3"] {
        let game = catalog_game(name).unwrap();
        let geom = pareto_and_neighbors(&game).unwrap();
        let est = build_estimator_for(&game, &geom, ObsMode::Local).unwrap();
        let m = symbol_stats(&game).m;
        let k = game.k();
        let eta = 1.0 / (2.0 * m as f64 * (k * k) as f64);
        let cap = 3.0 * (m * m) as f64 * k.pow(3) as f64;
        let mut worst: f64 = f64::NEG_INFINITY;
        for _ in 0..500 {
            let q = random_pareto_point(&mut rng, k, &geom.pareto);
            let sol = solve(&game, &geom.pareto, &q, eta, &est.table, m, 200, None).unwrap();
            assert!(
                sol.value <= cap,
                "{name}: solver value {} above {cap} at q = {q:?}",
                sol.value
            );
            assert!(sol.v_prime >= 0.0);
            worst = worst.max(sol.value);
        }
        println!(
            "ACCEPTANCE 4 PASS ({name}): 500 random q, max solver value {worst:.3} <= {cap}"
        );
    }
}

#[test]
fn criterion_05_convexity_and_subgradient() {
    let game = catalog_game("bandit2").unwrap();
    let geom = pareto_and_neighbors(&game).unwrap();
    let k = game.k();
    let ns = game.n_symbols();
    let eta = 1.0 / 16.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut random_point = |rng: &mut ChaCha8Rng, q: &[f64]| {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let p = project_restricted_simplex(&raw, q);
        let mut g = EstTable::zeros(k, ns);
        for a in 0..k {
            for s in 0..ns as u32 {
                for b in 0..k {
                    g.add(a, s, b, rng.gen::<f64>() * 4.0 - 2.0);
                }
            }
        }
        (p, g)
    };

    // Convexity along random segments.
    let mut done = 0;
    while done < 1000 {
        let q = random_pareto_point(&mut rng, k, &geom.pareto);
        let (p1, g1) = random_point(&mut rng, &q);
        let (p2, g2) = random_point(&mut rng, &q);
        let lambda: f64 = rng.gen();
        let pm: Vec<f64> = p1
            .iter()
            .zip(p2.iter())
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let mut gm = EstTable::zeros(k, ns);
        for a in 0..k {
            for s in 0..ns as u32 {
                for b in 0..k {
                    gm.add(
                        a,
                        s,
                        b,
                        lambda * g1.get(a, s, b) + (1.0 - lambda) * g2.get(a, s, b),
                    );
                }
            }
        }
        let (f1, f2, fm) = match (
            objective_eval(&game, &geom.pareto, &q, eta, &p1, &g1),
            objective_eval(&game, &geom.pareto, &q, eta, &p2, &g2),
            objective_eval(&game, &geom.pareto, &q, eta, &pm, &gm),
        ) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => continue,
        };
        assert!(
            fm <= lambda * f1 + (1.0 - lambda) * f2 + 1e-9,
            "convexity violated: {fm} > {lambda} * {f1} + (1 - {lambda}) * {f2}"
        );
        done += 1;
    }

    // Subgradient vs central finite differences where the active branch has
    // a margin.
    let mut checked = 0;
    while checked < 200 {
        let q = random_pareto_point(&mut rng, k, &geom.pareto);
        let (p, g) = random_point(&mut rng, &q);
        let branches = match objective_branches(&game, &geom.pareto, &q, eta, &p, &g) {
            Some(b) => b,
            None => continue,
        };
        let mut sorted = branches.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if sorted.len() > 1 && sorted[0] - sorted[1] <= 1e-6 {
            continue;
        }
        if p.iter().any(|&v| v < 1e-3) {
            continue;
        }
        let (_, grad_p, grad_g) =
            objective_with_subgradient(&game, &geom.pareto, &q, eta, &p, &g).unwrap();

        // Random direction, sum-zero in p.
        let mut dp: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mean = dp.iter().sum::<f64>() / k as f64;
        for v in dp.iter_mut() {
            *v -= mean;
        }
        let mut dg = EstTable::zeros(k, ns);
        let mut analytic: f64 = dp.iter().zip(grad_p.iter()).map(|(d, g)| d * g).sum();
        for a in 0..k {
            for s in 0..ns as u32 {
                for b in 0..k {
                    dg.add(a, s, b, rng.gen::<f64>() - 0.5);
                }
            }
        }
        for &(a, s, b, gv) in &grad_g {
            analytic += gv * dg.get(a, s, b);
        }

        let h = 1e-6;
        let eval_at = |sign: f64| -> Option<f64> {
            let ps: Vec<f64> = p.iter().zip(dp.iter()).map(|(v, d)| v + sign * h * d).collect();
            let mut gs = g.clone();
            for a in 0..k {
                for sym in 0..ns as u32 {
                    for b in 0..k {
                        gs.add(a, sym, b, sign * h * dg.get(a, sym, b));
                    }
                }
            }
            objective_eval(&game, &geom.pareto, &q, eta, &ps, &gs)
        };
        let (fp, fm) = match (eval_at(1.0), eval_at(-1.0)) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        let fd = (fp - fm) / (2.0 * h);
        let denom = fd.abs().max(analytic.abs());
        if denom > 1e-4 {
            let rel = (fd - analytic).abs() / denom;
            assert!(
                rel < 1e-4,
                "subgradient mismatch: fd {fd}, analytic {analytic}, rel {rel}"
            );
        } else {
            assert!((fd - analytic).abs() < 1e-8);
        }
        checked += 1;
    }
    println!("ACCEPTANCE 5 PASS: convexity on 1000 mixtures, subgradient on {checked} points");
}

#[test]
fn criterion_06_in_run_invariants() {
    let t = 5000;
    let seeds: Vec<u64> = (1..=3).collect();
    let mut cases: Vec<RunConfig> = Vec::new();

    let mut local = |env: EnvSpec| {
        let mut c = config("bandit2", Algorithm::BobwLocal, t, env, seeds.clone());
        c.rates.c1 = Some(local_c1(t));
        c
    };
    cases.push(local(EnvSpec::Stochastic { nu: vec![0.7, 0.3] }));
    cases.push(local(EnvSpec::Corrupted {
        nu: vec![0.7, 0.3],
        policy: CorruptionSpec::FrontLoaded { target: None },
        budget: 20.0,
    }));
    cases.push(local(EnvSpec::Adversarial {
        generator: GeneratorSpec::BestResponse,
    }));
    cases.push(config(
        "bandit3",
        Algorithm::BobwLocal,
        t,
        EnvSpec::Stochastic {
            nu: vec![0.5, 0.3, 0.2],
        },
        seeds.clone(),
    ));

    let pricing_nu = vec![0.6, 0.25, 0.15];
    let mut global = |env: EnvSpec| {
        let mut c = config("dynamic_pricing_small", Algorithm::BobwGlobal, t, env, seeds.clone());
        c.rates.c2 = Some(pricing_c2(t));
        c
    };
    cases.push(global(EnvSpec::Stochastic {
        nu: pricing_nu.clone(),
    }));
    cases.push(global(EnvSpec::Adversarial {
        generator: GeneratorSpec::CellSwitching {
            period: None,
            margin: None,
        },
    }));
    cases.push(global(EnvSpec::StochasticallyConstrained {
        nu: pricing_nu.clone(),
        period: 500,
        amplitude: 0.5,
    }));
    cases.push(config(
        "dynamic_pricing_small",
        Algorithm::FixedRateBaseline,
        t,
        EnvSpec::Stochastic {
            nu: pricing_nu.clone(),
        },
        seeds.clone(),
    ));

    let mut runs = 0;
    for mut cfg in cases {
        cfg.debug_asserts = true;
        let agg = run_agg(&cfg);
        assert_eq!(
            agg.total_violations, 0,
            "{} on {}: invariant violations",
            agg.algorithm, agg.game
        );
        if let Some(margin) = agg.min_entropy_bound_margin {
            assert!(
                margin >= 0.0,
                "{} on {}: entropy bound margin {margin}",
                agg.algorithm,
                agg.game
            );
        }
        runs += agg.n_seeds;
    }
    println!("ACCEPTANCE 6 PASS: zero invariant violations and nonnegative entropy-bound margins over {runs} episodes");
}

#[test]
fn criterion_07_stochastic_scaling_local() {
    let seeds: Vec<u64> = (1..=20).collect();
    let horizons = [1_000usize, 10_000, 100_000];
    let mut means = Vec::new();
    for &t in &horizons {
        let mut cfg = config(
            "bandit2",
            Algorithm::BobwLocal,
            t,
            EnvSpec::Stochastic { nu: vec![0.7, 0.3] },
            seeds.clone(),
        );
        cfg.rates.c1 = Some(local_c1(t));
        let agg = run_agg(&cfg);
        assert_eq!(agg.total_violations, 0);
        assert!(
            agg.min_entropy_bound_margin.unwrap_or(0.0) >= 0.0,
            "entropy bound violated"
        );
        means.push(agg.mean_final_regret);
    }
    let s1 = slope(means[0], horizons[0], means[1], horizons[1]);
    let s2 = slope(means[1], horizons[1], means[2], horizons[2]);
    assert!(s1 < 0.5, "slope 1e3 -> 1e4 is {s1:.3}");
    assert!(s2 < 0.5, "slope 1e4 -> 1e5 is {s2:.3}");
    let overlay = theoretical_bounds(
        GameClassTag::LocallyObservable,
        2,
        2,
        2,
        1.0,
        100_000,
        None,
        0.0,
        BoundRegime::Adversarial,
    )
    .unwrap();
    assert!(
        means[2] < overlay.value,
        "regret {} not below the adversarial overlay {}",
        means[2],
        overlay.value
    );
    println!(
        "ACCEPTANCE 7 PASS: regrets {:.0}/{:.0}/{:.0}, slopes {s1:.3} and {s2:.3} < 0.5, final {:.0} < overlay {:.0}",
        means[0], means[1], means[2], means[2], overlay.value
    );
}

#[test]
fn criterion_08_hard_game_scaling_global() {
    let seeds: Vec<u64> = (1..=20).collect();
    let horizons = [10_000usize, 100_000];
    let mut run_env = |mk: &dyn Fn() -> EnvSpec| -> Vec<f64> {
        horizons
            .iter()
            .map(|&t| {
                let mut cfg = config(
                    "dynamic_pricing_small",
                    Algorithm::BobwGlobal,
                    t,
                    mk(),
                    seeds.clone(),
                );
                cfg.rates.c2 = Some(pricing_c2(t));
                let agg = run_agg(&cfg);
                assert_eq!(agg.total_violations, 0);
                agg.mean_final_regret
            })
            .collect()
    };

    let adv = run_env(&|| EnvSpec::Adversarial {
        generator: GeneratorSpec::CellSwitching {
            period: None,
            margin: None,
        },
    });
    let s_adv = slope(adv[0], horizons[0], adv[1], horizons[1]);
    assert!(
        (0.5..=0.85).contains(&s_adv),
        "adversarial slope {s_adv:.3} outside [0.5, 0.85]"
    );

    let sto = run_env(&|| EnvSpec::Stochastic {
        nu: vec![0.6, 0.25, 0.15],
    });
    let s_sto = slope(sto[0], horizons[0], sto[1], horizons[1]);
    assert!(s_sto < 0.5, "stochastic slope {s_sto:.3}");
    println!(
        "ACCEPTANCE 8 PASS: switching slope {s_adv:.3} in [0.5, 0.85]; stochastic slope {s_sto:.3} < 0.5"
    );
}

#[test]
fn criterion_09_corruption_robustness() {
    let t = 100_000;
    let seeds: Vec<u64> = (1..=20).collect();
    let nu = vec![0.7, 0.3];

    let mut sto_cfg = config(
        "bandit2",
        Algorithm::BobwLocal,
        t,
        EnvSpec::Stochastic { nu: nu.clone() },
        seeds.clone(),
    );
    sto_cfg.rates.c1 = Some(local_c1(t));
    let sto = run_agg(&sto_cfg);

    let mut corr = Vec::new();
    for budget in [0.0f64, 50.0, 500.0] {
        let mut cfg = config(
            "bandit2",
            Algorithm::BobwLocal,
            t,
            EnvSpec::Corrupted {
                nu: nu.clone(),
                policy: CorruptionSpec::FrontLoaded { target: None },
                budget,
            },
            seeds.clone(),
        );
        cfg.rates.c1 = Some(local_c1(t));
        let agg = run_agg(&cfg);
        assert_eq!(agg.total_violations, 0);
        for s in &agg.per_seed {
            let realized = s.realized_corruption.unwrap();
            assert!(realized <= budget + 1e-9, "ledger overspent: {realized}");
        }
        corr.push(agg);
    }

    // Pseudo-regret against the clean distribution is nondecreasing in the
    // corruption budget.
    let g0 = corr[0].mean_gap_sum_regret.unwrap();
    let g1 = corr[1].mean_gap_sum_regret.unwrap();
    let g2 = corr[2].mean_gap_sum_regret.unwrap();
    assert!(
        g0 <= g1 && g1 <= g2,
        "gap-sum regret not monotone: {g0:.1}, {g1:.1}, {g2:.1}"
    );

    // The zero-budget column is statistically indistinguishable from the
    // pure stochastic run (identical seeds make it exactly equal here).
    let m0 = corr[0].mean_gap_sum_regret.unwrap();
    let ms = sto.mean_gap_sum_regret.unwrap();
    let band =
        2.0 * (corr[0].std_gap_sum_regret.unwrap() + sto.std_gap_sum_regret.unwrap());
    assert!(
        (m0 - ms).abs() <= band.max(1e-9),
        "C=0 mean {m0:.2} vs stochastic {ms:.2}, band {band:.2}"
    );
    println!(
        "ACCEPTANCE 9 PASS: gap-sum regret {g0:.0} <= {g1:.0} <= {g2:.0}; C=0 vs stochastic: {m0:.1} vs {ms:.1}"
    );
}

#[test]
fn criterion_10_determinism() {
    let mut cfgs = Vec::new();
    let mut c = config(
        "bandit2",
        Algorithm::BobwLocal,
        3000,
        EnvSpec::Stochastic { nu: vec![0.7, 0.3] },
        vec![1, 2],
    );
    c.rates.c1 = Some(local_c1(3000));
    cfgs.push(c);
    cfgs.push(config(
        "dynamic_pricing_small",
        Algorithm::BobwGlobal,
        3000,
        EnvSpec::Adversarial {
            generator: GeneratorSpec::CellSwitching {
                period: None,
                margin: None,
            },
        },
        vec![1, 2],
    ));

    let mut compared = 0;
    for cfg in &cfgs {
        let (setup1, traces1) = run_all(cfg).unwrap();
        let (setup2, traces2) = run_all(cfg).unwrap();
        for (a, b) in traces1.iter().zip(traces2.iter()) {
            let csv1 = trace_csv(a, &setup1.game, &setup1.geom);
            let csv2 = trace_csv(b, &setup2.game, &setup2.geom);
            assert_eq!(csv1.as_bytes(), csv2.as_bytes(), "trace bytes differ");
            compared += 1;
        }
    }
    println!("ACCEPTANCE 10 PASS: {compared} trace CSVs byte-identical across reruns");
}
