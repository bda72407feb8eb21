use pm_core::env::EnvSpec;
use pm_core::ftrl;
use pm_core::harness::*;
use std::time::Instant;

fn main() {
    for t in [1000usize, 10_000, 100_000] {
        let cfg = RunConfig {
            game: GameRef::Catalog("bandit2".into()),
            algorithm: Algorithm::BobwLocal,
            horizon: t,
            env: EnvSpec::Stochastic { nu: vec![0.7, 0.3] },
            seeds: (1..=8).collect(),
            rates: RateOverrides {
                c1: Some(0.125 * ftrl::local_c1_default(2, 2, 2, t)),
                ..Default::default()
            },
            solver: Default::default(),
            debug_asserts: false,
            sweep: None,
        };
        let t0 = Instant::now();
        let (setup, traces) = run_all(&cfg).unwrap();
        let agg = summarize(&traces, &setup).unwrap();
        println!(
            "T={t:>6}: regret={:.0}±{:.0}  ({:.1}s, {} viol)",
            agg.mean_final_regret,
            agg.std_final_regret,
            t0.elapsed().as_secs_f64(),
            agg.total_violations
        );
    }
}
