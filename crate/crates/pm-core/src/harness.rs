//! Episode orchestration for both learners and the fixed-rate baseline,
//! regret accounting, theoretical bound overlays, and trace/summary export.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{gap_profile, realized_corruption, EnvSpec, EnvState};
use crate::estimation::{build_global_estimator, EstTable, GlobalEstimator};
use crate::exobopt::{self, OptSolution};
use crate::ftrl::{self, GlobalRate, LocalRate};
use crate::game::{self, Game, GameFile};
use crate::geometry::{
    classify_given, collect_witnesses, pareto_and_neighbors, GameClass, GameClassTag,
    GameGeometry, ObsMode,
};

#[derive(Debug, Clone)]
pub enum RunError {
    Config(String),
    Game(String),
    /// Algorithm not admissible for the game's observability class.
    ClassificationMismatch { algorithm: String, class: String, detail: String },
    Numeric(String),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Game(m) => write!(f, "game error: {m}"),
            Self::ClassificationMismatch {
                algorithm,
                class,
                detail,
            } => write!(f, "{algorithm} cannot run on a {class} game: {detail}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
            Self::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Exit-code class of an error: 1 validation, 2 numeric.
pub fn exit_code(err: &RunError) -> i32 {
    match err {
        RunError::Numeric(_) => 2,
        _ => 1,
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    BobwLocal,
    BobwGlobal,
    FixedRateBaseline,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::BobwLocal => "bobw_local",
            Self::BobwGlobal => "bobw_global",
            Self::FixedRateBaseline => "fixed_rate_baseline",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GameRef {
    Catalog(String),
    File(String),
    Inline(GameFile),
}

/// Learning-rate overrides; `None` means the theorem-shaped default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateOverrides {
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub beta1: Option<f64>,
    /// Constant exploration rate for the fixed-rate baseline.
    #[serde(default)]
    pub gamma0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Re-solve cadence; values above 1 reuse (p, G) and are labeled as
    /// deviations in the summary.
    #[serde(default = "default_solve_every")]
    pub solve_every: usize,
    #[serde(default)]
    pub step_scale: Option<f64>,
}

fn default_budget() -> usize {
    200
}
fn default_solve_every() -> usize {
    1
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            budget: default_budget(),
            solve_every: default_solve_every(),
            step_scale: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
    #[serde(default)]
    pub budgets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameRef,
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub env: EnvSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub rates: RateOverrides,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub debug_asserts: bool,
    /// Default output directory for traces and the summary.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolve_game(&self) -> Result<Game, RunError> {
        let game = match &self.game {
            GameRef::Catalog(name) => game::catalog_game(name),
            GameRef::File(path) => game::load_game_file(Path::new(path)),
            GameRef::Inline(file) => file.into_game(),
        };
        game.map_err(|e| RunError::Game(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Episode setup
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum LearnerPlan {
    Trivial {
        action: usize,
    },
    Local {
        init_table: EstTable,
        m: usize,
        c1: f64,
        floor_b: f64,
        budget: usize,
        solve_every: usize,
        step_scale: f64,
    },
    Global {
        estimator: GlobalEstimator,
        c1: f64,
        c2: f64,
        beta1: Option<f64>,
    },
    Baseline {
        estimator: GlobalEstimator,
        beta: f64,
        gamma: f64,
    },
}

/// Everything shared by the episodes of one config: game, geometry,
/// classification, estimator, resolved rates.
#[derive(Debug)]
pub struct EpisodeSetup {
    pub game: Game,
    pub geom: GameGeometry,
    pub class: GameClass,
    pub horizon: usize,
    pub env: EnvSpec,
    pub debug_asserts: bool,
    /// Maximum distinct symbols per action row.
    pub m: usize,
    /// Estimator constant of the plan's fixed estimator, when it has one.
    pub c_g: Option<f64>,
    plan: LearnerPlan,
}

impl EpisodeSetup {
    /// Anything this run does that departs from the faithful per-round
    /// loop, plus game warnings worth surfacing.
    pub fn deviation_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if let LearnerPlan::Local { solve_every, .. } = &self.plan {
            if *solve_every > 1 {
                notes.push(format!(
                    "solver solution reused across rounds (solve_every = {solve_every})"
                ));
            }
        }
        if !self.geom.duplicates.is_empty() {
            notes.push(format!(
                "duplicate action groups merged for play: {:?}",
                self.geom.duplicates
            ));
        }
        notes
    }
}

/// Validate a config against the game's classification and resolve every
/// parameter. This is the only place algorithm admissibility is decided.
pub fn prepare(config: &RunConfig) -> Result<EpisodeSetup, RunError> {
    if config.horizon < 1 {
        return Err(RunError::Config("horizon must be at least 1".into()));
    }
    if config.seeds.is_empty() {
        return Err(RunError::Config("at least one seed required".into()));
    }
    if config.solver.solve_every < 1 {
        return Err(RunError::Config("solve_every must be at least 1".into()));
    }
    let game = config.resolve_game()?;
    let geom = pareto_and_neighbors(&game).map_err(|e| RunError::Numeric(e.to_string()))?;
    let class = classify_given(&game, &geom).map_err(|e| RunError::Numeric(e.to_string()))?;
    let stats = game::symbol_stats(&game);
    let t = config.horizon;

    let plan = if class.tag == GameClassTag::Trivial {
        LearnerPlan::Trivial {
            action: geom.pareto[0],
        }
    } else {
        match config.algorithm {
            Algorithm::BobwLocal => {
                if class.tag != GameClassTag::LocallyObservable {
                    return Err(RunError::ClassificationMismatch {
                        algorithm: "bobw_local".into(),
                        class: class.tag.to_string(),
                        detail: "the restricted optimization needs local witnesses".into(),
                    });
                }
                if geom.has_degenerate_actions() {
                    return Err(RunError::ClassificationMismatch {
                        algorithm: "bobw_local".into(),
                        class: "degenerate".into(),
                        detail: format!("degenerate actions {:?}", geom.degenerate),
                    });
                }
                let est = build_global_estimator(&game, &geom, &class.witnesses)
                    .map_err(|e| RunError::Numeric(e.to_string()))?;
                let c1 = config
                    .rates
                    .c1
                    .unwrap_or_else(|| ftrl::local_c1_default(stats.m, game.k(), geom.k_pi, t));
                let floor_b = config
                    .rates
                    .b
                    .unwrap_or_else(|| ftrl::local_b_default(stats.m, game.k()));
                LearnerPlan::Local {
                    init_table: est.table,
                    m: stats.m,
                    c1,
                    floor_b,
                    budget: config.solver.budget,
                    solve_every: config.solver.solve_every,
                    step_scale: config.solver.step_scale.unwrap_or(1.0),
                }
            }
            Algorithm::BobwGlobal | Algorithm::FixedRateBaseline => {
                if class.tag == GameClassTag::Hopeless {
                    return Err(RunError::ClassificationMismatch {
                        algorithm: config.algorithm.to_string(),
                        class: class.tag.to_string(),
                        detail: "no global estimator exists".into(),
                    });
                }
                // Global-mode witnesses even for locally observable games;
                // Algorithm 2's estimator is fixed across rounds.
                let witnesses = collect_witnesses(&game, &geom, ObsMode::Global)
                    .map_err(|e| RunError::Numeric(e.to_string()))?
                    .ok_or_else(|| RunError::Numeric("global witnesses missing".into()))?;
                let est = build_global_estimator(&game, &geom, &witnesses)
                    .map_err(|e| RunError::Numeric(e.to_string()))?;
                match config.algorithm {
                    Algorithm::BobwGlobal => LearnerPlan::Global {
                        c1: config
                            .rates
                            .c1
                            .unwrap_or_else(|| ftrl::global_c1_default(est.c_g, geom.k_pi, t)),
                        c2: config
                            .rates
                            .c2
                            .unwrap_or_else(|| ftrl::global_c2_default(est.c_g, t)),
                        beta1: config.rates.beta1,
                        estimator: est,
                    },
                    _ => {
                        let beta = config.rates.beta1.unwrap_or(2.0 * est.c_g);
                        let gamma = config.rates.gamma0.unwrap_or(est.c_g / (2.0 * beta));
                        if !(0.0..=0.5).contains(&gamma) {
                            return Err(RunError::Config(format!(
                                "baseline gamma0 {gamma} outside [0, 1/2]"
                            )));
                        }
                        LearnerPlan::Baseline {
                            estimator: est,
                            beta,
                            gamma,
                        }
                    }
                }
            }
        }
    };

    let c_g = match &plan {
        LearnerPlan::Global { estimator, .. } | LearnerPlan::Baseline { estimator, .. } => {
            Some(estimator.c_g)
        }
        _ => None,
    };
    Ok(EpisodeSetup {
        game,
        geom,
        class,
        horizon: t,
        env: config.env.clone(),
        debug_asserts: config.debug_asserts,
        m: stats.m,
        c_g,
        plan,
    })
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// One emitted trace row. Rows are dense for `t <= 1000` and subsampled
/// beyond that; cumulative columns stay exact at every emitted row.
#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub action: usize,
    pub outcome: usize,
    pub pre_outcome: Option<usize>,
    pub symbol: u32,
    pub loss: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub entropy: f64,
    /// `eta_t` for the local learner, `beta_t` otherwise.
    pub eta_or_beta: f64,
    pub gamma: Option<f64>,
    pub v_prime: Option<f64>,
    /// Learner's cumulative realized loss.
    pub cum_learner_loss: f64,
    /// Per-action cumulative loss on the realized outcomes.
    pub cum_loss: Vec<f64>,
    /// Per-action cumulative `1 - q_{s,a}`.
    pub cum_q_deficit: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct InvariantCounters {
    pub p_floor: usize,
    pub gamma_cap: usize,
    pub eta_cap: usize,
    pub v_prime_sign: usize,
    pub beta_monotone: usize,
}

impl InvariantCounters {
    pub fn total(&self) -> usize {
        self.p_floor + self.gamma_cap + self.eta_cap + self.v_prime_sign + self.beta_monotone
    }
}

/// Full episode record: compact per-round arrays plus emitted rows.
#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub seed: u64,
    pub algorithm: String,
    pub horizon: usize,
    pub actions: Vec<u32>,
    pub outcomes: Vec<u32>,
    pub pre_outcomes: Option<Vec<u32>>,
    pub rows: Vec<RoundRecord>,
    pub entropy_sum: f64,
    /// Per-action `sum_t (1 - q_{t,a})`.
    pub q_deficit: Vec<f64>,
    pub violations: InvariantCounters,
    pub solver_eps_max: f64,
    /// Largest `|y_hat_a| / beta_t` seen (global and baseline plans); the
    /// exploration floor keeps it at most `2 k ||G||_inf / c_G <= 2`.
    pub max_estimate_ratio: f64,
    pub charged_corruption: f64,
    pub wall_secs: f64,
}

fn emit_row(t: usize, horizon: usize) -> bool {
    if t <= 1000 || t == horizon {
        return true;
    }
    let stride = horizon.div_ceil(1000);
    t % stride == 0
}

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

struct Accounting {
    horizon: usize,
    k: usize,
    actions: Vec<u32>,
    outcomes: Vec<u32>,
    pre_outcomes: Vec<u32>,
    any_pre: bool,
    cum_learner_loss: f64,
    cum_loss: Vec<f64>,
    cum_q_deficit: Vec<f64>,
    entropy_sum: f64,
    rows: Vec<RoundRecord>,
}

impl Accounting {
    fn new(horizon: usize, k: usize) -> Self {
        Accounting {
            horizon,
            k,
            actions: Vec::with_capacity(horizon),
            outcomes: Vec::with_capacity(horizon),
            pre_outcomes: Vec::new(),
            any_pre: false,
            cum_learner_loss: 0.0,
            cum_loss: vec![0.0; k],
            cum_q_deficit: vec![0.0; k],
            entropy_sum: 0.0,
            rows: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        game: &Game,
        t: usize,
        action: usize,
        outcome: usize,
        pre_outcome: Option<usize>,
        q: &[f64],
        p: &[f64],
        entropy: f64,
        eta_or_beta: f64,
        gamma: Option<f64>,
        v_prime: Option<f64>,
    ) {
        self.actions.push(action as u32);
        self.outcomes.push(outcome as u32);
        if let Some(pre) = pre_outcome {
            self.any_pre = true;
            self.pre_outcomes.push(pre as u32);
        }
        self.cum_learner_loss += game.loss(action, outcome);
        for a in 0..self.k {
            self.cum_loss[a] += game.loss(a, outcome);
            self.cum_q_deficit[a] += 1.0 - q[a];
        }
        self.entropy_sum += entropy;
        if emit_row(t, self.horizon) {
            self.rows.push(RoundRecord {
                t,
                action,
                outcome,
                pre_outcome,
                symbol: game.symbol(action, outcome),
                loss: game.loss(action, outcome),
                q: q.to_vec(),
                p: p.to_vec(),
                entropy,
                eta_or_beta,
                gamma,
                v_prime,
                cum_learner_loss: self.cum_learner_loss,
                cum_loss: self.cum_loss.clone(),
                cum_q_deficit: self.cum_q_deficit.clone(),
            });
        }
    }
}

/// Run one episode. Learner sampling uses RNG stream 0 and the environment
/// stream 1, both derived from the seed, so traces are reproducible and
/// seeds are independent.
pub fn run_episode(setup: &EpisodeSetup, seed: u64) -> Result<RunTrace, RunError> {
    let start = Instant::now();
    let game = &setup.game;
    let k = game.k();
    let t_max = setup.horizon;

    let mut learner_rng = ChaCha8Rng::seed_from_u64(seed);
    learner_rng.set_stream(0);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(1);
    let mut env = EnvState::build(&setup.env, game, &setup.geom, t_max, env_rng)
        .map_err(|e| RunError::Config(e.to_string()))?;

    let mut acc = Accounting::new(t_max, k);
    let mut violations = InvariantCounters::default();
    let mut solver_eps_max: f64 = 0.0;
    let mut max_estimate_ratio: f64 = 0.0;

    match &setup.plan {
        LearnerPlan::Trivial { action } => {
            let a = *action;
            let mut q = vec![0.0; k];
            q[a] = 1.0;
            for t in 1..=t_max {
                let draw = env.draw(t);
                // Sampling from a point mass still consumes one draw so
                // traces stay aligned across plans.
                let _ = crate::env::sample_index(&mut learner_rng, &q);
                acc.record(game, t, a, draw.x, draw.x_pre, &q, &q, 0.0, 0.0, None, None);
                env.observe_action(a);
            }
        }
        LearnerPlan::Local {
            init_table,
            m,
            c1,
            floor_b,
            budget,
            solve_every,
            step_scale,
        } => {
            let pareto = setup.geom.pareto.clone();
            let mut rate = LocalRate::new(*c1, *floor_b, setup.geom.k_pi);
            let mut l_hat = vec![0.0; k];
            let mut prev_sol: Option<OptSolution> = None;
            let eta_cap = 1.0 / (2.0 * *m as f64 * (k * k) as f64);
            for t in 1..=t_max {
                let eta = rate.eta();
                if eta > eta_cap + 1e-12 {
                    violations.eta_cap += 1;
                    if setup.debug_asserts {
                        return Err(RunError::Numeric(format!(
                            "eta {eta} above 1/(2 m k^2) at round {t}"
                        )));
                    }
                }
                let q = ftrl::compute_q(&l_hat, &pareto, eta)
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?;
                let draw = env.draw(t);

                let resolve = (t - 1) % solve_every == 0 || prev_sol.is_none();
                let sol = if resolve {
                    let warm = prev_sol.as_ref();
                    exobopt::solve_scaled(
                        game,
                        &pareto,
                        &q,
                        eta,
                        init_table,
                        *m,
                        *budget,
                        warm,
                        *step_scale,
                    )
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?
                } else {
                    // Reuse the previous solution with p reprojected onto
                    // the current restricted simplex.
                    let mut sol = prev_sol.clone().unwrap();
                    sol.p = exobopt::project_restricted_simplex(&sol.p, &q);
                    sol
                };

                let p = sol.p.clone();
                for a in 0..k {
                    if p[a] < q[a] / (2.0 * k as f64) - 1e-9 {
                        violations.p_floor += 1;
                        if setup.debug_asserts {
                            return Err(RunError::Numeric(format!(
                                "p below q/(2k) at round {t}, action {a}"
                            )));
                        }
                    }
                }
                if sol.v_prime < 0.0 {
                    violations.v_prime_sign += 1;
                }
                solver_eps_max = solver_eps_max.max(sol.eps_achieved);

                let a_t = crate::env::sample_index(&mut learner_rng, &p);
                let sym = game.symbol(a_t, draw.x);
                let y_hat = crate::estimation::loss_estimate(&sol.table, a_t, sym, p[a_t])
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?;
                for a in 0..k {
                    l_hat[a] += y_hat[a];
                }

                let h = ftrl::shannon_entropy(&q);
                rate.advance(h);
                acc.record(
                    game,
                    t,
                    a_t,
                    draw.x,
                    draw.x_pre,
                    &q,
                    &p,
                    h,
                    eta,
                    None,
                    Some(sol.v_prime),
                );
                env.observe_action(a_t);
                prev_sol = Some(sol);
            }
        }
        LearnerPlan::Global {
            estimator,
            c1,
            c2,
            beta1,
        } => {
            let pareto = setup.geom.pareto.clone();
            let mut rate = GlobalRate::new(*c1, *c2, estimator.c_g, *beta1);
            let mut l_hat = vec![0.0; k];
            let mut prev_beta = rate.beta();
            for t in 1..=t_max {
                let eta = rate.eta();
                let q = ftrl::compute_q(&l_hat, &pareto, eta)
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?;
                let draw = env.draw(t);
                let round = rate.advance(&q, &pareto);
                if round.beta < prev_beta - 1e-12 {
                    violations.beta_monotone += 1;
                }
                prev_beta = rate.beta();
                if round.gamma > 0.5 + 1e-12 {
                    violations.gamma_cap += 1;
                    if setup.debug_asserts {
                        return Err(RunError::Numeric(format!(
                            "gamma {} above 1/2 at round {t}",
                            round.gamma
                        )));
                    }
                }
                let p = ftrl::mix_exploration(&q, round.gamma);
                let floor = round.gamma / k as f64;
                for (a, &pa) in p.iter().enumerate() {
                    if pa < floor - 1e-12 {
                        violations.p_floor += 1;
                        if setup.debug_asserts {
                            return Err(RunError::Numeric(format!(
                                "p below gamma/k at round {t}, action {a}"
                            )));
                        }
                    }
                }

                let a_t = crate::env::sample_index(&mut learner_rng, &p);
                let sym = game.symbol(a_t, draw.x);
                let y_hat = crate::estimation::loss_estimate(&estimator.table, a_t, sym, p[a_t])
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?;
                for a in 0..k {
                    l_hat[a] += y_hat[a];
                    max_estimate_ratio = max_estimate_ratio.max(y_hat[a].abs() / round.beta);
                }
                acc.record(
                    game,
                    t,
                    a_t,
                    draw.x,
                    draw.x_pre,
                    &q,
                    &p,
                    round.a_t,
                    round.beta,
                    Some(round.gamma),
                    None,
                );
                env.observe_action(a_t);
            }
        }
        LearnerPlan::Baseline {
            estimator,
            beta,
            gamma,
        } => {
            let pareto = setup.geom.pareto.clone();
            let eta = 1.0 / beta;
            let mut l_hat = vec![0.0; k];
            for t in 1..=t_max {
                let q = ftrl::compute_q(&l_hat, &pareto, eta)
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?;
                let draw = env.draw(t);
                let p = ftrl::mix_exploration(&q, *gamma);
                let a_t = crate::env::sample_index(&mut learner_rng, &p);
                let sym = game.symbol(a_t, draw.x);
                let y_hat = crate::estimation::loss_estimate(&estimator.table, a_t, sym, p[a_t])
                    .map_err(|e| RunError::Numeric(format!("round {t}: {e}")))?;
                for a in 0..k {
                    l_hat[a] += y_hat[a];
                    max_estimate_ratio = max_estimate_ratio.max(y_hat[a].abs() * eta);
                }
                let h = ftrl::shannon_entropy(&q);
                acc.record(
                    game,
                    t,
                    a_t,
                    draw.x,
                    draw.x_pre,
                    &q,
                    &p,
                    h,
                    *beta,
                    Some(*gamma),
                    None,
                );
                env.observe_action(a_t);
            }
        }
    }

    let algorithm = match &setup.plan {
        LearnerPlan::Trivial { .. } => "trivial".to_string(),
        LearnerPlan::Local { .. } => "bobw_local".to_string(),
        LearnerPlan::Global { .. } => "bobw_global".to_string(),
        LearnerPlan::Baseline { .. } => "fixed_rate_baseline".to_string(),
    };

    Ok(RunTrace {
        seed,
        algorithm,
        horizon: t_max,
        actions: acc.actions,
        outcomes: acc.outcomes,
        pre_outcomes: acc.any_pre.then_some(acc.pre_outcomes),
        rows: acc.rows,
        entropy_sum: acc.entropy_sum,
        q_deficit: acc.cum_q_deficit,
        violations,
        solver_eps_max,
        max_estimate_ratio,
        charged_corruption: env.charged(),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Run every seed of a config, in parallel, in seed order.
pub fn run_all(config: &RunConfig) -> Result<(EpisodeSetup, Vec<RunTrace>), RunError> {
    if config.sweep.is_some() {
        return Err(RunError::Config(
            "config has a sweep section; use the sweep command".into(),
        ));
    }
    let setup = prepare(config)?;
    let traces: Result<Vec<RunTrace>, RunError> = config
        .seeds
        .par_iter()
        .map(|&seed| run_episode(&setup, seed))
        .collect();
    Ok((setup, traces?))
}

// ---------------------------------------------------------------------------
// Regret accounting
// ---------------------------------------------------------------------------

/// Pseudo-regret of a trace against the best fixed action in hindsight.
#[derive(Debug, Clone, Serialize)]
pub struct RegretCurve {
    /// Hindsight-optimal action on the realized outcomes (ties prefer
    /// Pareto actions, then lowest index).
    pub a_star: usize,
    /// `(t, cumulative regret)` at the emitted rows.
    pub curve: Vec<(usize, f64)>,
    pub final_regret: f64,
    /// Regret against the stochastically optimal action, when the
    /// environment defines one.
    pub stochastic_final: Option<f64>,
}

/// Compute regret curves against the hindsight comparator, and against the
/// stochastic comparator when `nu` is supplied.
pub fn pseudo_regret(
    trace: &RunTrace,
    game: &Game,
    geom: &GameGeometry,
    nu: Option<&[f64]>,
) -> RegretCurve {
    let k = game.k();
    let mut totals = vec![0.0; k];
    let mut learner = 0.0;
    for (&a, &x) in trace.actions.iter().zip(trace.outcomes.iter()) {
        learner += game.loss(a as usize, x as usize);
        for b in 0..k {
            totals[b] += game.loss(b, x as usize);
        }
    }
    let best = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_star = (0..k)
        .filter(|&a| totals[a] <= best + 1e-9)
        .min_by_key(|&a| (!geom.is_pareto(a), a))
        .unwrap();

    let curve: Vec<(usize, f64)> = trace
        .rows
        .iter()
        .map(|r| (r.t, r.cum_learner_loss - r.cum_loss[a_star]))
        .collect();
    let final_regret = learner - totals[a_star];

    let stochastic_final = nu.map(|nu| {
        let profile = gap_profile(game, nu);
        learner - totals[profile.a_star]
    });

    RegretCurve {
        a_star,
        curve,
        final_regret,
        stochastic_final,
    }
}

// ---------------------------------------------------------------------------
// Theoretical bound overlays
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRegime {
    Stochastic,
    Adversarial,
    Corrupted,
}

/// Shape overlay of the paper-facing regret bounds with every order
/// constant set to one. Diagnostic only.
#[derive(Debug, Clone, Serialize)]
pub struct BoundOverlay {
    pub label: String,
    pub value: f64,
}

/// Evaluate the bound formula for the given class and regime.
///
/// `delta_min` is required (and must be positive) in the stochastic and
/// corrupted regimes; `corruption` is the budget C.
pub fn theoretical_bounds(
    tag: GameClassTag,
    m: usize,
    k: usize,
    k_pi: usize,
    c_g: f64,
    horizon: usize,
    delta_min: Option<f64>,
    corruption: f64,
    regime: BoundRegime,
) -> Result<BoundOverlay, RunError> {
    let t = horizon.max(3) as f64;
    let kpi = k_pi as f64;
    let log_t = t.ln();
    let log_kpi_t = (kpi * t).ln();
    let need_gap = || -> Result<f64, RunError> {
        match delta_min {
            Some(d) if d > 0.0 => Ok(d),
            _ => Err(RunError::Config(
                "bound overlay needs delta_min > 0".into(),
            )),
        }
    };
    let local = matches!(
        tag,
        GameClassTag::LocallyObservable | GameClassTag::Trivial
    );
    let value = match (local, regime) {
        (true, BoundRegime::Adversarial) => {
            let mf = m as f64;
            let kf = k as f64;
            mf * kf.powf(1.5) * (t * log_t * kpi.ln()).sqrt()
        }
        (true, BoundRegime::Stochastic) => {
            let r = (m * m) as f64 * (k as f64).powi(4) * log_t * log_kpi_t / need_gap()?;
            r
        }
        (true, BoundRegime::Corrupted) => {
            let r = (m * m) as f64 * (k as f64).powi(4) * log_t * log_kpi_t / need_gap()?;
            r + (corruption * r).sqrt()
        }
        (false, BoundRegime::Adversarial) => {
            (c_g * c_g * log_t * log_kpi_t).cbrt() * t.powf(2.0 / 3.0)
        }
        (false, BoundRegime::Stochastic) => {
            let gap = need_gap()?;
            c_g * c_g * log_t * log_kpi_t / (gap * gap)
        }
        (false, BoundRegime::Corrupted) => {
            let gap = need_gap()?;
            let r = c_g * c_g * log_t * log_kpi_t / (gap * gap);
            r + (corruption * corruption * r).cbrt()
        }
    };
    Ok(BoundOverlay {
        label: "shape overlay, constants = 1".into(),
        value,
    })
}

// ---------------------------------------------------------------------------
// Summaries and export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_regret: f64,
    pub hindsight_a_star: usize,
    pub stochastic_final_regret: Option<f64>,
    /// `sum_t Delta_{A_t}` against the configured distribution: the
    /// behavior deficit, immune to the outcome sequence itself.
    pub gap_sum_regret: Option<f64>,
    pub q_a_star: f64,
    pub entropy_sum: f64,
    /// `Q log(e k_pi T / Q) - sum H(q_t)`, nonnegative when the entropy
    /// bound holds; `None` when `Q = 0`.
    pub entropy_bound_margin: Option<f64>,
    pub realized_corruption: Option<f64>,
    pub invariant_violations: usize,
    pub solver_eps_max: f64,
    pub wall_secs: f64,
    /// Curve at the emitted rows, `(t, regret)`.
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub game: String,
    pub algorithm: String,
    pub horizon: usize,
    pub n_seeds: usize,
    pub mean_final_regret: f64,
    pub std_final_regret: f64,
    pub mean_gap_sum_regret: Option<f64>,
    pub std_gap_sum_regret: Option<f64>,
    pub mean_entropy_sum: f64,
    pub total_violations: usize,
    pub min_entropy_bound_margin: Option<f64>,
    /// Informational self-bounding check on corrupted runs:
    /// `sum_t Delta_{A_t} - 2 C_realized <= regret + slack`.
    pub self_bounding_ok: Option<bool>,
    pub per_seed: Vec<RunSummary>,
}

fn summarize_one(
    trace: &RunTrace,
    game: &Game,
    geom: &GameGeometry,
    nu: Option<&[f64]>,
) -> RunSummary {
    let regret = pseudo_regret(trace, game, geom, nu);
    let q = trace.q_deficit[regret.a_star];
    let t = trace.horizon as f64;
    let kpi = geom.k_pi as f64;
    let margin = if q > 0.0 {
        Some(q * (std::f64::consts::E * kpi * t / q).ln() - trace.entropy_sum)
    } else {
        None
    };
    let realized = trace
        .pre_outcomes
        .as_ref()
        .map(|pre| realized_corruption(game, &trace.outcomes, Some(pre)).unwrap());
    let gap_sum = nu.map(|nu| {
        let profile = gap_profile(game, nu);
        trace
            .actions
            .iter()
            .map(|&a| profile.gaps[a as usize])
            .sum()
    });
    RunSummary {
        seed: trace.seed,
        final_regret: regret.final_regret,
        hindsight_a_star: regret.a_star,
        stochastic_final_regret: regret.stochastic_final,
        gap_sum_regret: gap_sum,
        q_a_star: q,
        entropy_sum: trace.entropy_sum,
        entropy_bound_margin: margin,
        realized_corruption: realized,
        invariant_violations: trace.violations.total(),
        solver_eps_max: trace.solver_eps_max,
        wall_secs: trace.wall_secs,
        curve: regret.curve,
    }
}

/// Aggregate per-seed summaries; errors on empty input.
pub fn summarize(
    traces: &[RunTrace],
    setup: &EpisodeSetup,
) -> Result<Aggregate, RunError> {
    if traces.is_empty() {
        return Err(RunError::Config("no traces to summarize".into()));
    }
    let nu: Option<Vec<f64>> = match &setup.env {
        EnvSpec::Stochastic { nu } => Some(nu.clone()),
        EnvSpec::Corrupted { nu, .. } => Some(nu.clone()),
        EnvSpec::StochasticallyConstrained { nu, .. } => Some(nu.clone()),
        EnvSpec::Adversarial { .. } => None,
    };
    let per_seed: Vec<RunSummary> = traces
        .iter()
        .map(|tr| summarize_one(tr, &setup.game, &setup.geom, nu.as_deref()))
        .collect();
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().map(|s| s.final_regret).sum::<f64>() / n;
    let var = per_seed
        .iter()
        .map(|s| (s.final_regret - mean).powi(2))
        .sum::<f64>()
        / n;
    let (mean_gap, std_gap) = if per_seed.iter().all(|s| s.gap_sum_regret.is_some()) {
        let gm = per_seed
            .iter()
            .map(|s| s.gap_sum_regret.unwrap())
            .sum::<f64>()
            / n;
        let gv = per_seed
            .iter()
            .map(|s| (s.gap_sum_regret.unwrap() - gm).powi(2))
            .sum::<f64>()
            / n;
        (Some(gm), Some(gv.sqrt()))
    } else {
        (None, None)
    };
    let min_margin = per_seed
        .iter()
        .filter_map(|s| s.entropy_bound_margin)
        .fold(None, |acc: Option<f64>, m| {
            Some(acc.map_or(m, |a| a.min(m)))
        });

    // Informational self-bounding check for corrupted runs, averaged over
    // seeds since the definition is in expectation.
    let self_bounding_ok = match (&setup.env, nu.as_deref()) {
        (EnvSpec::Corrupted { .. }, Some(nu)) => {
            let profile = gap_profile(&setup.game, nu);
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for (tr, s) in traces.iter().zip(per_seed.iter()) {
                let gap_sum: f64 = tr
                    .actions
                    .iter()
                    .map(|&a| profile.gaps[a as usize])
                    .sum();
                lhs += gap_sum - 2.0 * s.realized_corruption.unwrap_or(0.0);
                rhs += s.final_regret;
            }
            let slack = 4.0 * (traces[0].horizon as f64).sqrt() * n.sqrt();
            Some(lhs <= rhs + slack)
        }
        _ => None,
    };

    Ok(Aggregate {
        game: setup.game.name().to_string(),
        algorithm: traces[0].algorithm.clone(),
        horizon: setup.horizon,
        n_seeds: per_seed.len(),
        mean_final_regret: mean,
        std_final_regret: var.sqrt(),
        mean_gap_sum_regret: mean_gap,
        std_gap_sum_regret: std_gap,
        mean_entropy_sum: per_seed.iter().map(|s| s.entropy_sum).sum::<f64>() / n,
        total_violations: per_seed.iter().map(|s| s.invariant_violations).sum(),
        min_entropy_bound_margin: min_margin,
        self_bounding_ok,
        per_seed,
    })
}

/// Stable trace CSV: one row per emitted record.
pub const TRACE_HEADER: &str =
    "t,action,outcome,outcome_pre,symbol,loss,regret_cum,q_astar,entropy,eta_or_beta,gamma,v_prime";

/// Render a trace as CSV against the hindsight comparator.
pub fn trace_csv(trace: &RunTrace, game: &Game, geom: &GameGeometry) -> String {
    let regret = pseudo_regret(trace, game, geom, None);
    let a_star = regret.a_star;
    let mut out = String::with_capacity(trace.rows.len() * 64);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let pre = r
            .pre_outcome
            .map(|x| x.to_string())
            .unwrap_or_default();
        let gamma = r.gamma.map(|g| g.to_string()).unwrap_or_default();
        let vp = r.v_prime.map(|v| v.to_string()).unwrap_or_default();
        let regret_cum = r.cum_learner_loss - r.cum_loss[a_star];
        let q_astar = r.cum_q_deficit[a_star];
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.action,
            r.outcome,
            pre,
            r.symbol,
            r.loss,
            regret_cum,
            q_astar,
            r.entropy,
            r.eta_or_beta,
            gamma,
            vp
        ));
    }
    out
}

/// Write per-seed trace CSVs and the aggregate summary JSON.
pub fn write_outputs(
    dir: &Path,
    config: &RunConfig,
    setup: &EpisodeSetup,
    traces: &[RunTrace],
) -> Result<Aggregate, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    for trace in traces {
        let path = dir.join(format!("trace_seed{}.csv", trace.seed));
        std::fs::write(&path, trace_csv(trace, &setup.game, &setup.geom))
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    }
    let agg = summarize(traces, setup)?;
    #[derive(Serialize)]
    struct SummaryDoc<'a> {
        version: &'static str,
        config: &'a RunConfig,
        summary: &'a Aggregate,
    }
    let doc = SummaryDoc {
        version: env!("CARGO_PKG_VERSION"),
        config,
        summary: &agg,
    };
    let path = dir.join("summary.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&doc).map_err(|e| RunError::Io(e.to_string()))?,
    )
    .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(game: &str, algorithm: Algorithm, horizon: usize, seeds: Vec<u64>) -> RunConfig {
        RunConfig {
            game: GameRef::Catalog(game.into()),
            algorithm,
            horizon,
            env: EnvSpec::Stochastic {
                nu: vec![0.7, 0.3],
            },
            seeds,
            rates: RateOverrides::default(),
            solver: SolverConfig::default(),
            debug_asserts: false,
            sweep: None,
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"{
            "game": {"catalog": "bandit2"},
            "algorithm": "bobw_local",
            "horizon": 10,
            "env": {"kind": "stochastic", "nu": [0.7, 0.3]},
            "seeds": [1],
            "bogus": true
        }"#;
        assert!(RunConfig::from_json(text).is_err());
    }

    #[test]
    fn config_parses_minimal() {
        let text = r#"{
            "game": {"catalog": "bandit2"},
            "algorithm": "bobw_local",
            "horizon": 10,
            "env": {"kind": "stochastic", "nu": [0.7, 0.3]},
            "seeds": [1, 2]
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.solver.budget, 200);
        assert_eq!(cfg.solver.solve_every, 1);
    }

    #[test]
    fn classification_mismatch_is_rejected() {
        let cfg = base_config("dynamic_pricing_small", Algorithm::BobwLocal, 10, vec![1]);
        let err = prepare(&cfg).unwrap_err();
        assert!(matches!(err, RunError::ClassificationMismatch { .. }));

        let mut cfg = base_config("hopeless_small", Algorithm::BobwGlobal, 10, vec![1]);
        cfg.env = EnvSpec::Stochastic {
            nu: vec![0.5, 0.5],
        };
        assert!(prepare(&cfg).is_err());
    }

    #[test]
    fn trivial_game_short_circuits_with_zero_regret() {
        let mut cfg = base_config("bandit2", Algorithm::BobwLocal, 50, vec![3]);
        cfg.game = GameRef::Inline(GameFile {
            k: 2,
            d: 2,
            loss: vec![0.0, 0.0, 1.0, 1.0],
            feedback: vec![0, 1, 0, 1],
            name: "trivial".into(),
        });
        let setup = prepare(&cfg).unwrap();
        assert_eq!(setup.class.tag, GameClassTag::Trivial);
        let trace = run_episode(&setup, 3).unwrap();
        let regret = pseudo_regret(&trace, &setup.game, &setup.geom, None);
        assert_eq!(regret.final_regret, 0.0);
        assert!(trace.actions.iter().all(|&a| a == 0));
    }

    #[test]
    fn local_episode_runs_and_checks_invariants() {
        let mut cfg = base_config("bandit2", Algorithm::BobwLocal, 300, vec![11]);
        cfg.solver.budget = 40;
        let setup = prepare(&cfg).unwrap();
        let trace = run_episode(&setup, 11).unwrap();
        assert_eq!(trace.actions.len(), 300);
        assert_eq!(trace.violations.total(), 0);
        assert_eq!(trace.rows.len(), 300, "dense rows below 1000");
    }

    #[test]
    fn global_episode_runs_on_pricing() {
        let mut cfg = base_config("dynamic_pricing_small", Algorithm::BobwGlobal, 400, vec![5]);
        cfg.env = EnvSpec::Stochastic {
            nu: vec![0.6, 0.25, 0.15],
        };
        let setup = prepare(&cfg).unwrap();
        let trace = run_episode(&setup, 5).unwrap();
        assert_eq!(trace.violations.total(), 0);
        let summary = summarize(&[trace], &setup).unwrap();
        assert!(summary.min_entropy_bound_margin.unwrap_or(1.0) >= 0.0);
    }

    #[test]
    fn traces_are_deterministic() {
        let mut cfg = base_config("bandit2", Algorithm::BobwLocal, 200, vec![7, 8]);
        cfg.solver.budget = 30;
        let (setup, traces1) = run_all(&cfg).unwrap();
        let (_, traces2) = run_all(&cfg).unwrap();
        for (a, b) in traces1.iter().zip(traces2.iter()) {
            assert_eq!(
                trace_csv(a, &setup.game, &setup.geom),
                trace_csv(b, &setup.game, &setup.geom)
            );
        }
        assert_ne!(traces1[0].actions, traces1[1].actions, "seeds differ");
    }

    #[test]
    fn baseline_matches_frozen_global() {
        let g = crate::game::catalog_game("dynamic_pricing_small").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let witnesses = collect_witnesses(&g, &geom, ObsMode::Global)
            .unwrap()
            .unwrap();
        let est = build_global_estimator(&g, &geom, &witnesses).unwrap();
        let beta1 = 3.0 * est.c_g;

        let mut frozen = base_config("dynamic_pricing_small", Algorithm::BobwGlobal, 250, vec![2]);
        frozen.env = EnvSpec::Stochastic {
            nu: vec![0.6, 0.25, 0.15],
        };
        frozen.rates.c1 = Some(0.0);
        frozen.rates.c2 = Some(0.0);
        frozen.rates.beta1 = Some(beta1);

        let mut baseline = frozen.clone();
        baseline.algorithm = Algorithm::FixedRateBaseline;
        baseline.rates = RateOverrides {
            beta1: Some(beta1),
            gamma0: Some(est.c_g / (2.0 * beta1)),
            ..Default::default()
        };

        let (setup_f, traces_f) = run_all(&frozen).unwrap();
        let (setup_b, traces_b) = run_all(&baseline).unwrap();
        let csv_f = trace_csv(&traces_f[0], &setup_f.game, &setup_f.geom);
        let csv_b = trace_csv(&traces_b[0], &setup_b.game, &setup_b.geom);
        // Identical sampling paths; the per-round schedule columns agree.
        assert_eq!(traces_f[0].actions, traces_b[0].actions);
        assert_eq!(csv_f, csv_b);
    }

    #[test]
    fn worst_action_regret_grows_linearly() {
        // A synthetic trace that always plays the bad arm of bandit2.
        let g = crate::game::catalog_game("bandit2").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let t = 10_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nu = [0.7, 0.3];
        let mut actions = Vec::new();
        let mut outcomes = Vec::new();
        for _ in 0..t {
            actions.push(1u32);
            outcomes.push(crate::env::sample_index(&mut rng, &nu) as u32);
        }
        let trace = RunTrace {
            seed: 9,
            algorithm: "synthetic".into(),
            horizon: t,
            actions,
            outcomes,
            pre_outcomes: None,
            rows: vec![],
            entropy_sum: 0.0,
            q_deficit: vec![0.0, 0.0],
            violations: InvariantCounters::default(),
            solver_eps_max: 0.0,
            charged_corruption: 0.0,
            wall_secs: 0.0,
        };
        let r = pseudo_regret(&trace, &g, &geom, Some(&nu));
        assert_eq!(r.a_star, 0);
        let expect = 0.4 * t as f64;
        assert!((r.final_regret - expect).abs() < 0.1 * t as f64);
        assert!(r.final_regret >= 0.0);
    }

    #[test]
    fn overlay_formulas() {
        // Local adversarial shape at m=2, k=2, kpi=2, T=1e4.
        let b = theoretical_bounds(
            GameClassTag::LocallyObservable,
            2,
            2,
            2,
            1.0,
            10_000,
            None,
            0.0,
            BoundRegime::Adversarial,
        )
        .unwrap();
        let expect = 2.0
            * 2.0f64.powf(1.5)
            * (1.0e4 * 1.0e4f64.ln() * 2.0f64.ln()).sqrt();
        assert!((b.value - expect).abs() < 1e-9);
        assert!((b.value - 1429.307128459966).abs() < 1e-6);

        // Gap must be positive for the stochastic shapes.
        assert!(theoretical_bounds(
            GameClassTag::LocallyObservable,
            2,
            2,
            2,
            1.0,
            10_000,
            Some(0.0),
            0.0,
            BoundRegime::Stochastic,
        )
        .is_err());

        // C = 0 collapses the corrupted bound onto the stochastic one.
        let s = theoretical_bounds(
            GameClassTag::LocallyObservable,
            2,
            2,
            2,
            1.0,
            10_000,
            Some(0.4),
            0.0,
            BoundRegime::Stochastic,
        )
        .unwrap();
        let c0 = theoretical_bounds(
            GameClassTag::LocallyObservable,
            2,
            2,
            2,
            1.0,
            10_000,
            Some(0.4),
            0.0,
            BoundRegime::Corrupted,
        )
        .unwrap();
        assert!((s.value - c0.value).abs() < 1e-12);
    }

    #[test]
    fn summary_aggregates() {
        let mut cfg = base_config("bandit2", Algorithm::BobwLocal, 150, vec![1, 1]);
        cfg.solver.budget = 20;
        let (setup, traces) = run_all(&cfg).unwrap();
        let agg = summarize(&traces, &setup).unwrap();
        assert_eq!(agg.n_seeds, 2);
        assert_eq!(agg.std_final_regret, 0.0, "identical seeds");
        assert!(summarize(&[], &setup).is_err());
    }
}
