//! Per-round exploration by optimization for locally observable games:
//! joint minimization over the sampling distribution `p` (restricted to
//! `p_a >= q_a / (2k)`) and the estimator table `G` of the convex
//! max-over-outcomes surrogate combining transformation, bias, and
//! stability terms.

use std::fmt;

use crate::estimation::EstTable;
use crate::game::Game;

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// The objective overflowed at the initial point.
    InfeasibleStart,
    /// The objective overflowed and step backoff could not recover.
    NonFiniteObjective,
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InfeasibleStart => write!(f, "objective not finite at the initial point"),
            Self::NonFiniteObjective => write!(f, "objective not finite and backoff failed"),
        }
    }
}

impl std::error::Error for SolveError {}

/// `xi(x) = e^{-x} + x - 1`, nonnegative, convex, with `xi(x) <= x^2` for
/// `x >= -1`.
#[inline]
pub fn xi(x: f64) -> f64 {
    (-x).exp() + x - 1.0
}

#[inline]
fn xi_prime(x: f64) -> f64 {
    1.0 - (-x).exp()
}

/// The bias of estimator table `g` at outcome `x`:
/// `<q, L e_x - sum_a G(a, Phi_ax)> + max_{c in Pi} (sum_a G(a, Phi_ax)_c - L_cx)`.
pub fn bias_eval(game: &Game, pareto: &[usize], q: &[f64], g: &EstTable, x: usize) -> f64 {
    let mut inner = 0.0;
    let mut best = f64::NEG_INFINITY;
    for &c in pareto {
        let mut s_c = 0.0;
        for a in 0..game.k() {
            s_c += g.get(a, game.symbol(a, x), c);
        }
        inner += q[c] * (game.loss(c, x) - s_c);
        let cand = s_c - game.loss(c, x);
        if cand > best {
            best = cand;
        }
    }
    inner + best
}

/// Evaluate the full objective. Returns `None` when an exponential
/// overflows (treated as +infinity by the solver).
pub fn objective_eval(
    game: &Game,
    pareto: &[usize],
    q: &[f64],
    eta: f64,
    p: &[f64],
    g: &EstTable,
) -> Option<f64> {
    let mut worst = f64::NEG_INFINITY;
    for x in 0..game.d() {
        let mut transform = 0.0;
        for a in 0..game.k() {
            transform += (p[a] - q[a]) * game.loss(a, x);
        }
        let mut stability = 0.0;
        for a in 0..game.k() {
            let sym = game.symbol(a, x);
            let mut inner = 0.0;
            for &b in pareto {
                inner += q[b] * xi(eta * g.get(a, sym, b) / p[a]);
            }
            stability += p[a] * inner;
        }
        let v = transform / eta
            + bias_eval(game, pareto, q, g, x) / eta
            + stability / (eta * eta);
        if !v.is_finite() {
            return None;
        }
        if v > worst {
            worst = v;
        }
    }
    Some(worst)
}

/// Sparse gradient of the objective with respect to table entries, as
/// `(action, symbol, coordinate, derivative)` tuples.
pub type TableGrad = Vec<(usize, u32, usize, f64)>;

/// Per-outcome branch values of the objective, or `None` on overflow.
pub fn objective_branches(
    game: &Game,
    pareto: &[usize],
    q: &[f64],
    eta: f64,
    p: &[f64],
    g: &EstTable,
) -> Option<Vec<f64>> {
    (0..game.d())
        .map(|x| {
            let mut transform = 0.0;
            for a in 0..game.k() {
                transform += (p[a] - q[a]) * game.loss(a, x);
            }
            let mut stability = 0.0;
            for a in 0..game.k() {
                let sym = game.symbol(a, x);
                let mut inner = 0.0;
                for &b in pareto {
                    inner += q[b] * xi(eta * g.get(a, sym, b) / p[a]);
                }
                stability += p[a] * inner;
            }
            let v = transform / eta
                + bias_eval(game, pareto, q, g, x) / eta
                + stability / (eta * eta);
            v.is_finite().then_some(v)
        })
        .collect()
}

/// Objective value and a subgradient from the active outcome branch
/// (lowest index on ties).
pub fn objective_with_subgradient(
    game: &Game,
    pareto: &[usize],
    q: &[f64],
    eta: f64,
    p: &[f64],
    g: &EstTable,
) -> Option<(f64, Vec<f64>, TableGrad)> {
    let mut grad_p = Vec::new();
    let mut grad_g = Vec::new();
    let value = objective_with_grad(game, pareto, q, eta, p, g, &mut grad_p, &mut grad_g)?;
    Some((value, grad_p, grad_g))
}

/// Objective value plus a subgradient from the active outcome branch
/// (lowest index on ties).
#[allow(clippy::too_many_arguments)]
fn objective_with_grad(
    game: &Game,
    pareto: &[usize],
    q: &[f64],
    eta: f64,
    p: &[f64],
    g: &EstTable,
    grad_p: &mut Vec<f64>,
    grad_g: &mut TableGrad,
) -> Option<f64> {
    let k = game.k();
    let mut worst = f64::NEG_INFINITY;
    let mut active = 0usize;
    for x in 0..game.d() {
        let mut v = 0.0;
        for a in 0..k {
            v += (p[a] - q[a]) * game.loss(a, x);
        }
        v /= eta;
        v += bias_eval(game, pareto, q, g, x) / eta;
        let mut stability = 0.0;
        for a in 0..k {
            let sym = game.symbol(a, x);
            let mut inner = 0.0;
            for &b in pareto {
                inner += q[b] * xi(eta * g.get(a, sym, b) / p[a]);
            }
            stability += p[a] * inner;
        }
        v += stability / (eta * eta);
        if !v.is_finite() {
            return None;
        }
        if v > worst {
            worst = v;
            active = x;
        }
    }

    let x = active;
    grad_p.clear();
    grad_p.resize(k, 0.0);
    grad_g.clear();

    // Bias argmax (lowest index on ties).
    let mut c_star = pareto[0];
    let mut best = f64::NEG_INFINITY;
    for &c in pareto {
        let mut s_c = 0.0;
        for a in 0..k {
            s_c += g.get(a, game.symbol(a, x), c);
        }
        let cand = s_c - game.loss(c, x);
        if cand > best + 1e-15 {
            best = cand;
            c_star = c;
        }
    }

    for a in 0..k {
        let sym = game.symbol(a, x);
        // d/dp_a of p_a * <q, xi(eta G / p_a)> is <q, xi(z) - xi'(z) z>.
        let mut dp = 0.0;
        for &b in pareto {
            let z = eta * g.get(a, sym, b) / p[a];
            dp += q[b] * (xi(z) - xi_prime(z) * z);
            // Bias and stability contributions to the table gradient.
            let indicator = if b == c_star { 1.0 } else { 0.0 };
            let dg = (indicator - q[b]) / eta + q[b] * xi_prime(z) / eta;
            grad_g.push((a, sym, b, dg));
        }
        grad_p[a] = game.loss(a, x) / eta + dp / (eta * eta);
    }
    Some(worst)
}

/// Euclidean projection of `y` onto `{y >= 0, sum y = radius}`.
fn project_simplex(y: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let cand = (cumsum - radius) / (i + 1) as f64;
        if u - cand > 0.0 {
            theta = cand;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Euclidean projection onto the restricted simplex
/// `{p : sum p = 1, p_a >= q_a / (2k)}`.
pub fn project_restricted_simplex(v: &[f64], q: &[f64]) -> Vec<f64> {
    let k = v.len() as f64;
    let lower: Vec<f64> = q.iter().map(|&x| x / (2.0 * k)).collect();
    let shifted: Vec<f64> = v.iter().zip(lower.iter()).map(|(a, l)| a - l).collect();
    let radius = 1.0 - lower.iter().sum::<f64>();
    let proj = project_simplex(&shifted, radius);
    proj.iter().zip(lower.iter()).map(|(a, l)| a + l).collect()
}

/// Solution of one round's optimization.
#[derive(Debug, Clone)]
pub struct OptSolution {
    pub p: Vec<f64>,
    pub table: EstTable,
    /// Best objective value seen.
    pub value: f64,
    /// `max(0, value)`, the truncation entering the regret accounting.
    pub v_prime: f64,
    pub iterations: usize,
    /// Best-effort optimality-gap estimate from the final subgradient model.
    pub eps_achieved: f64,
}

/// Projected subgradient descent on the restricted problem.
///
/// `init_table` is the in-tree estimator used as the fresh start; when a
/// previous round's solution is supplied the better of the two starting
/// points wins. The reported solution is the best iterate seen, so the
/// value never exceeds the initialization's objective.
#[allow(clippy::too_many_arguments)]
pub fn solve(
    game: &Game,
    pareto: &[usize],
    q: &[f64],
    eta: f64,
    init_table: &EstTable,
    m: usize,
    budget: usize,
    warm: Option<&OptSolution>,
) -> Result<OptSolution, SolveError> {
    solve_scaled(game, pareto, q, eta, init_table, m, budget, warm, 1.0)
}

/// [`solve`] with the base step size multiplied by `step_scale`.
#[allow(clippy::too_many_arguments)]
pub fn solve_scaled(
    game: &Game,
    pareto: &[usize],
    q: &[f64],
    eta: f64,
    init_table: &EstTable,
    m: usize,
    budget: usize,
    warm: Option<&OptSolution>,
    step_scale: f64,
) -> Result<OptSolution, SolveError> {
    let k = game.k();
    let gamma = 0.5f64.min(eta * m as f64 * (k * k) as f64 / 2.0);
    let q_tilde = project_restricted_simplex(q, q);
    let mut p0 = vec![0.0; k];
    for a in 0..k {
        p0[a] = (1.0 - gamma) * q_tilde[a] + gamma / k as f64;
    }
    let p0 = project_restricted_simplex(&p0, q);
    let f0 = objective_eval(game, pareto, q, eta, &p0, init_table)
        .ok_or(SolveError::InfeasibleStart)?;

    let mut p = p0.clone();
    let mut table = init_table.clone();
    let mut best_value = f0;
    let mut best_p = p0;
    let mut best_table = init_table.clone();

    if let Some(prev) = warm {
        let wp = project_restricted_simplex(&prev.p, q);
        if let Some(fw) = objective_eval(game, pareto, q, eta, &wp, &prev.table) {
            if fw < best_value {
                best_value = fw;
                best_p = wp.clone();
                best_table = prev.table.clone();
            }
            if fw < f0 {
                p = wp;
                table = prev.table.clone();
            }
        }
    }

    let mut grad_p = Vec::new();
    let mut grad_g: TableGrad = Vec::new();
    let mut s0 = 0.0;
    let mut iterations = 0;
    let mut final_f = best_value;
    let mut stall = 0usize;

    for i in 1..=budget {
        let f = match objective_with_grad(
            game, pareto, q, eta, &p, &table, &mut grad_p, &mut grad_g,
        ) {
            Some(f) => f,
            // Should have been prevented by move-time backoff below.
            None => return Err(SolveError::NonFiniteObjective),
        };
        iterations = i;
        final_f = f;
        if f < best_value - 1e-12 {
            best_value = f;
            best_p = p.clone();
            best_table = table.clone();
            stall = 0;
        } else {
            if f < best_value {
                best_value = f;
                best_p = p.clone();
                best_table = table.clone();
            }
            stall += 1;
            // Subgradient steps stop paying off quickly on warm starts.
            if stall >= 25 {
                break;
            }
        }

        if i == 1 {
            let mut norm_sq: f64 = grad_p.iter().map(|g| g * g).sum();
            norm_sq += grad_g.iter().map(|(_, _, _, g)| g * g).sum::<f64>();
            s0 = step_scale / (1.0 + norm_sq.sqrt());
        }
        let mut step = s0 / (i as f64).sqrt();

        // Move with backoff: halve the step while the candidate overflows.
        let mut moved = false;
        for _ in 0..60 {
            let cand_p: Vec<f64> = p
                .iter()
                .zip(grad_p.iter())
                .map(|(v, g)| v - step * g)
                .collect();
            let cand_p = project_restricted_simplex(&cand_p, q);
            let mut cand_table = table.clone();
            for &(a, s, b, g) in &grad_g {
                cand_table.add(a, s, b, -step * g);
            }
            if objective_eval(game, pareto, q, eta, &cand_p, &cand_table).is_some() {
                p = cand_p;
                table = cand_table;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }

    // Lower bound from the final linear model: minimize the p-part over the
    // restricted simplex exactly, and allow a unit box for the table part.
    let eps_achieved = if iterations > 0 {
        let lower: Vec<f64> = q.iter().map(|&x| x / (2.0 * k as f64)).collect();
        let free = 1.0 - lower.iter().sum::<f64>();
        let (amin, gmin) = grad_p
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(a, g)| (a, *g))
            .unwrap();
        let _ = amin;
        let mut p_model: f64 = lower
            .iter()
            .zip(grad_p.iter())
            .map(|(l, g)| l * g)
            .sum();
        p_model += free * gmin;
        let p_cur: f64 = p.iter().zip(grad_p.iter()).map(|(v, g)| v * g).sum();
        let g_mass: f64 = grad_g.iter().map(|(_, _, _, g)| g.abs()).sum();
        let model_lb = final_f + (p_model - p_cur) - g_mass;
        (best_value - model_lb).max(0.0)
    } else {
        f64::INFINITY
    };

    Ok(OptSolution {
        p: best_p,
        table: best_table,
        value: best_value,
        v_prime: best_value.max(0.0),
        iterations,
        eps_achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{build_estimator_for, EstTable};
    use crate::game::catalog_game;
    use crate::geometry::{pareto_and_neighbors, ObsMode};

    #[test]
    fn xi_closed_forms() {
        assert_eq!(xi(0.0), 0.0);
        assert!((xi(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((xi(-1.0) - (std::f64::consts::E - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn xi_quadratic_bound_above_minus_one() {
        let mut x = -1.0;
        while x <= 5.0 {
            assert!(xi(x) <= x * x + 1e-12, "x = {x}");
            assert!(xi(x) >= 0.0);
            x += 0.01;
        }
    }

    #[test]
    fn bias_vanishes_for_in_tree_estimator() {
        // The in-tree table satisfies sum_a G(a, Phi_ax)_c = L_cx - L_rootx,
        // a per-outcome shift, which the two bias terms cancel.
        for name in ["bandit2", "bandit3", "apple_tasting"] {
            let g = catalog_game(name).unwrap();
            let geom = pareto_and_neighbors(&g).unwrap();
            let est = build_estimator_for(&g, &geom, ObsMode::Local).unwrap();
            let q: Vec<f64> = (0..g.k())
                .map(|a| if geom.is_pareto(a) { 1.0 / geom.k_pi as f64 } else { 0.0 })
                .collect();
            for x in 0..g.d() {
                let b = bias_eval(&g, &geom.pareto, &q, &est.table, x);
                assert!(b.abs() < 1e-9, "{name} x={x}: bias {b}");
            }
        }
    }

    #[test]
    fn bias_of_zero_estimator() {
        let g = catalog_game("bandit2").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let zero = EstTable::zeros(g.k(), g.n_symbols());
        let q = [0.25, 0.75];
        for x in 0..g.d() {
            let expect: f64 = geom
                .pareto
                .iter()
                .map(|&b| q[b] * g.loss(b, x))
                .sum::<f64>()
                - geom
                    .pareto
                    .iter()
                    .map(|&c| g.loss(c, x))
                    .fold(f64::INFINITY, f64::min);
            let got = bias_eval(&g, &geom.pareto, &q, &zero, x);
            assert!((got - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_invariant_to_per_column_shifts() {
        // Adding a constant to every coordinate of G(a, .) shifts the inner
        // product and the max oppositely.
        let g = catalog_game("bandit2").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let est = build_estimator_for(&g, &geom, ObsMode::Local).unwrap();
        let q = [0.6, 0.4];
        let mut shifted = est.table.clone();
        for a in 0..g.k() {
            for s in 0..g.n_symbols() as u32 {
                for b in 0..g.k() {
                    shifted.add(a, s, b, 0.37);
                }
            }
        }
        for x in 0..g.d() {
            let b0 = bias_eval(&g, &geom.pareto, &q, &est.table, x);
            let b1 = bias_eval(&g, &geom.pareto, &q, &shifted, x);
            assert!((b0 - b1).abs() < 1e-9);
        }
    }

    #[test]
    fn objective_with_zero_table_reduces_to_bias() {
        let g = catalog_game("bandit2").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let zero = EstTable::zeros(g.k(), g.n_symbols());
        let q = [0.5, 0.5];
        let eta = 1.0 / 16.0;
        // p = q has zero transformation term and xi(0) = 0 stability.
        let v = objective_eval(&g, &geom.pareto, &q, eta, &q, &zero).unwrap();
        let expect = (0..g.d())
            .map(|x| bias_eval(&g, &geom.pareto, &q, &zero, x) / eta)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((v - expect).abs() < 1e-12);
        // Doubling eta halves it.
        let v2 = objective_eval(&g, &geom.pareto, &q, 2.0 * eta, &q, &zero).unwrap();
        assert!((v - 2.0 * v2).abs() < 1e-9);
    }

    #[test]
    fn projection_contract() {
        let q = [0.5, 0.5];
        // Already feasible: unchanged.
        let v = [0.6, 0.4];
        let p = project_restricted_simplex(&v, &q);
        for (a, b) in v.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Zero vector, uniform q, k = 2: projection is uniform.
        let p = project_restricted_simplex(&[0.0, 0.0], &q);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        // Feasibility always holds.
        let q = [0.9, 0.05, 0.05];
        for v in [[5.0, -3.0, 0.1], [0.0, 0.0, 9.0], [-1.0, -1.0, -1.0]] {
            let p = project_restricted_simplex(&v, &q);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for a in 0..3 {
                assert!(p[a] - q[a] / 6.0 >= -1e-12);
            }
        }
    }

    #[test]
    fn solver_respects_lemma_bound_on_bandit2() {
        let g = catalog_game("bandit2").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let est = build_estimator_for(&g, &geom, ObsMode::Local).unwrap();
        let m = crate::game::symbol_stats(&g).m;
        let eta = 1.0 / (2.0 * m as f64 * (g.k() * g.k()) as f64);
        for q in [[0.5, 0.5], [0.95, 0.05], [0.1, 0.9]] {
            let sol = solve(&g, &geom.pareto, &q, eta, &est.table, m, 100, None).unwrap();
            let cap = 3.0 * (m * m) as f64 * (g.k().pow(3)) as f64;
            assert!(sol.value <= cap, "value {} above {cap}", sol.value);
            assert!(sol.v_prime >= 0.0);
            // Feasibility of the returned point.
            for a in 0..g.k() {
                assert!(sol.p[a] >= q[a] / 4.0 - 1e-12);
            }
        }
    }

    #[test]
    fn solver_never_beats_initialization_contract() {
        let g = catalog_game("bandit3").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let est = build_estimator_for(&g, &geom, ObsMode::Local).unwrap();
        let m = crate::game::symbol_stats(&g).m;
        let eta = 1.0 / (2.0 * m as f64 * (g.k() * g.k()) as f64);
        let q = [0.2, 0.5, 0.3];
        let k = g.k() as f64;
        let gamma = 0.5f64.min(eta * m as f64 * k * k / 2.0);
        let p0: Vec<f64> = project_restricted_simplex(
            &q.iter()
                .map(|&v| (1.0 - gamma) * v + gamma / k)
                .collect::<Vec<_>>(),
            &q,
        );
        let f0 = objective_eval(&g, &geom.pareto, &q, eta, &p0, &est.table).unwrap();
        let sol = solve(&g, &geom.pareto, &q, eta, &est.table, m, 50, None).unwrap();
        assert!(sol.value <= f0 + 1e-12);
    }

    #[test]
    fn warm_start_cannot_hurt() {
        let g = catalog_game("bandit2").unwrap();
        let geom = pareto_and_neighbors(&g).unwrap();
        let est = build_estimator_for(&g, &geom, ObsMode::Local).unwrap();
        let m = 2;
        let eta = 1.0 / 16.0;
        let q = [0.6, 0.4];
        let cold = solve(&g, &geom.pareto, &q, eta, &est.table, m, 120, None).unwrap();
        let q2 = [0.61, 0.39];
        let cold2 = solve(&g, &geom.pareto, &q2, eta, &est.table, m, 120, None).unwrap();
        let warm = solve(&g, &geom.pareto, &q2, eta, &est.table, m, 120, Some(&cold)).unwrap();
        assert!(warm.value <= cold2.value + 1e-9);
    }
}
