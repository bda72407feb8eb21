//! Loss-difference estimation: an in-tree over the Pareto set combines
//! per-edge witnesses into a table `G(a, sigma) in R^k` whose coordinate
//! differences reproduce loss differences between Pareto actions for every
//! outcome.

use std::collections::BTreeMap;
use std::fmt;

use crate::game::Game;
use crate::geometry::{collect_witnesses, Edge, GameGeometry, ObsMode, Witness};

#[derive(Debug, Clone, PartialEq)]
pub enum EstimationError {
    /// The neighbor graph over the Pareto set is not connected, which only
    /// happens for games outside the framework's assumptions.
    DisconnectedNeighborGraph,
    /// A tree edge has no witness.
    MissingWitness { edge: Edge },
    /// Loss estimates require a positive sampling probability.
    ZeroProbabilityAction { action: usize, prob: f64 },
}

impl fmt::Display for EstimationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DisconnectedNeighborGraph => {
                write!(f, "neighbor graph over the Pareto set is disconnected")
            }
            Self::MissingWitness { edge } => write!(f, "no witness for edge {edge:?}"),
            Self::ZeroProbabilityAction { action, prob } => {
                write!(f, "action {action} sampled with probability {prob}")
            }
        }
    }
}

impl std::error::Error for EstimationError {}

/// One step of a root-ward path: the canonical edge and the sign with which
/// its witness contributes. The witness of edge `(lo, hi)` estimates
/// `L_lo - L_hi`; traversing the edge from `hi` to `lo` flips the sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    pub edge: Edge,
    pub sign: f64,
}

/// Breadth-first in-tree over the Pareto set, rooted at the lowest-index
/// Pareto action.
#[derive(Debug, Clone)]
pub struct InTree {
    pub root: usize,
    /// Parent of each non-root Pareto action, with the tree edge used.
    pub parent: BTreeMap<usize, (usize, Edge)>,
    /// Root-ward edge list for every Pareto action (empty for the root).
    pub paths: BTreeMap<usize, Vec<PathStep>>,
}

pub fn build_in_tree(geom: &GameGeometry) -> Result<InTree, EstimationError> {
    if !geom.neighbor_graph_connected() {
        return Err(EstimationError::DisconnectedNeighborGraph);
    }
    let root = geom.pareto[0];
    let mut parent: BTreeMap<usize, (usize, Edge)> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([root]);
    let mut visited = vec![root];
    while let Some(u) = queue.pop_front() {
        // Ascending edge order keeps the tree deterministic.
        for &(x, y) in &geom.neighbor_edges {
            let (this, other) = if x == u {
                (x, y)
            } else if y == u {
                (y, x)
            } else {
                continue;
            };
            if !visited.contains(&other) {
                visited.push(other);
                parent.insert(other, (this, (x.min(y), x.max(y))));
                queue.push_back(other);
            }
        }
    }

    let mut paths: BTreeMap<usize, Vec<PathStep>> = BTreeMap::new();
    for &b in &geom.pareto {
        let mut path = Vec::new();
        let mut cur = b;
        while cur != root {
            let (par, edge) = parent[&cur];
            // Child equal to the canonical low endpoint walks the edge
            // forward; otherwise the witness enters with sign -1.
            let sign = if cur == edge.0 { 1.0 } else { -1.0 };
            path.push(PathStep { edge, sign });
            cur = par;
        }
        paths.insert(b, path);
    }
    Ok(InTree {
        root,
        parent,
        paths,
    })
}

/// Dense `(action, symbol) -> R^k` table, flat in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EstTable {
    pub k: usize,
    pub n_symbols: usize,
    values: Vec<f64>,
}

impl EstTable {
    pub fn zeros(k: usize, n_symbols: usize) -> Self {
        EstTable {
            k,
            n_symbols,
            values: vec![0.0; k * n_symbols * k],
        }
    }

    #[inline]
    pub fn vector(&self, action: usize, symbol: u32) -> &[f64] {
        let base = (action * self.n_symbols + symbol as usize) * self.k;
        &self.values[base..base + self.k]
    }

    #[inline]
    pub fn get(&self, action: usize, symbol: u32, coord: usize) -> f64 {
        self.values[(action * self.n_symbols + symbol as usize) * self.k + coord]
    }

    #[inline]
    pub fn add(&mut self, action: usize, symbol: u32, coord: usize, delta: f64) {
        self.values[(action * self.n_symbols + symbol as usize) * self.k + coord] += delta;
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The assembled estimator: tree, table, and the game constant
/// `c_G = max(1, k ||G||_inf)`.
#[derive(Debug, Clone)]
pub struct GlobalEstimator {
    pub tree: InTree,
    pub witnesses: BTreeMap<Edge, Witness>,
    pub table: EstTable,
    pub c_g: f64,
}

/// Tabulate `G(a, sigma)_b = sum of signed witnesses along path(b)` from
/// per-edge witnesses covering the in-tree.
pub fn build_global_estimator(
    game: &Game,
    geom: &GameGeometry,
    witnesses: &BTreeMap<Edge, Witness>,
) -> Result<GlobalEstimator, EstimationError> {
    let tree = build_in_tree(geom)?;
    let mut table = EstTable::zeros(game.k(), game.n_symbols());
    for (&b, path) in &tree.paths {
        for step in path {
            let w = witnesses
                .get(&step.edge)
                .ok_or(EstimationError::MissingWitness { edge: step.edge })?;
            for (&(c, s), &coef) in &w.entries {
                table.add(c, s, b, step.sign * coef);
            }
        }
    }
    let c_g = 1.0f64.max(game.k() as f64 * table.inf_norm());
    Ok(GlobalEstimator {
        tree,
        witnesses: witnesses.clone(),
        table,
        c_g,
    })
}

/// Collect witnesses in the given mode and build the estimator.
pub fn build_estimator_for(
    game: &Game,
    geom: &GameGeometry,
    mode: ObsMode,
) -> Result<GlobalEstimator, String> {
    let witnesses = collect_witnesses(game, geom, mode)
        .map_err(|e| e.to_string())?
        .ok_or_else(|| format!("game is not observable in {mode:?} mode"))?;
    build_global_estimator(game, geom, &witnesses).map_err(|e| e.to_string())
}

/// Max over outcomes `x` and Pareto pairs `(b, c)` of the defect
/// `|sum_a (G(a,Phi_ax)_b - G(a,Phi_ax)_c) - (L_bx - L_cx)|`.
pub fn verify_estimator(game: &Game, geom: &GameGeometry, table: &EstTable) -> f64 {
    let mut worst = 0.0f64;
    for x in 0..game.d() {
        // sum_a G(a, Phi_ax), restricted to Pareto coordinates.
        let sums: Vec<f64> = geom
            .pareto
            .iter()
            .map(|&b| {
                (0..game.k())
                    .map(|a| table.get(a, game.symbol(a, x), b))
                    .sum()
            })
            .collect();
        for (i, &b) in geom.pareto.iter().enumerate() {
            for (j, &c) in geom.pareto.iter().enumerate() {
                let lhs = sums[i] - sums[j];
                let rhs = game.loss(b, x) - game.loss(c, x);
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

/// Importance-weighted loss estimate `G(A, sigma) / p_A`.
pub fn loss_estimate(
    table: &EstTable,
    action: usize,
    symbol: u32,
    p_action: f64,
) -> Result<Vec<f64>, EstimationError> {
    if !(p_action > 0.0) {
        return Err(EstimationError::ZeroProbabilityAction {
            action,
            prob: p_action,
        });
    }
    Ok(table
        .vector(action, symbol)
        .iter()
        .map(|g| g / p_action)
        .collect())
}

/// Per-(action, symbol) rows of the table, for diffing across runs.
pub fn dump_table(table: &EstTable) -> String {
    let mut out = String::new();
    for a in 0..table.k {
        for s in 0..table.n_symbols {
            let row = table.vector(a, s as u32);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.12}")).collect();
            out.push_str(&format!("{a} {s} {}\n", cells.join(" ")));
        }
    }
    out
}
