//! Cell decomposition, Pareto set, neighbor graph, and observability class
//! of a game.
//!
//! Cells live in the outcome simplex. Dimensions are computed by the
//! implicit-equality method: an LP per inequality decides whether it is
//! tight on the whole cell, and the affine-hull dimension is `d - 1` minus
//! the rank of the tight normals projected into the simplex hyperplane.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::game::Game;
use crate::linalg;
use crate::lp::{self, Constraint, LpResult, Relation};

/// Tolerance for LP feasibility and implicit-equality (slack) decisions.
pub const SLACK_TOL: f64 = 1e-7;
/// Relative rank threshold for the implicit-equality normal matrix.
pub const RANK_TOL: f64 = 1e-9;
/// Residual threshold for deciding an observability system is consistent.
pub const OBS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// The LP backend hit its pivot budget.
    LpNumericalFailure { context: String },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LpNumericalFailure { context } => {
                write!(f, "LP did not converge while {context}")
            }
        }
    }
}

impl std::error::Error for GeometryError {}

/// An unordered neighbor pair, stored as `(low, high)`.
pub type Edge = (usize, usize);

/// Static geometry of a game.
#[derive(Debug, Clone, Serialize)]
pub struct GameGeometry {
    /// Affine-hull dimension of each action's cell; `-1` means empty.
    pub cell_dims: Vec<i32>,
    /// Pareto-optimal actions, ascending, one representative per duplicate
    /// group.
    pub pareto: Vec<usize>,
    pub k_pi: usize,
    /// Groups of actions with identical loss rows (size >= 2), each sorted.
    pub duplicates: Vec<Vec<usize>>,
    /// Non-dominated actions with cells of dimension below `d - 1`.
    pub degenerate: Vec<usize>,
    /// Actions with empty cells.
    pub dominated: Vec<usize>,
    /// Neighbor pairs over `pareto`: `dim(C_a meet C_b) = d - 2`.
    pub neighbor_edges: Vec<Edge>,
}

impl GameGeometry {
    pub fn is_pareto(&self, a: usize) -> bool {
        self.pareto.binary_search(&a).is_ok()
    }

    pub fn has_degenerate_actions(&self) -> bool {
        !self.degenerate.is_empty()
    }

    /// Whether the neighbor graph over the Pareto set is connected.
    pub fn neighbor_graph_connected(&self) -> bool {
        if self.pareto.len() <= 1 {
            return true;
        }
        let mut seen: BTreeMap<usize, bool> =
            self.pareto.iter().map(|&a| (a, false)).collect();
        let mut stack = vec![self.pareto[0]];
        *seen.get_mut(&self.pareto[0]).unwrap() = true;
        while let Some(a) = stack.pop() {
            for &(u, v) in &self.neighbor_edges {
                let other = if u == a {
                    v
                } else if v == a {
                    u
                } else {
                    continue;
                };
                if let Some(flag) = seen.get_mut(&other) {
                    if !*flag {
                        *flag = true;
                        stack.push(other);
                    }
                }
            }
        }
        seen.values().all(|&v| v)
    }
}

/// A loss-difference estimator for one neighbor edge: coefficients
/// `w_e(c, sigma)` keyed by `(action, symbol)`. Pairs not present are zero.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub edge: Edge,
    pub entries: BTreeMap<(usize, u32), f64>,
    pub inf_norm: f64,
}

impl Witness {
    pub fn coeff(&self, action: usize, symbol: u32) -> f64 {
        self.entries.get(&(action, symbol)).copied().unwrap_or(0.0)
    }

    /// Max over outcomes of `|sum_c w_e(c, Phi_{c,x}) - (L_{a,x} - L_{b,x})|`.
    pub fn replay_residual(&self, game: &Game) -> f64 {
        let (a, b) = self.edge;
        let mut worst = 0.0f64;
        for x in 0..game.d() {
            let mut s = 0.0;
            for c in 0..game.k() {
                s += self.coeff(c, game.symbol(c, x));
            }
            worst = worst.max((s - (game.loss(a, x) - game.loss(b, x))).abs());
        }
        worst
    }
}

/// Support mode for an observability system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    /// Coefficients restricted to the edge's own two actions.
    Local,
    /// Coefficients over all actions.
    Global,
}

/// Result of an observability check for one edge.
#[derive(Debug, Clone)]
pub struct ObsCheck {
    pub feasible: bool,
    /// Least-squares residual of the linear system.
    pub residual: f64,
    /// Minimum-infinity-norm solution when feasible.
    pub witness: Option<Witness>,
}

/// Observability class of a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GameClassTag {
    Trivial,
    LocallyObservable,
    GloballyObservable,
    Hopeless,
}

impl fmt::Display for GameClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Trivial => "trivial",
            Self::LocallyObservable => "locally_observable",
            Self::GloballyObservable => "globally_observable",
            Self::Hopeless => "hopeless",
        };
        f.write_str(s)
    }
}

/// Classification result: the tag plus the per-edge witnesses that certify
/// it (local-mode for locally observable games, global-mode otherwise;
/// empty for trivial and hopeless games).
#[derive(Debug, Clone)]
pub struct GameClass {
    pub tag: GameClassTag,
    pub witnesses: BTreeMap<Edge, Witness>,
}

fn lp_err<T>(r: Result<T, lp::IterationLimit>, context: &str) -> Result<T, GeometryError> {
    r.map_err(|_| GeometryError::LpNumericalFailure {
        context: context.to_string(),
    })
}

/// Dimension of the polytope `{u in simplex : g.u <= 0 for g in ineqs}`,
/// or -1 when empty.
fn polytope_dim(d: usize, ineqs: &[Vec<f64>]) -> Result<i32, GeometryError> {
    let mut cons: Vec<Constraint> = Vec::with_capacity(ineqs.len() + 1);
    cons.push(Constraint::new(vec![1.0; d], Relation::Eq, 1.0));
    for g in ineqs {
        cons.push(Constraint::new(g.clone(), Relation::Le, 0.0));
    }

    match lp_err(lp::minimize(&vec![0.0; d], &cons), "testing cell feasibility")? {
        LpResult::Infeasible => return Ok(-1),
        LpResult::Optimal { .. } => {}
        LpResult::Unbounded => unreachable!("simplex domain is bounded"),
    }

    // Collect normals of inequalities that are tight across the whole set.
    let mut normals: Vec<Vec<f64>> = Vec::new();
    for g in ineqs {
        // Maximum slack of g.u <= 0 is -min g.u.
        let r = lp_err(lp::minimize(g, &cons), "measuring constraint slack")?;
        if let LpResult::Optimal { value, .. } = r {
            if value >= -SLACK_TOL {
                normals.push(g.clone());
            }
        }
    }
    for x in 0..d {
        // Maximum slack of u_x >= 0 is max u_x.
        let mut obj = vec![0.0; d];
        obj[x] = 1.0;
        let r = lp_err(lp::maximize(&obj, &cons), "measuring coordinate slack")?;
        if let LpResult::Optimal { value, .. } = r {
            if value <= SLACK_TOL {
                normals.push(obj.clone());
            }
        }
    }

    // Project normals into the simplex hyperplane and take the rank.
    let mut data = Vec::with_capacity(normals.len() * d);
    for g in &normals {
        let mean = g.iter().sum::<f64>() / d as f64;
        data.extend(g.iter().map(|v| v - mean));
    }
    let rank = linalg::rank(normals.len(), d, &data, RANK_TOL);
    Ok((d as i32 - 1) - rank as i32)
}

fn cell_ineqs(game: &Game, a: usize) -> Vec<Vec<f64>> {
    let d = game.d();
    (0..game.k())
        .filter(|&b| b != a)
        .map(|b| (0..d).map(|x| game.loss(a, x) - game.loss(b, x)).collect())
        .collect()
}

/// Affine-hull dimension of `C_a`, in `{-1, 0, .., d-1}`.
pub fn cell_dimension(game: &Game, a: usize) -> Result<i32, GeometryError> {
    polytope_dim(game.d(), &cell_ineqs(game, a))
}

/// Dimension of `C_a meet C_b`.
pub fn cell_intersection_dimension(
    game: &Game,
    a: usize,
    b: usize,
) -> Result<i32, GeometryError> {
    let mut ineqs = cell_ineqs(game, a);
    ineqs.extend(cell_ineqs(game, b));
    polytope_dim(game.d(), &ineqs)
}

/// Compute the full geometry of a game.
///
/// Duplicate loss rows are grouped and only the lowest-index member of each
/// group is kept in the Pareto set, so the neighbor relation is computed on
/// distinct cells.
pub fn pareto_and_neighbors(game: &Game) -> Result<GameGeometry, GeometryError> {
    let k = game.k();
    let d = game.d();

    let mut group_of: Vec<usize> = (0..k).collect();
    for a in 0..k {
        if group_of[a] != a {
            continue;
        }
        for b in (a + 1)..k {
            if group_of[b] == b && game.loss_row(a) == game.loss_row(b) {
                group_of[b] = a;
            }
        }
    }
    let mut duplicates: Vec<Vec<usize>> = Vec::new();
    for rep in 0..k {
        let members: Vec<usize> = (0..k).filter(|&b| group_of[b] == rep).collect();
        if members.len() >= 2 {
            duplicates.push(members);
        }
    }

    let mut cell_dims = vec![0i32; k];
    for a in 0..k {
        // Duplicate rows share a cell; compute it once.
        cell_dims[a] = if group_of[a] == a {
            cell_dimension(game, a)?
        } else {
            cell_dims[group_of[a]]
        };
    }

    let full = d as i32 - 1;
    let dominated: Vec<usize> = (0..k).filter(|&a| cell_dims[a] == -1).collect();
    let degenerate: Vec<usize> = (0..k)
        .filter(|&a| cell_dims[a] >= 0 && cell_dims[a] < full)
        .collect();
    let pareto: Vec<usize> = (0..k)
        .filter(|&a| group_of[a] == a && cell_dims[a] == full)
        .collect();

    let mut neighbor_edges = Vec::new();
    for (i, &a) in pareto.iter().enumerate() {
        for &b in &pareto[i + 1..] {
            if cell_intersection_dimension(game, a, b)? == d as i32 - 2 {
                neighbor_edges.push((a, b));
            }
        }
    }

    Ok(GameGeometry {
        cell_dims,
        k_pi: pareto.len(),
        pareto,
        duplicates,
        degenerate,
        dominated,
        neighbor_edges,
    })
}

/// Variables of an observability system, in a symbol-relabeling-invariant
/// order: by action, then by the first outcome at which the symbol appears.
fn system_vars(game: &Game, support: &[usize]) -> Vec<(usize, u32)> {
    let mut vars = Vec::new();
    for &c in support {
        let mut seen: Vec<u32> = Vec::new();
        for x in 0..game.d() {
            let s = game.symbol(c, x);
            if !seen.contains(&s) {
                seen.push(s);
                vars.push((c, s));
            }
        }
    }
    vars
}

/// Decide whether the loss difference of `edge` is estimable with
/// coefficients supported on `mode`, and if so return the
/// minimum-infinity-norm witness.
pub fn observability_check(
    game: &Game,
    edge: Edge,
    mode: ObsMode,
) -> Result<ObsCheck, GeometryError> {
    let (a, b) = edge;
    let support: Vec<usize> = match mode {
        ObsMode::Local => vec![a, b],
        ObsMode::Global => (0..game.k()).collect(),
    };
    let vars = system_vars(game, &support);
    let n = vars.len();
    let d = game.d();

    // Row x: sum over c in support of w(c, Phi_{c,x}) = L_{a,x} - L_{b,x}.
    let mut sys = vec![0.0; d * n];
    let mut rhs = vec![0.0; d];
    for x in 0..d {
        for (j, &(c, s)) in vars.iter().enumerate() {
            if game.symbol(c, x) == s {
                sys[x * n + j] = 1.0;
            }
        }
        rhs[x] = game.loss(a, x) - game.loss(b, x);
    }

    let residual = linalg::least_squares_residual(d, n, &sys, &rhs);
    if residual > OBS_TOL {
        return Ok(ObsCheck {
            feasible: false,
            residual,
            witness: None,
        });
    }

    // Minimum-infinity-norm solution: split w = w+ - w-, minimize t with
    // |w_i| <= t and the system as equalities.
    let cols = 2 * n + 1;
    let tcol = 2 * n;
    let mut cons: Vec<Constraint> = Vec::with_capacity(d + 2 * n);
    for x in 0..d {
        let mut row = vec![0.0; cols];
        for j in 0..n {
            row[j] = sys[x * n + j];
            row[n + j] = -sys[x * n + j];
        }
        cons.push(Constraint::new(row, Relation::Eq, rhs[x]));
    }
    for j in 0..n {
        let mut up = vec![0.0; cols];
        up[j] = 1.0;
        up[n + j] = -1.0;
        up[tcol] = -1.0;
        cons.push(Constraint::new(up, Relation::Le, 0.0));
        let mut lo = vec![0.0; cols];
        lo[j] = -1.0;
        lo[n + j] = 1.0;
        lo[tcol] = -1.0;
        cons.push(Constraint::new(lo, Relation::Le, 0.0));
    }
    let mut obj = vec![0.0; cols];
    obj[tcol] = 1.0;
    let sol = lp_err(lp::minimize(&obj, &cons), "minimizing witness norm")?;
    let (x, t) = match sol.optimal() {
        Some((x, t)) => (x.to_vec(), t),
        // The least-squares test said consistent but the LP disagreed;
        // treat as infeasible rather than fabricate a witness.
        None => {
            return Ok(ObsCheck {
                feasible: false,
                residual,
                witness: None,
            })
        }
    };

    let mut entries = BTreeMap::new();
    for (j, &(c, s)) in vars.iter().enumerate() {
        let w = x[j] - x[n + j];
        if w != 0.0 {
            entries.insert((c, s), w);
        }
    }
    Ok(ObsCheck {
        feasible: true,
        residual,
        witness: Some(Witness {
            edge,
            entries,
            inf_norm: t,
        }),
    })
}

/// Witnesses for every neighbor edge in the given mode, or `None` if some
/// edge is infeasible.
pub fn collect_witnesses(
    game: &Game,
    geom: &GameGeometry,
    mode: ObsMode,
) -> Result<Option<BTreeMap<Edge, Witness>>, GeometryError> {
    let mut out = BTreeMap::new();
    for &edge in &geom.neighbor_edges {
        let check = observability_check(game, edge, mode)?;
        match check.witness {
            Some(w) => {
                out.insert(edge, w);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Classify a game given its geometry.
pub fn classify_given(game: &Game, geom: &GameGeometry) -> Result<GameClass, GeometryError> {
    if geom.k_pi <= 1 {
        return Ok(GameClass {
            tag: GameClassTag::Trivial,
            witnesses: BTreeMap::new(),
        });
    }
    if let Some(witnesses) = collect_witnesses(game, geom, ObsMode::Local)? {
        return Ok(GameClass {
            tag: GameClassTag::LocallyObservable,
            witnesses,
        });
    }
    if let Some(witnesses) = collect_witnesses(game, geom, ObsMode::Global)? {
        return Ok(GameClass {
            tag: GameClassTag::GloballyObservable,
            witnesses,
        });
    }
    Ok(GameClass {
        tag: GameClassTag::Hopeless,
        witnesses: BTreeMap::new(),
    })
}

/// Classify a game from scratch.
pub fn classify(game: &Game) -> Result<GameClass, GeometryError> {
    let geom = pareto_and_neighbors(game)?;
    classify_given(game, &geom)
}

/// A point in the relative interior of `C_a` (strictly positive slack on
/// every constraint), or `None` when no such point exists.
pub fn cell_interior_point(game: &Game, a: usize) -> Result<Option<Vec<f64>>, GeometryError> {
    let d = game.d();
    let ineqs = cell_ineqs(game, a);
    // Variables: u (d entries) then the slack margin delta; maximize delta.
    let cols = d + 1;
    let mut cons = Vec::new();
    let mut one = vec![1.0; cols];
    one[d] = 0.0;
    cons.push(Constraint::new(one, Relation::Eq, 1.0));
    for g in &ineqs {
        let mut row = vec![0.0; cols];
        row[..d].copy_from_slice(g);
        row[d] = 1.0;
        cons.push(Constraint::new(row, Relation::Le, 0.0));
    }
    for x in 0..d {
        let mut row = vec![0.0; cols];
        row[x] = 1.0;
        row[d] = -1.0;
        cons.push(Constraint::new(row, Relation::Ge, 0.0));
    }
    // Cap delta so the LP stays bounded.
    let mut cap = vec![0.0; cols];
    cap[d] = 1.0;
    cons.push(Constraint::new(cap, Relation::Le, 1.0));

    let mut obj = vec![0.0; cols];
    obj[d] = 1.0;
    let r = lp_err(lp::maximize(&obj, &cons), "finding cell interior point")?;
    match r {
        LpResult::Optimal { x, value } if value > SLACK_TOL => Ok(Some(x[..d].to_vec())),
        _ => Ok(None),
    }
}

/// A point in the relative interior of the shared face `C_a meet C_b` of a
/// neighbor pair: on the `l_a = l_b` hyperplane with positive slack on every
/// other cell constraint. Falls back to allowing zero coordinates when the
/// face lies on the simplex boundary.
pub fn cell_face_point(
    game: &Game,
    a: usize,
    b: usize,
) -> Result<Option<Vec<f64>>, GeometryError> {
    let d = game.d();
    let cols = d + 1;
    let build = |coord_margin: bool| {
        let mut cons = Vec::new();
        let mut one = vec![1.0; cols];
        one[d] = 0.0;
        cons.push(Constraint::new(one, Relation::Eq, 1.0));
        let mut face = vec![0.0; cols];
        for x in 0..d {
            face[x] = game.loss(a, x) - game.loss(b, x);
        }
        cons.push(Constraint::new(face, Relation::Eq, 0.0));
        for side in [a, b] {
            for c in 0..game.k() {
                if c == a || c == b {
                    continue;
                }
                let mut row = vec![0.0; cols];
                for x in 0..d {
                    row[x] = game.loss(side, x) - game.loss(c, x);
                }
                row[d] = 1.0;
                cons.push(Constraint::new(row, Relation::Le, 0.0));
            }
        }
        if coord_margin {
            for x in 0..d {
                let mut row = vec![0.0; cols];
                row[x] = 1.0;
                row[d] = -1.0;
                cons.push(Constraint::new(row, Relation::Ge, 0.0));
            }
        }
        let mut cap = vec![0.0; cols];
        cap[d] = 1.0;
        cons.push(Constraint::new(cap, Relation::Le, 1.0));
        cons
    };
    let mut obj = vec![0.0; cols];
    obj[d] = 1.0;
    for coord_margin in [true, false] {
        let r = lp_err(
            lp::maximize(&obj, &build(coord_margin)),
            "finding boundary point",
        )?;
        if let LpResult::Optimal { x, value } = r {
            if value > SLACK_TOL {
                return Ok(Some(x[..d].to_vec()));
            }
        }
    }
    Ok(None)
}

/// Serializable classification report.
#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub game: String,
    pub class: GameClassTag,
    pub pareto: Vec<usize>,
    pub k_pi: usize,
    pub cell_dims: Vec<i32>,
    pub duplicates: Vec<Vec<usize>>,
    pub degenerate: Vec<usize>,
    pub dominated: Vec<usize>,
    pub edges: Vec<EdgeReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub edge: Edge,
    pub witness_inf_norm: Option<f64>,
}

pub fn classification_report(
    game: &Game,
    geom: &GameGeometry,
    class: &GameClass,
) -> ClassifyReport {
    ClassifyReport {
        game: game.name().to_string(),
        class: class.tag,
        pareto: geom.pareto.clone(),
        k_pi: geom.k_pi,
        cell_dims: geom.cell_dims.clone(),
        duplicates: geom.duplicates.clone(),
        degenerate: geom.degenerate.clone(),
        dominated: geom.dominated.clone(),
        edges: geom
            .neighbor_edges
            .iter()
            .map(|e| EdgeReport {
                edge: *e,
                witness_inf_norm: class.witnesses.get(e).map(|w| w.inf_norm),
            })
            .collect(),
    }
}
