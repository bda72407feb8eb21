//! Dense two-phase simplex for the small feasibility and min-max problems
//! that the game-geometry computations generate.
//!
//! Instances here never exceed a few dozen variables, so the solver keeps a
//! full tableau and uses Bland's rule throughout, trading speed for
//! guaranteed termination and predictable pivots.

use std::fmt;

/// Relation of a linear constraint `coeffs . x REL rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One linear constraint over nonnegative variables.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Self {
        Self { coeffs, rel, rhs }
    }
}

/// Outcome of an LP solve.
#[derive(Debug, Clone)]
pub enum LpResult {
    /// Optimal solution (values for the original variables) and objective value.
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpResult {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpResult::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

/// The solver exceeded its pivot budget; treated as a numerical failure by
/// callers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationLimit;

impl fmt::Display for IterationLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "simplex exceeded its pivot budget")
    }
}

impl std::error::Error for IterationLimit {}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

/// Minimize `obj . x` subject to `constraints` and `x >= 0`.
pub fn minimize(obj: &[f64], constraints: &[Constraint]) -> Result<LpResult, IterationLimit> {
    Tableau::build(obj, constraints).solve()
}

/// Maximize `obj . x` subject to `constraints` and `x >= 0`.
pub fn maximize(obj: &[f64], constraints: &[Constraint]) -> Result<LpResult, IterationLimit> {
    let neg: Vec<f64> = obj.iter().map(|c| -c).collect();
    Ok(match minimize(&neg, constraints)? {
        LpResult::Optimal { x, value } => LpResult::Optimal { x, value: -value },
        other => other,
    })
}

struct Tableau {
    n_orig: usize,
    n_total: usize,
    first_artificial: usize,
    rows: Vec<Vec<f64>>, // each row: n_total coefficients + rhs
    basis: Vec<usize>,
    cost: Vec<f64>, // original objective, padded with zeros
    z: Option<Vec<f64>>, // reduced-cost row, present while a phase runs
}

impl Tableau {
    fn build(obj: &[f64], constraints: &[Constraint]) -> Self {
        let n_orig = obj.len();
        let m = constraints.len();

        // Normalize to nonnegative rhs first so slack variables can start basic.
        let mut norm: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
        for c in constraints {
            assert_eq!(c.coeffs.len(), n_orig, "constraint arity mismatch");
            if c.rhs < 0.0 {
                let flipped = match c.rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                norm.push((c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs));
            } else {
                norm.push((c.coeffs.clone(), c.rel, c.rhs));
            }
        }

        let n_slack = norm
            .iter()
            .filter(|(_, r, _)| matches!(r, Relation::Le | Relation::Ge))
            .count();
        let n_art = norm
            .iter()
            .filter(|(_, r, _)| matches!(r, Relation::Ge | Relation::Eq))
            .count();
        let n_total = n_orig + n_slack + n_art;
        let first_artificial = n_orig + n_slack;

        let mut rows = vec![vec![0.0; n_total + 1]; m];
        let mut basis = vec![0usize; m];
        let mut slack_idx = n_orig;
        let mut art_idx = first_artificial;
        for (i, (coeffs, rel, rhs)) in norm.iter().enumerate() {
            rows[i][..n_orig].copy_from_slice(coeffs);
            rows[i][n_total] = *rhs;
            match rel {
                Relation::Le => {
                    rows[i][slack_idx] = 1.0;
                    basis[i] = slack_idx;
                    slack_idx += 1;
                }
                Relation::Ge => {
                    rows[i][slack_idx] = -1.0;
                    slack_idx += 1;
                    rows[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
                Relation::Eq => {
                    rows[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
            }
        }

        let mut cost = obj.to_vec();
        cost.resize(n_total, 0.0);

        Tableau {
            n_orig,
            n_total,
            first_artificial,
            rows,
            basis,
            cost,
            z: None,
        }
    }

    fn solve(mut self) -> Result<LpResult, IterationLimit> {
        // Phase 1: minimize the sum of artificial variables.
        if self.first_artificial < self.n_total {
            let mut phase1 = vec![0.0; self.n_total];
            for c in phase1.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            let feas = self.run_phase(&phase1, false)?;
            match feas {
                PhaseEnd::Optimal(v) if v > FEAS_EPS => return Ok(LpResult::Infeasible),
                PhaseEnd::Optimal(_) => {}
                // Phase-1 objective is bounded below by zero.
                PhaseEnd::Unbounded => unreachable!("phase 1 cannot be unbounded"),
            }
            self.evict_basic_artificials();
        }

        let obj = self.cost.clone();
        match self.run_phase(&obj, true)? {
            PhaseEnd::Optimal(value) => {
                let mut x = vec![0.0; self.n_orig];
                for (i, &b) in self.basis.iter().enumerate() {
                    if b < self.n_orig {
                        x[b] = self.rows[i][self.n_total];
                    }
                }
                Ok(LpResult::Optimal { x, value })
            }
            PhaseEnd::Unbounded => Ok(LpResult::Unbounded),
        }
    }

    /// Pivot any artificial variable that is still basic (at value zero) out
    /// of the basis so phase 2 never lets one move again. A row with no
    /// usable pivot is linearly dependent and harmless: its artificial stays
    /// pinned at zero because artificials are banned from entering.
    fn evict_basic_artificials(&mut self) {
        for i in 0..self.rows.len() {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let col = (0..self.first_artificial)
                .find(|&j| self.rows[i][j].abs() > 1e-9);
            if let Some(j) = col {
                self.pivot(i, j);
            }
        }
    }

    fn run_phase(&mut self, obj: &[f64], ban_artificials: bool) -> Result<PhaseEnd, IterationLimit> {
        let n_total = self.n_total;
        // Reduced-cost row priced out against the current basis.
        let mut z = vec![0.0; n_total + 1];
        z[..n_total].copy_from_slice(obj);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = obj[b];
            if cb != 0.0 {
                let row = self.rows[i].clone();
                for (zj, rj) in z.iter_mut().zip(row.iter()) {
                    *zj -= cb * rj;
                }
            }
        }
        self.z = Some(z);

        let allowed_cols = if ban_artificials {
            self.first_artificial
        } else {
            self.n_total
        };

        for _ in 0..MAX_PIVOTS {
            let z = self.z.as_ref().unwrap();
            // Bland: lowest-index improving column.
            let entering = (0..allowed_cols).find(|&j| z[j] < -COST_EPS);
            let Some(j) = entering else {
                let value = -self.z.as_ref().unwrap()[n_total];
                self.z = None;
                return Ok(PhaseEnd::Optimal(value));
            };
            // Ratio test; Bland tie-break on the smallest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[j];
                if a > PIVOT_EPS {
                    let ratio = (row[n_total] / a).max(0.0);
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - PIVOT_EPS
                                || (ratio < lr + PIVOT_EPS && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((i, _)) = leave else {
                self.z = None;
                return Ok(PhaseEnd::Unbounded);
            };
            self.pivot(i, j);
        }
        Err(IterationLimit)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let n = self.n_total;
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        let prow = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (rv, pv) in r.iter_mut().zip(prow.iter()) {
                    *rv -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        if let Some(z) = self.z.as_mut() {
            let f = z[col];
            if f != 0.0 {
                for (zv, pv) in z.iter_mut().zip(prow.iter()) {
                    *zv -= f * pv;
                }
                z[col] = 0.0;
            }
        }
        // Guard against drift on the rhs column.
        if self.rows[row][n] < 0.0 && self.rows[row][n] > -1e-9 {
            self.rows[row][n] = 0.0;
        }
        self.basis[row] = col;
    }
}

enum PhaseEnd {
    Optimal(f64),
    Unbounded,
}
