//! Small dense linear-algebra helpers.
//!
//! Everything in this crate works on systems with at most a few dozen rows
//! and columns, so the implementations favor clarity and numerical
//! robustness (pivoting, explicit tolerances) over asymptotics.

/// Numerical rank of an `m x n` row-major matrix.
///
/// Gaussian elimination with full pivoting; a pivot counts while its
/// magnitude exceeds `rel_tol` times the largest pivot seen (the first pivot
/// anchors the scale). Returns 0 for an all-zero or empty matrix.
pub fn rank(rows: usize, cols: usize, data: &[f64], rel_tol: f64) -> usize {
    assert_eq!(data.len(), rows * cols);
    let mut a = data.to_vec();
    let mut rank = 0;
    let mut max_pivot = 0.0f64;
    let mut row_perm: Vec<usize> = (0..rows).collect();
    let mut col_perm: Vec<usize> = (0..cols).collect();

    while rank < rows.min(cols) {
        // Locate the largest remaining entry.
        let mut best = 0.0f64;
        let (mut bi, mut bj) = (rank, rank);
        for i in rank..rows {
            for j in rank..cols {
                let v = a[row_perm[i] * cols + col_perm[j]].abs();
                if v > best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if rank == 0 {
            max_pivot = best;
        }
        if best <= rel_tol * max_pivot || best == 0.0 {
            break;
        }
        row_perm.swap(rank, bi);
        col_perm.swap(rank, bj);
        let prow = row_perm[rank];
        let pcol = col_perm[rank];
        let pivot = a[prow * cols + pcol];
        for i in (rank + 1)..rows {
            let r = row_perm[i];
            let factor = a[r * cols + pcol] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in rank..cols {
                let c = col_perm[j];
                a[r * cols + c] -= factor * a[prow * cols + c];
            }
        }
        rank += 1;
    }
    rank
}

/// Distance from `b` to the column space of the `m x n` row-major matrix `a`,
/// i.e. the least-squares residual `min_w ||a w - b||_2`.
///
/// Modified Gram-Schmidt with a drop tolerance relative to the largest
/// column norm; adequate for the tiny observability systems this crate
/// solves.
pub fn least_squares_residual(rows: usize, cols: usize, a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut max_norm = 0.0f64;
    for j in 0..cols {
        let mut v: Vec<f64> = (0..rows).map(|i| a[i * cols + j]).collect();
        for q in &basis {
            let coef = dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q.iter()) {
                *vi -= coef * qi;
            }
        }
        let n = norm(&v);
        max_norm = max_norm.max(n);
        if n > 1e-12 * max_norm.max(1.0) {
            for vi in v.iter_mut() {
                *vi /= n;
            }
            basis.push(v);
        }
    }
    let mut r = b.to_vec();
    for q in &basis {
        let coef = dot(&r, q);
        for (ri, qi) in r.iter_mut().zip(q.iter()) {
            *ri -= coef * qi;
        }
    }
    norm(&r)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_identity() {
        let a = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(rank(2, 2, &a, 1e-9), 2);
    }

    #[test]
    fn rank_of_dependent_rows() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert_eq!(rank(2, 2, &a, 1e-9), 1);
        assert_eq!(rank(2, 2, &[0.0; 4], 1e-9), 0);
    }

    #[test]
    fn rank_rectangular() {
        // 3x2 with independent columns.
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(rank(3, 2, &a, 1e-9), 2);
    }

    #[test]
    fn residual_zero_for_consistent_system() {
        // b in span of columns.
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        assert!(least_squares_residual(3, 2, &a, &b) < 1e-12);
    }

    #[test]
    fn residual_positive_for_inconsistent_system() {
        // Columns span {(1,1)}, b orthogonal-ish.
        let a = [1.0, 1.0];
        let b = [-1.0, 1.0];
        let r = least_squares_residual(2, 1, &a, &b);
        assert!((r - 2.0f64.sqrt()).abs() < 1e-12);
    }
}
