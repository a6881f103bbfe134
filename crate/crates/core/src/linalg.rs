//! Exact linear algebra over symbolic scalars, plus a small dense f64
//! solver for the per-node systems of the time integrator.
//!
//! Pivoting needs a zero test; on the rational fragment the structural test
//! is exact, and callers dealing with analytic coefficients pass the
//! randomized-evaluation oracle instead.

use crate::expr::ScalarExpr;

/// Affine solution set of `A x = b`.
#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub particular: Vec<ScalarExpr>,
    pub nullspace: Vec<Vec<ScalarExpr>>,
    pub pivot_cols: Vec<usize>,
}

/// Row-reduce the augmented system and read off the solution set.
/// `Err(row)` reports the first inconsistent row.
pub fn solve(
    a: &[Vec<ScalarExpr>],
    b: &[ScalarExpr],
    zero: &mut impl FnMut(&ScalarExpr) -> bool,
) -> Result<LinearSolution, usize> {
    match solve_lenient(a, b, zero) {
        (sol, true) => Ok(sol),
        (_, false) => Err(first_inconsistent(a, b, zero)),
    }
}

fn first_inconsistent(
    a: &[Vec<ScalarExpr>],
    b: &[ScalarExpr],
    zero: &mut impl FnMut(&ScalarExpr) -> bool,
) -> usize {
    // re-run to locate the offending row index for the error message
    let (sol, _) = solve_lenient(a, b, zero);
    for (r, row) in a.iter().enumerate() {
        let mut acc = b[r].neg();
        for (c, coeff) in row.iter().enumerate() {
            acc = acc.add(&coeff.mul(&sol.particular[c]));
        }
        if !zero(&acc) {
            return r;
        }
    }
    0
}

/// Like [`solve`], but on an inconsistent system still returns the
/// pivot-row solution (free variables zero) along with `false`.
pub fn solve_lenient(
    a: &[Vec<ScalarExpr>],
    b: &[ScalarExpr],
    zero: &mut impl FnMut(&ScalarExpr) -> bool,
) -> (LinearSolution, bool) {
    let rows = a.len();
    assert_eq!(rows, b.len());
    let cols = a.first().map(|r| r.len()).unwrap_or(0);
    let mut m: Vec<Vec<ScalarExpr>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();

    let mut pivot_cols = Vec::new();
    let mut pivot_row = 0;
    for col in 0..cols {
        let found = (pivot_row..rows).find(|&r| !zero(&m[r][col]));
        let Some(r) = found else { continue };
        m.swap(pivot_row, r);
        let inv = ScalarExpr::one()
            .div(&m[pivot_row][col])
            .expect("pivot passed the zero test");
        for c in col..=cols {
            m[pivot_row][c] = m[pivot_row][c].mul(&inv);
        }
        for r2 in 0..rows {
            if r2 == pivot_row {
                continue;
            }
            let factor = m[r2][col].clone();
            if zero(&factor) {
                m[r2][col] = ScalarExpr::zero();
                continue;
            }
            for c in col..=cols {
                let delta = factor.mul(&m[pivot_row][c]);
                m[r2][c] = m[r2][c].sub(&delta);
            }
        }
        pivot_cols.push(col);
        pivot_row += 1;
        if pivot_row == rows {
            break;
        }
    }

    // consistency of zero rows
    let mut consistent = true;
    for r in pivot_row..rows {
        if !zero(&m[r][cols]) {
            consistent = false;
        }
    }

    let mut particular = vec![ScalarExpr::zero(); cols];
    for (pr, &pc) in pivot_cols.iter().enumerate() {
        particular[pc] = m[pr][cols].clone();
    }
    let mut nullspace = Vec::new();
    for free in 0..cols {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![ScalarExpr::zero(); cols];
        v[free] = ScalarExpr::one();
        for (pr, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = m[pr][free].neg();
        }
        nullspace.push(v);
    }
    (
        LinearSolution {
            particular,
            nullspace,
            pivot_cols,
        },
        consistent,
    )
}

/// Rank of an exact rational matrix.
pub fn rank_rat(mut m: Vec<Vec<crate::expr::poly::Rat>>) -> usize {
    use num_traits::Zero;
    let rows = m.len();
    let cols = m.first().map(|r| r.len()).unwrap_or(0);
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank][col].clone();
        for r in rank + 1..rows {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &pivot;
            for c in col..cols {
                let delta = &factor * &m[rank][c];
                m[r][c] -= delta;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Inverse of a square matrix; `None` if singular under the zero test.
pub fn invert(
    a: &[Vec<ScalarExpr>],
    zero: &mut impl FnMut(&ScalarExpr) -> bool,
) -> Option<Vec<Vec<ScalarExpr>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<ScalarExpr> = (0..n)
            .map(|i| {
                if i == j {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::zero()
                }
            })
            .collect();
        let sol = solve(a, &e, zero).ok()?;
        if sol.pivot_cols.len() < n {
            return None;
        }
        cols.push(sol.particular);
    }
    let mut inv = vec![vec![ScalarExpr::zero(); n]; n];
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            inv[i][j] = v;
        }
    }
    Some(inv)
}

/// Determinant by fraction-producing elimination with exact pivots.
pub fn det(a: &[Vec<ScalarExpr>], zero: &mut impl FnMut(&ScalarExpr) -> bool) -> ScalarExpr {
    let n = a.len();
    if n == 0 {
        return ScalarExpr::one();
    }
    let mut m: Vec<Vec<ScalarExpr>> = a.to_vec();
    let mut det = ScalarExpr::one();
    for col in 0..n {
        let found = (col..n).find(|&r| !zero(&m[r][col]));
        let Some(r) = found else {
            return ScalarExpr::zero();
        };
        if r != col {
            m.swap(r, col);
            det = det.neg();
        }
        let pivot = m[col][col].clone();
        det = det.mul(&pivot);
        let inv = ScalarExpr::one().div(&pivot).expect("nonzero pivot");
        for r2 in col + 1..n {
            let factor = m[r2][col].mul(&inv);
            if zero(&factor) {
                continue;
            }
            for c in col..n {
                let delta = factor.mul(&m[col][c]);
                m[r2][c] = m[r2][c].sub(&delta);
            }
        }
    }
    det
}

/// Structural zero test: exact on the rational fragment.
pub fn structural_zero(e: &ScalarExpr) -> bool {
    e.is_zero()
}

/// Dense partial-pivoting solve for the small per-node systems.
/// Overwrites its inputs; `None` when the pivot drops below `tol`.
pub fn solve_f64(a: &mut [Vec<f64>], b: &mut [f64], tol: f64) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let mut best = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[best][col].abs() {
                best = r;
            }
        }
        if a[best][col].abs() <= tol {
            return None;
        }
        a.swap(col, best);
        b.swap(col, best);
        let pivot = a[col][col];
        for r in col + 1..n {
            let factor = a[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    Some(x)
}

/// Pairwise (cascade) summation: deterministic and accurate reductions for
/// the grid quadratures.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}
