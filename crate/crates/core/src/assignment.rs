//! Minimum-cost bipartite assignment (Hungarian method with potentials).

use crate::error::{Error, Result};

/// Solves the rectangular assignment problem on a row-major `rows × cols`
/// cost matrix.
///
/// Returns, for every row, the column assigned to it. When `rows > cols`
/// some rows stay unassigned (`None`); otherwise every row gets a distinct
/// column and the total cost is minimal. Runs in `O(n³)` with
/// `n = max(rows, cols)`.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Vec<Option<usize>>> {
    if cost.len() != rows * cols {
        return Err(Error::Shape {
            op: "hungarian",
            lhs: vec![cost.len()],
            rhs: vec![rows, cols],
        });
    }
    if let Some(bad) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("assignment cost {bad}")));
    }
    if rows == 0 || cols == 0 {
        return Ok(vec![None; rows]);
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| if i < rows && j < cols { cost[i * cols + j] } else { 0.0 };

    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0f64; n + 1];
    let mut v = vec![0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = owner[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    Ok(out)
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &[f64], cols: usize, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| cost[i * cols + j]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &[f64], n: usize) -> f64 {
        fn go(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + go(cost, n, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, n, 0, &mut vec![false; n])
    }

    #[test]
    fn small_examples() {
        let a = hungarian(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        assert_eq!(a, vec![Some(1), Some(0)]);
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&c, 3, 3).unwrap();
        assert_eq!(assignment_cost(&c, 3, &a), 5.0);
        assert_eq!(assignment_cost(&c, 3, &a), brute_force(&c, 3));
    }

    #[test]
    fn rectangular() {
        // Two rows, three columns.
        let a = hungarian(&[5.0, 1.0, 9.0, 2.0, 8.0, 0.5], 2, 3).unwrap();
        assert_eq!(a, vec![Some(1), Some(2)]);
        // Three rows, one column: the cheapest row wins.
        let a = hungarian(&[3.0, 1.0, 2.0], 3, 1).unwrap();
        assert_eq!(a, vec![None, Some(0), None]);
        assert_eq!(hungarian(&[], 0, 4).unwrap(), Vec::<Option<usize>>::new());
        assert_eq!(hungarian(&[], 2, 0).unwrap(), vec![None, None]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[1.0, f64::NAN], 1, 2).is_err());
        assert!(hungarian(&[1.0], 1, 2).is_err());
    }

    #[test]
    fn matches_brute_force_on_pseudo_random_matrices() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 1000) as f64 / 37.0 - 8.0
        };
        for n in 1..=6 {
            for _ in 0..30 {
                let c: Vec<f64> = (0..n * n).map(|_| next()).collect();
                let a = hungarian(&c, n, n).unwrap();
                let mut seen = vec![false; n];
                for j in a.iter().map(|j| j.unwrap()) {
                    assert!(!seen[j]);
                    seen[j] = true;
                }
                assert!((assignment_cost(&c, n, &a) - brute_force(&c, n)).abs() < 1e-9);
            }
        }
    }
}
