//! Minimum-cost bipartite assignment (Hungarian algorithm, O(n^3) shortest
//! augmenting path with potentials).
//!
//! Costs must be finite; encode forbidden pairs with a large sentinel and
//! filter them from the result. Rows are processed in index order and column
//! scans run in index order, so ties resolve deterministically (all-equal
//! costs give the lexicographic diagonal).

/// Result of an assignment: per-row matched column, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<Option<usize>>,
    pub total_cost: f64,
}

/// Solves min-cost assignment on a dense `rows x cols` matrix. When rows
/// exceed columns every column is matched; otherwise every row is.
pub fn hungarian(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Assignment {
            row_to_col: vec![None; rows],
            total_cost: 0.0,
        };
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    debug_assert!(cost.iter().flatten().all(|c| c.is_finite()));

    if rows > cols {
        // transpose, solve, map back
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| cost[i][j]).collect())
            .collect();
        let solved = hungarian(&t);
        let mut row_to_col = vec![None; rows];
        for (j, assigned_row) in solved.row_to_col.iter().enumerate() {
            if let Some(i) = assigned_row {
                row_to_col[*i] = Some(j);
            }
        }
        return Assignment {
            row_to_col,
            total_cost: solved.total_cost,
        };
    }

    // 1-indexed potentials; p[j] is the row occupying column j (0 = free)
    let n = rows;
    let m = cols;
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; m + 1];
    let mut p = vec![0_usize; m + 1];
    let mut way = vec![0_usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; n];
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = Some(j - 1);
            total += cost[p[j] - 1][j - 1];
        }
    }
    Assignment {
        row_to_col,
        total_cost: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over all row-to-column injections.
    pub(crate) fn brute_force(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost[row][j], best);
                    used[j] = false;
                }
            }
        }
        assert!(rows <= cols);
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cols], 0.0, &mut best);
        best
    }

    #[test]
    fn diagonal_dominant_matrix_assigns_the_diagonal() {
        let cost = vec![
            vec![1.0, 10.0, 10.0],
            vec![10.0, 1.0, 10.0],
            vec![10.0, 10.0, 1.0],
        ];
        let a = hungarian(&cost);
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(a.total_cost, 3.0);
    }

    #[test]
    fn all_equal_costs_give_lexicographic_assignment() {
        let cost = vec![vec![2.5; 4]; 4];
        let a = hungarian(&cost);
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2), Some(3)]);
    }

    #[test]
    fn matches_brute_force_on_random_square_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for n in [5usize, 6] {
            for _ in 0..100 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.gen_range(0.0..100.0)).collect())
                    .collect();
                let a = hungarian(&cost);
                let best = brute_force(&cost);
                assert!(
                    (a.total_cost - best).abs() < 1e-9,
                    "{} vs {best}",
                    a.total_cost
                );
            }
        }
    }

    #[test]
    fn matches_brute_force_on_rectangular_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (r, c) in [(2, 5), (5, 2), (3, 6), (6, 3), (1, 4), (4, 1)] {
            for _ in 0..20 {
                let cost: Vec<Vec<f64>> = (0..r)
                    .map(|_| (0..c).map(|_| rng.gen_range(0.0..50.0)).collect())
                    .collect();
                let a = hungarian(&cost);
                let best = if r <= c {
                    brute_force(&cost)
                } else {
                    let t: Vec<Vec<f64>> = (0..c)
                        .map(|j| (0..r).map(|i| cost[i][j]).collect())
                        .collect();
                    brute_force(&t)
                };
                assert!((a.total_cost - best).abs() < 1e-9);
                let assigned = a.row_to_col.iter().flatten().count();
                assert_eq!(assigned, r.min(c));
            }
        }
    }

    #[test]
    fn empty_matrices_yield_empty_assignments() {
        assert_eq!(hungarian(&[]).row_to_col, Vec::<Option<usize>>::new());
        let no_cols: Vec<Vec<f64>> = vec![vec![], vec![]];
        assert_eq!(hungarian(&no_cols).row_to_col, vec![None, None]);
    }
}
