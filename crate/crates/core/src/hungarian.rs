//! Minimum-cost assignment (Hungarian algorithm, O(n²m) potentials form).
//!
//! Used by the tracker to pair tracks with observations under Mahalanobis
//! costs. Costs must be finite; gating is the caller's job (assign first,
//! dissolve over-gate pairs afterwards).

/// Solves min-cost assignment on an `n × m` cost matrix.
///
/// Returns, for each row, the column assigned to it (`None` when `n > m`
/// leaves the row unassigned). When `n ≤ m` every row is assigned. The
/// summed cost over assigned pairs is the global minimum.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(cost.iter().all(|row| row.len() == m), "cost matrix must be rectangular");
    assert!(
        cost.iter().flatten().all(|c| c.is_finite()),
        "assignment costs must be finite"
    );
    if m == 0 {
        return vec![None; n];
    }
    if n > m {
        // Solve the transpose and invert the mapping.
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        let by_col = min_cost_assignment(&t);
        let mut out = vec![None; n];
        for (col, row) in by_col.into_iter().enumerate() {
            if let Some(r) = row {
                out[r] = Some(col);
            }
        }
        return out;
    }

    // Potentials method, 1-indexed; p[j] is the row matched to column j.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| cost[i][j]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive optimum: tries every injective row → column mapping that
    /// assigns min(n, m) pairs (each row either takes an unused column or is
    /// skipped; incomplete mappings are discarded at the leaves).
    fn brute_force_cost(cost: &[Vec<f64>]) -> f64 {
        fn rec(
            cost: &[Vec<f64>],
            row: usize,
            used: &mut [bool],
            assigned: usize,
            acc: f64,
            best: &mut f64,
        ) {
            let (n, m) = (cost.len(), used.len());
            if row == n {
                if assigned == n.min(m) && acc < *best {
                    *best = acc;
                }
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, assigned + 1, acc + cost[row][j], best);
                    used[j] = false;
                }
            }
            rec(cost, row + 1, used, assigned, acc, best);
        }
        let mut best = f64::INFINITY;
        let m = cost[0].len();
        rec(cost, 0, &mut vec![false; m], 0, 0.0, &mut best);
        best
    }

    #[test]
    fn two_by_two_prefers_diagonal() {
        let cost = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let a = min_cost_assignment(&cost);
        assert_eq!(a, vec![Some(0), Some(1)]);
        assert_eq!(assignment_cost(&cost, &a), 2.0);
    }

    #[test]
    fn single_pair() {
        assert_eq!(min_cost_assignment(&[vec![3.5]]), vec![Some(0)]);
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(min_cost_assignment(&[]), Vec::<Option<usize>>::new());
        assert_eq!(min_cost_assignment(&[vec![], vec![]]), vec![None, None]);
    }

    #[test]
    fn matches_brute_force_square_and_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..200 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let cost: Vec<Vec<f64>> =
                (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
            let a = min_cost_assignment(&cost);
            // Validity: injective, correct count.
            let assigned: Vec<usize> = a.iter().flatten().copied().collect();
            let mut dedup = assigned.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), assigned.len(), "duplicate column, trial {trial}");
            assert_eq!(assigned.len(), n.min(m), "assignment count, trial {trial}");
            // Optimality.
            let total = assignment_cost(&cost, &a);
            let best = brute_force_cost(&cost);
            assert!(
                (total - best).abs() < 1e-9,
                "trial {trial}: hungarian {total} vs brute force {best}"
            );
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cost: Vec<Vec<f64>> =
            (0..5).map(|_| (0..5).map(|_| rng.gen_range(0.0..4.0)).collect()).collect();
        assert_eq!(min_cost_assignment(&cost), min_cost_assignment(&cost));
    }
}
