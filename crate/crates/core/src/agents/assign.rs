/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
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
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Gated one-to-one matching of a rectangular cost matrix: pairs with cost
/// above `gate` are forbidden. Among all admissible matchings it picks one
/// with the most pairs, and among those the smallest total cost. Returned
/// pairs are `(row, col)` sorted by row.
pub fn gated_assignment(cost: &[Vec<f64>], gate: f64) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    // Any forbidden or dummy pair costs more than every admissible matching
    // taken together, so the optimum first maximizes admissible pairs.
    let big = (n as f64 + 1.0) * (gate.max(0.0) + 1.0);
    let square: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match cost.get(i).and_then(|r| r.get(j)) {
                    Some(&c) if c <= gate => c,
                    _ => big,
                })
                .collect()
        })
        .collect();
    hungarian(&square)
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < rows && j < cols && cost[i][j] <= gate)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hungarian_small_known_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = hungarian(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn gating_prefers_more_pairs_over_lower_cost() {
        // matching (0,0) alone costs 0.1; (0,1)+(1,0) costs 3.8 but has two pairs
        let cost = vec![vec![0.1, 1.9], vec![1.9, 5.0]];
        assert_eq!(gated_assignment(&cost, 2.0), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn everything_gated_out_gives_nothing() {
        let cost = vec![vec![3.0, 4.0], vec![5.0, 6.0]];
        assert!(gated_assignment(&cost, 2.0).is_empty());
        assert!(gated_assignment(&[], 2.0).is_empty());
    }
}
