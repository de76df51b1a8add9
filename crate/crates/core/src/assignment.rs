//! Minimum-cost perfect assignment on dense square `f64` cost matrices.
//!
//! Shortest-augmenting-path Hungarian method with row/column potentials,
//! `O(n^3)`. Costs must be finite; callers map forbidden pairs to a large
//! finite penalty first (see [`finite_costs`]).

/// Returns `assignment[row] = column` minimizing the total cost.
/// `costs` is row-major `n x n`.
pub fn min_cost_assignment(costs: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(costs.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    let cost = |r: usize, c: usize| costs[(r - 1) * n + (c - 1)];
    // 1-based; index 0 is the virtual source row/column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
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
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_owner[j] - 1] = j - 1;
    }
    assignment
}

/// Replaces non-finite costs (`+inf`, NaN) with a penalty larger than the
/// total of any assignment that avoids them.
pub fn finite_costs(costs: &[f64], n: usize) -> Vec<f64> {
    let finite = costs.iter().copied().filter(|c| c.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
    if lo > hi {
        // Nothing finite: every assignment is equally impossible.
        return vec![0.0; costs.len()];
    }
    let penalty = hi + (hi - lo + 1.0) * (n as f64 + 1.0);
    costs.iter().map(|&c| if c.is_finite() { c } else { penalty }).collect()
}
