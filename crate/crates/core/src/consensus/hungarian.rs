//! Maximum-weight perfect matching on a square integer matrix.

/// Solves the assignment problem for `weights` (row-major `k × k`),
/// maximizing `Σ weights[row][col(row)]`. Returns `(col_of_row, total)`.
///
/// Shortest augmenting path with row/column potentials, O(k³).
pub fn max_weight_matching(weights: &[i64], k: usize) -> (Vec<usize>, i64) {
    assert_eq!(weights.len(), k * k, "weights must be k×k");
    if k == 0 {
        return (Vec::new(), 0);
    }
    let max = weights.iter().copied().max().unwrap_or(0);
    // minimize cost = max - weight (all non-negative)
    let cost = |r: usize, c: usize| max - weights[r * k + c];

    // 1-based arrays; index 0 is the virtual column
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut row_of_col = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![i64::MAX; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = i64::MAX;
            let mut col1 = 0;
            for c in 1..=k {
                if used[c] {
                    continue;
                }
                let cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=k {
                if used[c] {
                    u[row_of_col[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; k];
    for c in 1..=k {
        col_of_row[row_of_col[c] - 1] = c - 1;
    }
    let total = (0..k).map(|r| weights[r * k + col_of_row[r]]).sum();
    (col_of_row, total)
}

/// Among all maximum-weight matchings, the one whose `col_of_row` sequence
/// is lexicographically smallest.
pub fn lexicographic_max_matching(weights: &[i64], k: usize) -> (Vec<usize>, i64) {
    let (_, best) = max_weight_matching(weights, k);
    let mut rows: Vec<usize> = (0..k).collect();
    let mut cols: Vec<usize> = (0..k).collect();
    let mut col_of_row = vec![0; k];
    let mut needed = best;
    for r in 0..k {
        rows.retain(|&x| x != r);
        let mut fixed = false;
        for &c in &cols {
            let rest_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let sub: Vec<i64> =
                rows.iter().flat_map(|&rr| rest_cols.iter().map(move |&cc| weights[rr * k + cc])).collect();
            let (_, rest) = max_weight_matching(&sub, rows.len());
            if weights[r * k + c] + rest == needed {
                col_of_row[r] = c;
                needed -= weights[r * k + c];
                fixed = true;
                break;
            }
        }
        assert!(fixed, "some column must extend an optimal matching");
        cols.retain(|&x| x != col_of_row[r]);
    }
    (col_of_row, best)
}
