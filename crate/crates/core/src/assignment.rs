//! Optimal one-to-one assignment with forbidden pairs.

/// Result of a gated assignment. Pairs are `(row, col)` sorted by row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    /// Sum of the costs of the matched pairs, accumulated in row order.
    pub fn total_cost(&self, cost: &[Vec<Option<f64>>]) -> f64 {
        self.pairs
            .iter()
            .map(|&(r, c)| cost[r][c].expect("matched pair is allowed"))
            .sum()
    }
}

/// Minimum-cost assignment of every row of a rectangular matrix with
/// `rows <= cols` (Kuhn-Munkres with potentials, O(rows^2 * cols)).
/// Returns the column chosen for each row.
fn hungarian(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    debug_assert!(n <= cols);
    let m = cols;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // p[j]: row (1-based) assigned to column j; 0 = free
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
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
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Optimal matching over allowed pairs (`Some(cost)`); `None` marks a
/// forbidden pair.
///
/// The matching first maximizes the number of matched pairs and then
/// minimizes their total cost. Forbidden entries are given a penalty larger
/// than any achievable total of allowed costs, so every penalized pair the
/// solver is forced to use is simply dropped afterwards. Results are
/// deterministic for a given matrix.
pub fn solve(cost: &[Vec<Option<f64>>]) -> Matching {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    if rows == 0 || cols == 0 {
        return Matching {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        };
    }

    let max_allowed = cost
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    let penalty = (max_allowed + 1.0) * (rows.min(cols) as f64 + 1.0);

    let transpose = rows > cols;
    let (n, m) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let dense: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let c = if transpose { cost[j][i] } else { cost[i][j] };
                    c.unwrap_or(penalty)
                })
                .collect()
        })
        .collect();
    let chosen = hungarian(&dense, m);

    let mut pairs: Vec<(usize, usize)> = chosen
        .iter()
        .enumerate()
        .map(|(i, &j)| if transpose { (j, i) } else { (i, j) })
        .filter(|&(r, c)| cost[r][c].is_some())
        .collect();
    pairs.sort_unstable();

    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Matching {
        pairs,
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
    }
}

/// Gates a dense cost matrix: entries above `gate` (or non-finite) become
/// forbidden.
pub fn gate_costs(cost: &[Vec<f64>], gate: f64) -> Vec<Vec<Option<f64>>> {
    cost.iter()
        .map(|row| {
            row.iter()
                .map(|&c| (c.is_finite() && c <= gate).then_some(c))
                .collect()
        })
        .collect()
}
