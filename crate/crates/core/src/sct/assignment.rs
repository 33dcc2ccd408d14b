//! Rectangular linear assignment (Hungarian method with row/column
//! potentials, shortest augmenting paths).

use crate::error::{Error, Result};

/// Cost used to mark a pair as forbidden. Any solution pairing through it is
/// reported as unmatched by [`min_cost_matching`].
pub const FORBIDDEN_COST: f64 = 1e5;

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged cost matrix".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols: if rows.is_empty() { 0 } else { cols },
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }

    fn from_matches(rows: usize, cols: usize, mut matches: Vec<(usize, usize)>) -> Self {
        matches.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &matches {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            matches,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }
}

/// Minimum-total-cost assignment matching `min(rows, cols)` pairs.
///
/// Deterministic: when several columns tie during the augmenting-path search
/// the lowest index wins.
pub fn solve_assignment(cost: &CostMatrix) -> Result<Assignment> {
    if cost.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("assignment costs must be finite".into()));
    }
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(Assignment::from_matches(cost.rows, cost.cols, Vec::new()));
    }
    let matches = if cost.rows <= cost.cols {
        hungarian(cost)
    } else {
        hungarian(&cost.transposed())
            .into_iter()
            .map(|(r, c)| (c, r))
            .collect()
    };
    Ok(Assignment::from_matches(cost.rows, cost.cols, matches))
}

/// Solves the assignment, then drops pairs whose cost exceeds `max_cost`.
pub fn min_cost_matching(cost: &CostMatrix, max_cost: f64) -> Result<Assignment> {
    let full = solve_assignment(cost)?;
    let kept = full
        .matches
        .into_iter()
        .filter(|&(r, c)| cost.get(r, c) <= max_cost)
        .collect();
    Ok(Assignment::from_matches(cost.rows, cost.cols, kept))
}

/// Requires `rows <= cols`. Potentials `u`, `v` are 1-based with slot 0 as
/// the virtual source.
fn hungarian(cost: &CostMatrix) -> Vec<(usize, usize)> {
    let n = cost.rows;
    let m = cost.cols;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // col_owner[j] = row (1-based) assigned to column j, 0 when free
    let mut col_owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
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

    (1..=m)
        .filter(|&j| col_owner[j] != 0)
        .map(|j| (col_owner[j] - 1, j - 1))
        .collect()
}
