//! Maximum-weight bipartite assignment.
//!
//! `solve_max` runs the Hungarian method (shortest augmenting paths with
//! potentials) on the negated weights, padded to a square matrix. Among all
//! optimal matchings it returns the one whose row-sorted pair list is
//! lexicographically smallest. Optimal matchings are exactly the perfect
//! matchings that only use edges tight under the final dual potentials, so
//! the tie-break is a search within that subgraph.

use crate::error::{Error, Result};

/// Dense `rows × cols` matrix of similarity weights, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::arg(format!(
                "{} weights given for a {rows}x{cols} matrix",
                weights.len()
            )));
        }
        Ok(WeightMatrix {
            rows,
            cols,
            weights,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut weights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                weights.push(f(r, c));
            }
        }
        WeightMatrix {
            rows,
            cols,
            weights,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::arg("ragged weight matrix"));
        }
        WeightMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    fn check_finite(&self) -> Result<()> {
        match self.weights.iter().position(|w| !w.is_finite()) {
            Some(i) => Err(Error::arg(format!(
                "non-finite weight {} at ({}, {})",
                self.weights[i],
                i / self.cols,
                i % self.cols
            ))),
            None => Ok(()),
        }
    }

    /// Tolerance under which two totals are considered tied.
    fn tie_tolerance(&self) -> f64 {
        let scale = self.weights.iter().fold(1.0_f64, |m, w| m.max(w.abs()));
        1e-10 * scale
    }

    fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Matched `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Assignment {
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

/// Optimal maximum-weight matching of cardinality `min(rows, cols)`.
pub fn solve_max(w: &WeightMatrix) -> Result<Assignment> {
    w.check_finite()?;
    let n = w.rows.max(w.cols);
    if w.rows == 0 || w.cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total: 0.0,
        });
    }
    // Square min-cost matrix; padding rows/columns cost nothing.
    let cost = |r: usize, c: usize| {
        if r < w.rows && c < w.cols {
            -w.get(r, c)
        } else {
            0.0
        }
    };
    let (u, v, col_of_row) = hungarian_min(n, cost);

    let tol = w.tie_tolerance();
    let tight = |r: usize, c: usize| cost(r, c) - u[r] - v[c] <= tol;
    let col_of_row = lexicographic_refine(n, w.rows.min(n), col_of_row, tight);

    let pairs: Vec<(usize, usize)> = col_of_row
        .iter()
        .enumerate()
        .take(w.rows)
        .filter(|&(_, &c)| c < w.cols)
        .map(|(r, &c)| (r, c))
        .collect();
    let total = w.total(&pairs);
    Ok(Assignment { pairs, total })
}

/// Shortest-augmenting-path Hungarian method on an `n × n` cost matrix.
/// Returns row potentials, column potentials and the column of each row.
fn hungarian_min(n: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual source column.
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
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), col_of_row)
}

/// Re-routes a perfect matching within the tight subgraph so that rows
/// `0..rows`, in order, each take the smallest column still compatible with
/// a perfect matching of the remaining rows.
fn lexicographic_refine(
    n: usize,
    rows: usize,
    mut col_of_row: Vec<usize>,
    tight: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut row_of_col = vec![0usize; n];
    for (r, &c) in col_of_row.iter().enumerate() {
        row_of_col[c] = r;
    }
    let mut fixed = vec![false; n];
    for i in 0..rows {
        let target = col_of_row[i];
        // Rows that can shift along a chain of tight edges ending in
        // `target`; `next[r]` is the row whose column `r` would take.
        let mut next: Vec<Option<Option<usize>>> = vec![None; n];
        let mut queue = std::collections::VecDeque::new();
        for r in 0..n {
            if r != i && !fixed[r] && tight(r, target) {
                next[r] = Some(None);
                queue.push_back(r);
            }
        }
        while let Some(r) = queue.pop_front() {
            let col = col_of_row[r];
            for r2 in 0..n {
                if r2 != i && !fixed[r2] && next[r2].is_none() && tight(r2, col) {
                    next[r2] = Some(Some(r));
                    queue.push_back(r2);
                }
            }
        }
        let best = (0..target).find(|&c| {
            let holder = row_of_col[c];
            !fixed[holder] && next[holder].is_some() && tight(i, c)
        });
        if let Some(c) = best {
            let mut chain = vec![row_of_col[c]];
            while let Some(Some(r)) = next[*chain.last().unwrap()] {
                chain.push(r);
            }
            let old: Vec<usize> = chain.iter().map(|&r| col_of_row[r]).collect();
            col_of_row[i] = c;
            for k in 0..chain.len() {
                col_of_row[chain[k]] = if k + 1 < chain.len() {
                    old[k + 1]
                } else {
                    target
                };
            }
            for (r, &c) in col_of_row.iter().enumerate() {
                row_of_col[c] = r;
            }
        }
        fixed[i] = true;
    }
    col_of_row
}

/// Largest matrix side accepted by [`brute_max`].
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Exhaustive enumeration of all maximum-cardinality matchings, with the
/// same optimality and tie-break contract as [`solve_max`].
pub fn brute_max(w: &WeightMatrix) -> Result<Assignment> {
    w.check_finite()?;
    if w.rows.max(w.cols) > BRUTE_FORCE_LIMIT {
        return Err(Error::arg(format!(
            "brute force limited to {BRUTE_FORCE_LIMIT}x{BRUTE_FORCE_LIMIT}, got {}x{}",
            w.rows, w.cols
        )));
    }
    let transposed = w.rows > w.cols;
    let (small, large) = if transposed {
        (w.cols, w.rows)
    } else {
        (w.rows, w.cols)
    };

    let mut candidates: Vec<(Vec<(usize, usize)>, f64)> = Vec::new();
    let mut chosen = Vec::with_capacity(small);
    let mut used = vec![false; large];
    enumerate_injections(small, large, &mut chosen, &mut used, &mut |pick| {
        let mut pairs: Vec<(usize, usize)> = pick
            .iter()
            .enumerate()
            .map(|(s, &l)| if transposed { (l, s) } else { (s, l) })
            .collect();
        pairs.sort_unstable();
        let total = w.total(&pairs);
        candidates.push((pairs, total));
    });

    let best = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = w.tie_tolerance();
    let (pairs, total) = candidates
        .into_iter()
        .filter(|c| c.1 >= best - tol)
        .min_by(|a, b| a.0.cmp(&b.0))
        .unwrap_or((Vec::new(), 0.0));
    Ok(Assignment { pairs, total })
}

fn enumerate_injections(
    small: usize,
    large: usize,
    chosen: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == small {
        visit(chosen);
        return;
    }
    for l in 0..large {
        if !used[l] {
            used[l] = true;
            chosen.push(l);
            enumerate_injections(small, large, chosen, used, visit);
            chosen.pop();
            used[l] = false;
        }
    }
}
