//! Exact solver for the square linear assignment problem.
//!
//! Shortest augmenting paths with row/column potentials (Hungarian method,
//! O(N³)), followed by a refinement pass that moves to the lexicographically
//! smallest permutation among all optimal ones.

use serde::{Deserialize, Serialize};

use super::CostMatrix;
use crate::error::{Error, Result};

/// Optimal permutation together with the dual certificate that proves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Row `i` is matched to column `permutation[i]`.
    pub permutation: Vec<usize>,
    /// `Σ_i c[i][permutation[i]]`.
    pub total_cost: f64,
    /// Row potentials `u` with `u_i + v_j <= c_ij`, equality on the matching.
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

pub fn solve_assignment(cost: &CostMatrix) -> Result<Assignment> {
    let n = cost.size();
    if cost.entries().iter().any(|c| !c.is_finite()) {
        return Err(Error::contract("cost matrix has non-finite entries"));
    }
    let (mut row_to_col, u, v) = hungarian(cost);

    let scale = cost.entries().iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tight_tol = 4.0 * n as f64 * f64::EPSILON * scale;
    lexicographic_refine(cost, &u, &v, tight_tol, &mut row_to_col);

    let total_cost = row_to_col.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok(Assignment {
        permutation: row_to_col,
        total_cost,
        row_potential: u,
        col_potential: v,
    })
}

/// Classic O(N³) potentials implementation, 1-based internally.
fn hungarian(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.size();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // col_match[j] = row matched to column j (1-based, 0 = free)
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
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
            for j in 0..=n {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_match[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Walks rows in order and, for each, switches to the smallest tight column
/// that still admits a perfect matching on the remaining tight subgraph.
///
/// Every optimal permutation lives on edges with zero reduced cost for any
/// optimal dual pair, so the search never leaves the optimal face.
fn lexicographic_refine(cost: &CostMatrix, u: &[f64], v: &[f64], tol: f64, row_to_col: &mut [usize]) {
    let n = row_to_col.len();
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cost.get(i, j) - u[i] - v[j] <= tol)
                .collect()
        })
        .collect();
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }

    for i in 0..n {
        let current = row_to_col[i];
        for &j in &tight[i] {
            if j == current {
                break;
            }
            let r = col_to_row[j];
            if r < i {
                continue;
            }
            // Rematch row r away from j, ending at the column i gives up.
            if let Some(path) = alternating_path(&tight, row_to_col, &col_to_row, r, j, current, i) {
                // path: sequence of (row, new column)
                for &(row, col) in &path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
    }
}

/// BFS over tight edges from `start_row` (which must leave `banned_col`) to
/// `target_col`, using only rows `> locked_upto`. Returns the reassignments.
fn alternating_path(
    tight: &[Vec<usize>],
    row_to_col: &[usize],
    col_to_row: &[usize],
    start_row: usize,
    banned_col: usize,
    target_col: usize,
    locked_upto: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = row_to_col.len();
    let mut reached = vec![false; n];
    // via_row[c] = row that takes column c on the path
    let mut via_row = vec![usize::MAX; n];
    reached[banned_col] = true;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start_row);
    let mut visited_row = vec![false; n];
    visited_row[start_row] = true;

    while let Some(row) = queue.pop_front() {
        for &c in &tight[row] {
            if reached[c] {
                continue;
            }
            let owner = col_to_row[c];
            if c != target_col && owner <= locked_upto {
                continue;
            }
            reached[c] = true;
            via_row[c] = row;
            if c == target_col {
                let mut path = Vec::new();
                let mut col = c;
                loop {
                    let r = via_row[col];
                    path.push((r, col));
                    if r == start_row {
                        return Some(path);
                    }
                    col = row_to_col[r];
                }
            }
            if !visited_row[owner] {
                visited_row[owner] = true;
                queue.push_back(owner);
            }
        }
    }
    None
}
