//! Reference solvers for checking the production transport code.
//!
//! Neither solver shares logic with [`crate::transport`]: the brute-force
//! solver enumerates vertices of the transport polytope, the Hungarian solver
//! works on the assignment problem with dual potentials.

use crate::error::{Error, Result};
use crate::transport::CostMatrix;

/// Largest side accepted by [`transport_lp_bruteforce`].
pub const BRUTEFORCE_MAX_SIDE: usize = 8;

/// Minimum transport cost over the polytope `{pi >= 0 : pi 1 = a, pi^T 1 = b}`
/// by exhaustive enumeration of its vertices.
///
/// Every vertex has a spanning-forest support, and any such forest can be
/// dismantled by repeatedly removing a leaf line (a row or column served by a
/// single cell, which then carries that line's whole remaining mass). The
/// search enumerates these leaf removals, removing at each step the
/// lowest-indexed leaf of the final tree, so each basis is generated once.
/// Branches whose trivially-bounded completion cannot beat the incumbent are
/// skipped.
pub fn transport_lp_bruteforce(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<f64> {
    let (n, m) = (cost.rows(), cost.cols());
    if n > BRUTEFORCE_MAX_SIDE || m > BRUTEFORCE_MAX_SIDE {
        return Err(Error::input(format!(
            "brute-force oracle is capped at {BRUTEFORCE_MAX_SIDE}x{BRUTEFORCE_MAX_SIDE}, got {n}x{m}"
        )));
    }
    if a.len() != n || b.len() != m {
        return Err(Error::input("marginal lengths do not match the cost matrix"));
    }
    for (name, w) in [("a", a), ("b", b)] {
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::input(format!("marginal {name} has a negative or non-finite weight")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("marginal {name} sums to {total}, expected 1")));
        }
    }
    let mut amount = [0.0; 2 * BRUTEFORCE_MAX_SIDE];
    amount[..n].copy_from_slice(a);
    amount[n..n + m].copy_from_slice(b);
    let mut search = Enumeration { cost, n, amount, best: f64::INFINITY };
    let all = (1u32 << (n + m)) - 1;
    search.descend(all, 0, 0.0);
    Ok(search.best)
}

struct Enumeration<'a> {
    cost: &'a CostMatrix,
    n: usize,
    amount: [f64; 2 * BRUTEFORCE_MAX_SIDE],
    best: f64,
}

const PEEL_TOL: f64 = 1e-14;

impl Enumeration<'_> {
    fn is_row(&self, line: usize) -> bool {
        line < self.n
    }

    fn cell(&self, x: usize, y: usize) -> f64 {
        if x < self.n {
            self.cost.get(x, y - self.n)
        } else {
            self.cost.get(y, x - self.n)
        }
    }

    fn lower_bound(&self, remaining: u32) -> f64 {
        let rows = self.n;
        let mut by_rows = 0.0;
        let mut by_cols = 0.0;
        for line in lines(remaining) {
            let mut cheapest = f64::INFINITY;
            for other in lines(remaining) {
                if self.is_row(other) != self.is_row(line) {
                    cheapest = cheapest.min(self.cell(line, other));
                }
            }
            if line < rows {
                by_rows += self.amount[line] * cheapest;
            } else {
                by_cols += self.amount[line] * cheapest;
            }
        }
        by_rows.max(by_cols)
    }

    /// `forbidden`: lines that must still receive a peeled neighbour before
    /// they may be peeled themselves (they were not leaves when a higher line
    /// was removed).
    fn descend(&mut self, remaining: u32, forbidden: u32, acc: f64) {
        if remaining.count_ones() == 2 {
            if remaining & forbidden != 0 {
                return;
            }
            let x = remaining.trailing_zeros() as usize;
            let y = 31 - remaining.leading_zeros() as usize;
            if self.is_row(x) == self.is_row(y) {
                return;
            }
            let total = acc + self.cell(x, y) * self.amount[x].max(self.amount[y]);
            self.best = self.best.min(total);
            return;
        }
        if acc + self.lower_bound(remaining) >= self.best {
            return;
        }
        let row_mask = (1u32 << self.n) - 1;
        let rows_left = (remaining & row_mask).count_ones();
        let cols_left = (remaining & !row_mask).count_ones();
        for leaf in lines(remaining) {
            if forbidden & (1 << leaf) != 0 {
                continue;
            }
            let side_left = if self.is_row(leaf) { rows_left } else { cols_left };
            if side_left == 1 {
                continue;
            }
            let lower = remaining & ((1u32 << leaf) - 1);
            for partner in lines(remaining) {
                if self.is_row(partner) == self.is_row(leaf) {
                    continue;
                }
                let mass = self.amount[leaf];
                let room = self.amount[partner];
                if mass > room + PEEL_TOL {
                    continue;
                }
                let next_forbidden = (forbidden | lower) & !(1 << partner);
                self.amount[partner] = (room - mass).max(0.0);
                self.descend(
                    remaining & !(1 << leaf),
                    next_forbidden,
                    acc + self.cell(leaf, partner) * mass,
                );
                self.amount[partner] = room;
            }
        }
    }
}

fn lines(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| mask & (1 << i) != 0)
}

/// Optimal assignment for a square cost matrix: returns the minimal
/// `sum_i cost[i][perm[i]]` and the permutation attaining it.
pub fn hungarian(cost: &CostMatrix) -> Result<(f64, Vec<usize>)> {
    if !cost.is_square() {
        return Err(Error::input(format!(
            "assignment needs a square matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    let n = cost.rows();
    // Potentials u (rows) and v (columns), 1-based with a sentinel column 0.
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
                let reduced = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
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
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    let value = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok((value, perm))
}
